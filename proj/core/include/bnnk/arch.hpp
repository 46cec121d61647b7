#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bnnk/kernel.hpp"
#include "bnnk/warp.hpp"

namespace bnnk {

enum class ActivationKind { ReLU, LeakyReLU, ERF, TanH, Cosine, RBF };

/// Hidden-unit nonlinearity. RBF units compute exp(-||z - c||^2 / (2 sigma2_g))
/// with centres c playing the role of first-layer weights (so the centre
/// prior variance is the layer's weight variance) and no bias.
struct Activation {
  ActivationKind kind = ActivationKind::ReLU;
  double slope = 0.2;     // LeakyReLU only
  double sigma2_g = 1.0;  // RBF only

  static Activation relu() { return {}; }
  static Activation leaky_relu(double slope);
  static Activation erf() { return {ActivationKind::ERF}; }
  static Activation tanh() { return {ActivationKind::TanH}; }
  static Activation cosine() { return {ActivationKind::Cosine}; }
  static Activation rbf(double sigma2_g);

  void validate() const;
  std::string name() const;
  bool has_bias() const { return kind != ActivationKind::RBF; }
  /// Pointwise value and derivative; not meaningful for RBF units.
  double operator()(double a) const;
  double derivative(double a) const;

  nlohmann::json to_json() const;
  static Activation from_json(const nlohmann::json& j);
};

/// One fully connected hidden layer. Variances are per-weight (no width scaling).
struct LayerSpec {
  Activation activation;
  std::size_t width = 50;
  double sigma2_w = 1.0;
  double sigma2_b = 1.0;
};

enum class NodeKind { Basic, Deep, OutputSum, OutputProduct, HiddenMul, HiddenAdd };

std::string to_string(NodeKind kind);

/// Finite-width architecture tree.
///
/// Feature nodes (Basic, Deep, HiddenMul, HiddenAdd) produce a vector of
/// hidden units; when a feature node is the root or a child of an output
/// combinator it also owns an output layer with per-weight variance
/// output_variance() / width and an optional output bias. OutputSum and
/// OutputProduct combine the outputs of independent sub-networks.
///
/// Basic and Deep nodes first select `input_dims` from the ambient input
/// (empty selects everything), then apply `warp` if present.
struct ArchSpec {
  NodeKind kind = NodeKind::Basic;
  std::size_t input_dim = 1;
  std::vector<std::size_t> input_dims;
  std::optional<WarpSpec> warp;

  // Basic
  Activation activation;
  PriorSpec priors;
  std::size_t width = 50;

  // Deep
  std::vector<LayerSpec> layers;

  // Deep, HiddenMul, HiddenAdd: output weight variance after width scaling.
  double sigma2_w2 = 1.0;

  std::vector<ArchSpec> children;

  double sigma2_b_out = 0.0;
  std::size_t n_outputs = 1;

  bool is_feature() const;
  bool is_output_combinator() const { return kind == NodeKind::OutputSum || kind == NodeKind::OutputProduct; }
  /// Number of hidden units produced by a feature node.
  std::size_t hidden_width() const;
  double output_variance() const;
  /// Layers of a Basic/Deep node; Basic expands to its single layer.
  std::vector<LayerSpec> feature_layers() const;
  /// Dimension seen by the first layer after selection and warping.
  std::size_t transformed_dim() const;
  /// True when every feature block in the tree has exactly one hidden layer.
  bool single_layer() const;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  nlohmann::json to_json() const;
  static ArchSpec from_json(const nlohmann::json& j);
};

ArchSpec basic(Activation activation, PriorSpec priors, std::size_t width, std::size_t input_dim = 1);
ArchSpec deep(std::vector<LayerSpec> layers, double sigma2_w2, std::size_t input_dim = 1);
ArchSpec output_sum(std::vector<ArchSpec> children);
ArchSpec output_product(std::vector<ArchSpec> children);
ArchSpec hidden_mul(std::vector<ArchSpec> children, double sigma2_w2);
ArchSpec hidden_add(std::vector<ArchSpec> children, double sigma2_w2);
/// Returns `arch` with every hidden width set to `width` (all layers of Deep nodes included).
ArchSpec with_width(ArchSpec arch, std::size_t width);

/// Infinite-width kernel of a single-hidden-layer tree, assembled from the
/// analytic leaves with kernel_add / kernel_mul / hidden_add_kernel /
/// kernel_warp / kernel_project. Throws std::invalid_argument for Deep nodes,
/// OutputProduct, and activations without a closed form (LeakyReLU, TanH).
Kernel equivalent_kernel(const ArchSpec& arch);

/// E[psi(x)] of a feature node's hidden unit (unit output variance).
MeanFunction hidden_unit_mean(const ArchSpec& feature_node);

}  // namespace bnnk
