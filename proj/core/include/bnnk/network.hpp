#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bnnk/arch.hpp"
#include "bnnk/rng.hpp"

namespace bnnk {

/// One concrete draw of every weight and bias of an architecture, stored as a
/// flat vector in the order given by Network::blocks().
struct ParamSet {
  Eigen::VectorXd values;
};

/// Compiled architecture: parameter layout, priors, batched forward pass and
/// reverse-mode gradients. Immutable after construction.
///
/// Inputs are passed column-wise: X is (input_dim x batch) and outputs are
/// (n_outputs x batch).
class Network {
 public:
  struct Block {
    std::string name;
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    double variance = 0.0;
  };

  explicit Network(ArchSpec spec);

  const ArchSpec& spec() const { return spec_; }
  Eigen::Index num_params() const { return num_params_; }
  std::size_t input_dim() const { return spec_.input_dim; }
  std::size_t num_outputs() const { return spec_.n_outputs; }
  const std::vector<Block>& blocks() const { return blocks_; }
  /// Per-parameter prior variance (output weights already divided by width).
  const Eigen::VectorXd& prior_variances() const { return prior_var_; }

  ParamSet sample(Rng& rng) const;

  Eigen::MatrixXd forward(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X) const;
  /// Forward pass plus grad += d(sum(d_out .* outputs))/d theta. Returns the outputs.
  Eigen::MatrixXd forward_backward(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X,
                                   const Eigen::MatrixXd& d_out, Eigen::VectorXd& grad) const;
  /// Hidden units (width x batch) of a feature root, before the output layer.
  Eigen::MatrixXd features(const Eigen::VectorXd& theta, const Eigen::MatrixXd& X) const;

  struct Layer {
    Activation activation;
    Eigen::Index in = 0;
    Eigen::Index out = 0;
    Eigen::Index w_offset = 0;
    Eigen::Index b_offset = -1;
  };

  struct Node {
    NodeKind kind = NodeKind::Basic;
    std::vector<int> children;
    std::vector<Eigen::Index> select;
    std::optional<WarpSpec> warp;
    std::vector<Layer> layers;
    Eigen::Index width = 0;
    bool has_output = false;
    Eigen::Index n_out = 1;
    Eigen::Index w_out_offset = -1;
    Eigen::Index b_out_offset = -1;
  };

 private:
  int compile(const ArchSpec& a, bool has_output, const std::string& path);

  ArchSpec spec_;
  std::vector<Node> nodes_;
  std::vector<Block> blocks_;
  Eigen::VectorXd prior_var_;
  Eigen::Index num_params_ = 0;
};

ParamSet sample_params(const ArchSpec& arch, std::uint64_t seed);
/// Scalar output of a single-output architecture at x.
double forward(const ArchSpec& arch, const ParamSet& params, const Eigen::VectorXd& x);

}  // namespace bnnk
