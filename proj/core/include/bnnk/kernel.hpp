#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bnnk/warp.hpp"

namespace bnnk {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Squared-exponential hyperparameters. The kernel uses ||x - x'||^2 / l^2
/// (no factor of two in the denominator).
struct SEParams {
  double sigma2 = 1.0;
  double length_scale = 1.0;
  void validate() const;
};

/// Exponential-sine-squared (periodic) hyperparameters for 1-D inputs.
struct ESSParams {
  double sigma2 = 1.0;
  double length_scale = 1.0;
  double period = 1.0;
  void validate() const;
};

/// Gaussian priors of a single-hidden-layer network.
///
/// `sigma2_w2` is the output-weight variance *after* width scaling: a finite
/// network of width H draws its output weights from N(0, sigma2_w2 / H), so
/// the analytic kernels below do not depend on H.
struct PriorSpec {
  double sigma2_w1 = 1.0;
  double sigma2_b1 = 1.0;
  double sigma2_w2 = 1.0;

  void validate() const;
  /// Pre-activation covariance s(a, b) = sigma2_b1 + sigma2_w1 a.b
  double preact_cov(const Vec& a, const Vec& b) const;

  nlohmann::json to_json() const;
  static PriorSpec from_json(const nlohmann::json& j);
};

/// RBF hidden units exp(-||x - c||^2 / (2 sigma2_g)) with centres c ~ N(0, sigma2_u I).
struct RBFLayerParams {
  double sigma2_g = 1.0;
  double sigma2_u = 1.0;

  void validate() const;
  double sigma2_e() const { return 1.0 / (2.0 / sigma2_g + 1.0 / sigma2_u); }
  double sigma2_s() const { return 2.0 * sigma2_g + sigma2_g * sigma2_g / sigma2_u; }
  double sigma2_m() const { return 2.0 * sigma2_u + sigma2_g; }
};

// Closed-form kernels. All throw std::invalid_argument on bad parameters or
// mismatched input dimensions.

double k_se(const Vec& x, const Vec& x_p, const SEParams& params);
double k_ess(double x, double x_p, const ESSParams& params);
/// Arc-cosine (degree one) kernel of a ReLU layer, bias folded into s(.,.).
double k_relu(const Vec& x, const Vec& x_p, const PriorSpec& priors);
double k_erf(const Vec& x, const Vec& x_p, const PriorSpec& priors);
double k_rbf_bnn(const Vec& x, const Vec& x_p, const RBFLayerParams& params);
/// Cosine-activation kernel: an SE term plus a non-stationary ||x + x'|| term.
double k_cos_bnn(const Vec& x, const Vec& x_p, const PriorSpec& priors);
/// ReLU layer applied after periodic warping. Equals the warped ReLU network
/// kernel when sigma2_b1 + sigma2_w1 = 2; in general it is that kernel divided
/// by (sigma2_b1 + sigma2_w1) / 2, so the diagonal is always sigma2_w2.
double k_relu_periodic(double x, double x_p, double period, const PriorSpec& priors);

/// E[max(0, w.x + b)] under the first-layer priors: sqrt(s(x,x) / 2 pi).
double relu_mean(const Vec& x, const PriorSpec& priors);

/// Expected hidden-unit value m(x) = E[psi(x)], used by the hidden-sum kernel.
class MeanFunction {
 public:
  enum class Kind { Zero, Constant, ReLU, Custom };

  static MeanFunction zero();
  static MeanFunction constant(double value);
  static MeanFunction relu(const PriorSpec& priors);
  static MeanFunction custom(std::function<double(const Vec&)> fn);

  double operator()(const Vec& x) const;
  Kind kind() const { return kind_; }

  nlohmann::json to_json() const;
  static MeanFunction from_json(const nlohmann::json& j);

 private:
  Kind kind_ = Kind::Zero;
  double value_ = 0.0;
  PriorSpec priors_{};
  std::function<double(const Vec&)> fn_;
};

/// Input warping u: R^in_dim -> R^out_dim. Declarative warps keep their
/// WarpSpec so the kernel stays serialisable.
struct WarpFn {
  std::function<Vec(const Vec&)> fn;
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::optional<WarpSpec> spec;

  static WarpFn from_spec(const WarpSpec& spec);
  static WarpFn identity(std::size_t dim);
};

namespace detail {
class KernelNode;
}

/// Immutable covariance function handle. Copies share the underlying node;
/// evaluation is const and thread-safe.
class Kernel {
 public:
  explicit Kernel(std::shared_ptr<const detail::KernelNode> node);

  double operator()(const Vec& x, const Vec& x_p) const;
  /// Input dimension the kernel requires, or nullopt if it accepts any.
  std::optional<std::size_t> input_dim() const;
  std::string type() const;

  Mat gram(const std::vector<Vec>& X) const;
  Mat cross(const std::vector<Vec>& A, const std::vector<Vec>& B) const;

  /// Throws std::logic_error for kernels holding custom callables.
  nlohmann::json to_json() const;
  static Kernel from_json(const nlohmann::json& j);


 private:
  std::shared_ptr<const detail::KernelNode> node_;
};

Kernel se_kernel(const SEParams& params);
Kernel ess_kernel(const ESSParams& params);
Kernel relu_kernel(const PriorSpec& priors);
Kernel erf_kernel(const PriorSpec& priors);
Kernel rbf_bnn_kernel(const RBFLayerParams& params);
Kernel cos_bnn_kernel(const PriorSpec& priors);
Kernel relu_periodic_kernel(double period, const PriorSpec& priors);
Kernel constant_kernel(double value);
Kernel zero_kernel();

Kernel kernel_add(const Kernel& a, const Kernel& b);
Kernel kernel_mul(const Kernel& a, const Kernel& b);
Kernel kernel_scale(const Kernel& a, double factor);
Kernel kernel_pow(const Kernel& a, int n);
Kernel kernel_warp(const Kernel& a, const WarpFn& u);
Kernel kernel_warp(const Kernel& a, const WarpSpec& u);
/// Restricts the kernel to `dims` of its input. If `ambient_dim` is given the
/// indices are validated immediately, otherwise at evaluation time.
Kernel kernel_project(const Kernel& a, std::vector<std::size_t> dims,
                      std::optional<std::size_t> ambient_dim = std::nullopt);
/// Kernel of two networks summed point-wise at their hidden units with a
/// shared output layer: K_A + K_B + sigma2_w2 (m_A(x) m_B(x') + m_A(x') m_B(x)).
Kernel hidden_add_kernel(const Kernel& a, const Kernel& b, MeanFunction m_a, MeanFunction m_b,
                         double sigma2_w2);

}  // namespace bnnk
