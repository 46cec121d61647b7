#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bnnk/network.hpp"

namespace bnnk {

/// Returns log p(theta) up to a constant and writes its gradient into `grad`.
using LogDensityFn = std::function<double(const Eigen::VectorXd& theta, Eigen::VectorXd& grad)>;

/// Posterior of a single-output network under a Gaussian likelihood with
/// homoskedastic noise and the architecture's independent Gaussian priors.
class BnnPosterior {
 public:
  /// X is (input_dim x n), one column per training input.
  BnnPosterior(Network net, Eigen::MatrixXd X, Eigen::VectorXd y, double noise_var);

  double log_density(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;
  LogDensityFn as_function() const;

  const Network& network() const { return net_; }
  double noise_var() const { return noise_var_; }

 private:
  Network net_;
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  double noise_var_;
  Eigen::VectorXd inv_prior_var_;
};

struct HMCConfig {
  double step_size = 0.01;
  int leapfrog_steps = 30;
  std::size_t n_samples = 1000;
  /// Defaults to 20% of n_samples.
  std::optional<std::size_t> n_burnin;
  std::size_t n_chains = 4;
  std::uint64_t seed = 0;
  /// Diagonal mass matrix; empty means identity.
  Eigen::VectorXd mass;
  /// Adapt the step size during burn-in (dual averaging) toward target_accept.
  bool adapt_step_size = true;
  double target_accept = 0.7;
  /// Each trajectory uses step_size * U(1 - jitter, 1 + jitter).
  double step_jitter = 0.0;
  std::size_t thin = 1;

  void validate() const;
  std::size_t burnin() const { return n_burnin.value_or(n_samples / 5); }
  nlohmann::json to_json() const;
  static HMCConfig from_json(const nlohmann::json& j);
};

struct HMCResult {
  /// Post-burn-in samples, chains concatenated in chain order.
  std::vector<Eigen::VectorXd> samples;
  std::vector<std::size_t> chain_lengths;
  std::vector<double> chain_acceptance;
  std::vector<double> chain_step_size;
  double acceptance_rate = 0.0;
};

/// One leapfrog trajectory of `steps` steps; updates q and p in place.
void leapfrog(const LogDensityFn& target, Eigen::VectorXd& q, Eigen::VectorXd& p, double step_size, int steps,
              const Eigen::VectorXd& inv_mass);
/// H(q, p) = -log p(q) + p^T M^-1 p / 2.
double hamiltonian(const LogDensityFn& target, const Eigen::VectorXd& q, const Eigen::VectorXd& p,
                   const Eigen::VectorXd& inv_mass);

/// Runs cfg.n_chains chains; chain c starts from inits[c % inits.size()].
/// Throws std::domain_error for a non-finite log density at an initial point
/// and std::runtime_error if the overall acceptance rate is below 1%.
HMCResult hmc_sample(const LogDensityFn& target, const std::vector<Eigen::VectorXd>& inits, const HMCConfig& cfg);
HMCResult hmc_sample(const LogDensityFn& target, const Eigen::VectorXd& init, const HMCConfig& cfg);

struct PredictiveMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
};

/// Mean and standard deviation of the network output across `samples`
/// (population variance), with noise_var added to the variance.
PredictiveMoments bnn_predictive_hmc(const Network& net, const std::vector<Eigen::VectorXd>& samples,
                                     const Eigen::MatrixXd& Xstar, double noise_var);

nlohmann::json chain_to_json(const ArchSpec& arch, const HMCResult& result, const HMCConfig& cfg, double noise_var);

}  // namespace bnnk
