#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "bnnk/arch.hpp"

namespace bnnk {

/// Monte-Carlo estimate of E[f(x) f(x')] with the standard error of the mean.
struct MCEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n_samples = 0;
};

struct MCOptions {
  /// Integrate the output layer out analytically (sigma2_w2 E[psi psi'] form).
  bool variance_reduced = true;
  /// Samples per chunk; chunk k always uses stream k of the seed, so results
  /// do not depend on `workers`.
  std::size_t chunk_size = 4096;
  /// 0 picks std::thread::hardware_concurrency().
  unsigned workers = 0;
};

inline constexpr std::size_t kMinKernelSamples = 1000;

/// Empirical kernel of `arch` at (x, x_p).
///
/// With `variance_reduced`, each sample is sigma2_w2 psi_i(x) psi_i(x') for one
/// freshly drawn hidden unit when every feature block is single-layer (summed
/// over children for OutputSum), or (sigma2_w2 / H) sum_i psi_i(x) psi_i(x')
/// for a full draw of a deep feature network. OutputProduct, and the
/// non-reduced mode, average f(x) f(x') over full parameter draws.
/// Throws std::invalid_argument if n_samples < kMinKernelSamples.
MCEstimate empirical_kernel(const ArchSpec& arch, const Eigen::VectorXd& x, const Eigen::VectorXd& x_p,
                            std::size_t n_samples, std::uint64_t seed, const MCOptions& options = {});

/// Row i holds forward(arch, sample_params(arch, seed + i), .) over `grid`.
Eigen::MatrixXd sample_prior_functions(const ArchSpec& arch, const std::vector<Eigen::VectorXd>& grid,
                                       std::size_t n_draws, std::uint64_t seed);

}  // namespace bnnk
