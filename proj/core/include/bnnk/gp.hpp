#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bnnk/kernel.hpp"

namespace bnnk {

struct GPModel {
  Kernel kernel;
  double noise_var = 0.0;
};

/// Factorised training state of an exact GP. Immutable once built.
struct GPPosterior {
  GPModel model;
  std::vector<Vec> X;
  Vec y;
  Mat L;      // lower Cholesky factor of K + (noise + jitter) I
  Vec alpha;  // (K + (noise + jitter) I)^-1 y
  double jitter = 0.0;
};

struct GPPrediction {
  Vec mean;
  Mat cov;

  Vec std_dev() const;
};

/// Raised when the Gram matrix cannot be factorised even with the largest jitter.
class GPFitError : public std::runtime_error {
 public:
  GPFitError(const std::string& what, double min_eigenvalue)
      : std::runtime_error(what), min_eigenvalue_(min_eigenvalue) {}
  double min_eigenvalue() const { return min_eigenvalue_; }

 private:
  double min_eigenvalue_;
};

/// Jitter ladder, in units of the mean Gram diagonal.
inline constexpr double kJitterLadder[] = {0.0, 1e-10, 1e-8, 1e-6};

GPPosterior gp_fit(const GPModel& model, const std::vector<Vec>& X, const Vec& y);
GPPrediction gp_predict(const GPPosterior& post, const std::vector<Vec>& Xstar);
double gp_log_marginal(const GPPosterior& post);

}  // namespace bnnk
