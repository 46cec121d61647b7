#include "bnnk/gp.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "bnnk/stats.hpp"

namespace bnnk {

Vec GPPrediction::std_dev() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

GPPosterior gp_fit(const GPModel& model, const std::vector<Vec>& X, const Vec& y) {
  if (X.empty()) throw std::invalid_argument("gp_fit: need at least one training point");
  if (static_cast<Eigen::Index>(X.size()) != y.size())
    throw std::invalid_argument("gp_fit: |X| != |y|");
  if (!(model.noise_var >= 0.0)) throw std::invalid_argument("gp_fit: noise variance must be >= 0");
  if (!y.allFinite()) throw std::invalid_argument("gp_fit: non-finite targets");
  for (const auto& x : X)
    if (!x.allFinite()) throw std::invalid_argument("gp_fit: non-finite inputs");

  const Mat K = model.kernel.gram(X);
  const auto n = K.rows();
  const double mean_diag = K.diagonal().mean();
  const double scale = mean_diag > 0.0 ? mean_diag : 1.0;

  for (double rung : kJitterLadder) {
    const double jitter = rung * scale;
    Mat A = K;
    A.diagonal().array() += model.noise_var + jitter;
    Eigen::LLT<Mat> llt(A);
    if (llt.info() != Eigen::Success) continue;
    Mat L = llt.matrixL();
    if (!L.allFinite() || (L.diagonal().array() <= 0.0).any()) continue;
    GPPosterior post{model, X, y, std::move(L), llt.solve(y), jitter};
    return post;
  }

  Mat A = K;
  A.diagonal().array() += model.noise_var;
  const double lmin = stats::min_eigenvalue(A);
  std::ostringstream msg;
  msg << "gp_fit: Gram matrix (n=" << n << ") is not positive definite within the jitter budget; "
      << "min eigenvalue " << lmin << ", trace " << A.trace();
  throw GPFitError(msg.str(), lmin);
}

GPPrediction gp_predict(const GPPosterior& post, const std::vector<Vec>& Xstar) {
  GPPrediction pred;
  const auto m = static_cast<Eigen::Index>(Xstar.size());
  if (m == 0) {
    pred.mean.resize(0);
    pred.cov.resize(0, 0);
    return pred;
  }
  const std::size_t d = static_cast<std::size_t>(post.X.front().size());
  for (const auto& x : Xstar)
    if (static_cast<std::size_t>(x.size()) != d)
      throw std::invalid_argument("gp_predict: query dimension does not match training inputs");

  const Mat Ks = post.model.kernel.cross(post.X, Xstar);
  pred.mean = Ks.transpose() * post.alpha;
  const Mat V = post.L.triangularView<Eigen::Lower>().solve(Ks);
  pred.cov = post.model.kernel.gram(Xstar) - V.transpose() * V;
  return pred;
}

double gp_log_marginal(const GPPosterior& post) {
  const double n = static_cast<double>(post.y.size());
  return -0.5 * post.y.dot(post.alpha) - post.L.diagonal().array().log().sum() -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

}  // namespace bnnk
