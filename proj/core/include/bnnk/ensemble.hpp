#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bnnk/hmc.hpp"
#include "bnnk/network.hpp"

namespace bnnk {

/// Adam optimiser state for one flat parameter vector.
struct Adam {
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;

  /// Gradient-descent step: theta -= lr * m_hat / (sqrt(v_hat) + eps).
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);
};

struct EnsembleConfig {
  std::size_t n_members = 10;
  std::size_t steps = 2000;
  double learning_rate = 1e-2;
  /// 0 means full batch.
  std::size_t batch_size = 0;
  double noise_var = 0.01;
  /// Optional per-member seeds; overrides the seed passed to training.
  std::vector<std::uint64_t> member_seeds;

  void validate() const;
  nlohmann::json to_json() const;
  static EnsembleConfig from_json(const nlohmann::json& j);
};

struct EnsembleModel {
  ArchSpec arch;
  EnsembleConfig config;
  std::vector<Eigen::VectorXd> members;
  std::vector<Eigen::VectorXd> anchors;

  nlohmann::json to_json() const;
  static EnsembleModel from_json(const nlohmann::json& j);
};

/// Anchored loss of one member: |y - f(X)|^2 / noise_var + sum_i (theta_i - a_i)^2 / v_i,
/// with the data term scaled by n / |batch| for mini-batches. grad receives the gradient.
double anchored_loss(const Network& net, const Eigen::VectorXd& theta, const Eigen::VectorXd& anchor,
                     const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double noise_var, Eigen::VectorXd& grad,
                     double data_scale = 1.0);

/// X is (input_dim x n); member j draws anchor and initial point from the prior
/// with its own stream. Throws std::runtime_error on a non-finite loss.
EnsembleModel anchored_ensemble_train(const ArchSpec& arch, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      const EnsembleConfig& cfg, std::uint64_t seed);

/// Mean and standard deviation across members (population variance), plus
/// noise_var when include_noise is set.
PredictiveMoments ensemble_predict(const EnsembleModel& model, const Eigen::MatrixXd& Xstar,
                                   bool include_noise = true);

}  // namespace bnnk
