#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include <json.hpp>

namespace bnnk {

/// Maps a scalar onto the unit circle: x -> (cos(2 pi x / p), sin(2 pi x / p)).
/// Throws std::invalid_argument when period <= 0.
Eigen::Vector2d warp_periodic(double x, double period);

/// Declarative input warping shared by kernels and architectures.
///
/// Each coordinate listed in `periodic_dims` is replaced in place by its
/// (cos, sin) pair; the remaining coordinates pass through unchanged, so the
/// output dimension is `in_dim + periodic_dims.size()`.
struct WarpSpec {
  std::size_t in_dim = 1;
  std::vector<std::size_t> periodic_dims{0};
  double period = 1.0;

  std::size_t out_dim() const { return in_dim + periodic_dims.size(); }
  void validate() const;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// Column-wise application to a (in_dim x n) matrix.
  Eigen::MatrixXd apply_cols(const Eigen::MatrixXd& X) const;

  nlohmann::json to_json() const;
  static WarpSpec from_json(const nlohmann::json& j);
};

}  // namespace bnnk
