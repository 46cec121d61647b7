#include "bnnk/warp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bnnk {

Eigen::Vector2d warp_periodic(double x, double period) {
  if (!(period > 0.0)) throw std::invalid_argument("warp_periodic: period must be positive");
  const double angle = 2.0 * std::numbers::pi * x / period;
  return {std::cos(angle), std::sin(angle)};
}

void WarpSpec::validate() const {
  if (!(period > 0.0)) throw std::invalid_argument("WarpSpec: period must be positive");
  if (in_dim == 0) throw std::invalid_argument("WarpSpec: in_dim must be >= 1");
  for (std::size_t d : periodic_dims) {
    if (d >= in_dim)
      throw std::invalid_argument("WarpSpec: periodic dim " + std::to_string(d) +
                                  " out of range for input dimension " + std::to_string(in_dim));
  }
  auto sorted = periodic_dims;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw std::invalid_argument("WarpSpec: duplicate periodic dim");
}

Eigen::VectorXd WarpSpec::apply(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != in_dim)
    throw std::invalid_argument("WarpSpec: expected input of dimension " + std::to_string(in_dim) +
                                ", got " + std::to_string(x.size()));
  Eigen::VectorXd out(out_dim());
  Eigen::Index k = 0;
  for (std::size_t d = 0; d < in_dim; ++d) {
    if (std::find(periodic_dims.begin(), periodic_dims.end(), d) != periodic_dims.end()) {
      const Eigen::Vector2d u = warp_periodic(x(d), period);
      out(k++) = u(0);
      out(k++) = u(1);
    } else {
      out(k++) = x(d);
    }
  }
  return out;
}

Eigen::MatrixXd WarpSpec::apply_cols(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd out(out_dim(), X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) out.col(c) = apply(X.col(c));
  return out;
}

nlohmann::json WarpSpec::to_json() const {
  return {{"type", "periodic"}, {"in_dim", in_dim}, {"periodic_dims", periodic_dims}, {"period", period}};
}

WarpSpec WarpSpec::from_json(const nlohmann::json& j) {
  WarpSpec w;
  const auto type = j.value("type", std::string("periodic"));
  if (type != "periodic") throw std::invalid_argument("WarpSpec: unknown warp type '" + type + "'");
  w.in_dim = j.value("in_dim", std::size_t{1});
  w.periodic_dims = j.value("periodic_dims", std::vector<std::size_t>{0});
  w.period = j.at("period").get<double>();
  w.validate();
  return w;
}

}  // namespace bnnk
