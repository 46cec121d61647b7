#include "bnnk/ensemble.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bnnk/rng.hpp"

namespace bnnk {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> vec_to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void Adam::step(VectorXd& theta, const VectorXd& grad) {
  if (m.size() != theta.size()) {
    m = VectorXd::Zero(theta.size());
    v = VectorXd::Zero(theta.size());
    t = 0;
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  theta.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

void EnsembleConfig::validate() const {
  if (n_members < 2) throw std::invalid_argument("EnsembleConfig: need at least 2 members");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("EnsembleConfig: learning_rate must be positive");
  if (!(noise_var > 0.0)) throw std::invalid_argument("EnsembleConfig: noise_var must be positive");
  if (!member_seeds.empty() && member_seeds.size() != n_members)
    throw std::invalid_argument("EnsembleConfig: member_seeds must have n_members entries");
}

nlohmann::json EnsembleConfig::to_json() const {
  return {{"n_members", n_members},   {"steps", steps},         {"learning_rate", learning_rate},
          {"batch_size", batch_size}, {"noise_var", noise_var}, {"member_seeds", member_seeds}};
}

EnsembleConfig EnsembleConfig::from_json(const nlohmann::json& j) {
  EnsembleConfig c;
  c.n_members = j.value("n_members", c.n_members);
  c.steps = j.value("steps", c.steps);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.noise_var = j.value("noise_var", c.noise_var);
  if (j.contains("member_seeds")) c.member_seeds = j.at("member_seeds").get<std::vector<std::uint64_t>>();
  c.validate();
  return c;
}

nlohmann::json EnsembleModel::to_json() const {
  nlohmann::json mem = nlohmann::json::array(), anc = nlohmann::json::array();
  for (const auto& m : members) mem.push_back(vec_to_std(m));
  for (const auto& a : anchors) anc.push_back(vec_to_std(a));
  return {{"kind", "anchored_ensemble"},
          {"arch", arch.to_json()},
          {"config", config.to_json()},
          {"members", mem},
          {"anchors", anc}};
}

EnsembleModel EnsembleModel::from_json(const nlohmann::json& j) {
  EnsembleModel m;
  m.arch = ArchSpec::from_json(j.at("arch"));
  m.config = EnsembleConfig::from_json(j.at("config"));
  for (const auto& v : j.at("members")) m.members.push_back(vec_from_json(v));
  for (const auto& v : j.at("anchors")) m.anchors.push_back(vec_from_json(v));
  if (m.members.size() != m.anchors.size()) throw std::invalid_argument("EnsembleModel: members/anchors mismatch");
  return m;
}

double anchored_loss(const Network& net, const VectorXd& theta, const VectorXd& anchor, const MatrixXd& X,
                     const MatrixXd& Y, double noise_var, VectorXd& grad, double data_scale) {
  const VectorXd& var = net.prior_variances();
  const VectorXd diff = theta - anchor;
  // Zero-variance parameters are pinned to their anchor.
  VectorXd inv_var = VectorXd::Zero(var.size());
  for (Eigen::Index i = 0; i < var.size(); ++i) inv_var(i) = var(i) > 0.0 ? 1.0 / var(i) : 0.0;
  double loss = diff.cwiseAbs2().dot(inv_var);
  grad = 2.0 * inv_var.cwiseProduct(diff);
  if (X.cols() > 0) {
    VectorXd g = VectorXd::Zero(theta.size());
    const MatrixXd f = net.forward(theta, X);
    const MatrixXd resid = f - Y;
    loss += data_scale * resid.squaredNorm() / noise_var;
    net.forward_backward(theta, X, (2.0 * data_scale / noise_var) * resid, g);
    grad += g;
  }
  for (Eigen::Index i = 0; i < var.size(); ++i)
    if (var(i) <= 0.0) grad(i) = 0.0;
  return loss;
}

EnsembleModel anchored_ensemble_train(const ArchSpec& arch, const MatrixXd& X, const VectorXd& y,
                                      const EnsembleConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (X.cols() != y.size()) throw std::invalid_argument("anchored_ensemble_train: |X| != |y|");
  const Network net(arch);
  if (net.num_outputs() != 1) throw std::invalid_argument("anchored_ensemble_train: single-output network required");
  if (X.cols() > 0 && X.rows() != static_cast<Eigen::Index>(net.input_dim()))
    throw std::invalid_argument("anchored_ensemble_train: input dimension mismatch");

  EnsembleModel model;
  model.arch = arch;
  model.config = cfg;
  const Rng root(seed);
  const Eigen::Index n = X.cols();
  const std::size_t batch = (cfg.batch_size == 0 || cfg.batch_size >= static_cast<std::size_t>(n))
                                ? static_cast<std::size_t>(n)
                                : cfg.batch_size;
  const MatrixXd Y = y.transpose();

  for (std::size_t j = 0; j < cfg.n_members; ++j) {
    Rng rng = cfg.member_seeds.empty() ? root.split(j) : Rng(cfg.member_seeds[j]);
    VectorXd anchor = net.sample(rng).values;
    VectorXd theta = net.sample(rng).values;
    Adam opt;
    opt.learning_rate = cfg.learning_rate;
    VectorXd grad;
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    MatrixXd Xb(X.rows(), static_cast<Eigen::Index>(batch));
    MatrixXd Yb(1, static_cast<Eigen::Index>(batch));
    const double scale = batch > 0 ? static_cast<double>(n) / static_cast<double>(batch) : 1.0;

    for (std::size_t s = 0; s < cfg.steps; ++s) {
      double loss;
      if (batch == static_cast<std::size_t>(n)) {
        loss = anchored_loss(net, theta, anchor, X, Y, cfg.noise_var, grad);
      } else {
        for (std::size_t b = 0; b < batch; ++b) {
          const std::size_t k = b + rng.index(static_cast<std::size_t>(n) - b);
          std::swap(idx[b], idx[k]);
          Xb.col(static_cast<Eigen::Index>(b)) = X.col(idx[b]);
          Yb(0, static_cast<Eigen::Index>(b)) = Y(0, idx[b]);
        }
        loss = anchored_loss(net, theta, anchor, Xb, Yb, cfg.noise_var, grad, scale);
      }
      if (!std::isfinite(loss) || !grad.allFinite())
        throw std::runtime_error("anchored_ensemble_train: non-finite loss for member " + std::to_string(j) +
                                 " at step " + std::to_string(s));
      opt.step(theta, grad);
    }
    model.members.push_back(std::move(theta));
    model.anchors.push_back(std::move(anchor));
  }
  return model;
}

PredictiveMoments ensemble_predict(const EnsembleModel& model, const MatrixXd& Xstar, bool include_noise) {
  if (model.members.empty()) throw std::invalid_argument("ensemble_predict: empty ensemble");
  const Network net(model.arch);
  return bnn_predictive_hmc(net, model.members, Xstar, include_noise ? model.config.noise_var : 0.0);
}

}  // namespace bnnk
