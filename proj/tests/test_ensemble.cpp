#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "bnnk/ensemble.hpp"
#include "bnnk/network.hpp"

using namespace bnnk;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("without data members stay at their anchors and match the prior variance") {
  const PriorSpec p{1.0, 1.0, 1.0};
  const ArchSpec a = basic(Activation::relu(), p, 256);
  EnsembleConfig cfg;
  cfg.n_members = 200;
  const EnsembleModel m = anchored_ensemble_train(a, MatrixXd(1, 0), VectorXd(0), cfg, 3);
  REQUIRE(m.members.size() == 200);
  double drift = 0.0;
  for (std::size_t j = 0; j < m.members.size(); ++j)
    drift = std::max(drift, (m.members[j] - m.anchors[j]).cwiseAbs().maxCoeff());
  CHECK(drift < 0.05);
  MatrixXd Xs(1, 4);
  Xs << -2.0, -0.5, 0.5, 2.0;
  const PredictiveMoments pm = ensemble_predict(m, Xs, false);
  for (Eigen::Index i = 0; i < Xs.cols(); ++i) {
    const Vec x = Vec::Constant(1, Xs(0, i));
    const double kxx = k_relu(x, x, p);
    CHECK(pm.std(i) * pm.std(i) == doctest::Approx(kxx).epsilon(0.3));
  }
}

TEST_CASE("identical member seeds collapse the ensemble") {
  EnsembleConfig cfg;
  cfg.n_members = 3;
  cfg.steps = 50;
  cfg.member_seeds = {5, 5, 5};
  MatrixXd X(1, 4);
  X << -1, 0, 1, 2;
  const VectorXd y = X.row(0).transpose();
  const EnsembleModel m = anchored_ensemble_train(basic(Activation::erf(), {}, 10), X, y, cfg, 0);
  const PredictiveMoments pm = ensemble_predict(m, X, false);
  CHECK((pm.std.array() == 0.0).all());
  const PredictiveMoments noisy = ensemble_predict(m, X, true);
  CHECK((noisy.std.array() == std::sqrt(cfg.noise_var)).all());
}

TEST_CASE("ensemble fits a one-dimensional toy problem") {
  MatrixXd X(1, 10);
  VectorXd y(10);
  for (int i = 0; i < 10; ++i) {
    X(0, i) = -1.5 + i / 3.0;
    y(i) = std::sin(1.5 * X(0, i));
  }
  EnsembleConfig cfg;
  cfg.n_members = 5;
  cfg.steps = 3000;
  const EnsembleModel m = anchored_ensemble_train(basic(Activation::relu(), {}, 50), X, y, cfg, 11);
  const PredictiveMoments pm = ensemble_predict(m, X);
  CHECK(((pm.mean - y).cwiseAbs().array() <= 3.0 * std::sqrt(cfg.noise_var)).all());
  CHECK((pm.std.array() >= 0.0).all());
  const EnsembleModel again = anchored_ensemble_train(basic(Activation::relu(), {}, 50), X, y, cfg, 11);
  CHECK(again.members[2] == m.members[2]);
}

TEST_CASE("mini-batches train and stay deterministic") {
  MatrixXd X(1, 20);
  VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    X(0, i) = i / 10.0 - 1.0;
    y(i) = X(0, i) * X(0, i);
  }
  EnsembleConfig cfg;
  cfg.n_members = 2;
  cfg.steps = 200;
  cfg.batch_size = 5;
  const EnsembleModel a = anchored_ensemble_train(basic(Activation::relu(), {}, 20), X, y, cfg, 1);
  const EnsembleModel b = anchored_ensemble_train(basic(Activation::relu(), {}, 20), X, y, cfg, 1);
  CHECK(a.members[1] == b.members[1]);
}

TEST_CASE("prediction is the member average and ignores member order") {
  const ArchSpec arch = basic(Activation::tanh(), {}, 4);
  const Network net(arch);
  Rng rng(2);
  EnsembleModel m;
  m.arch = arch;
  m.config.n_members = 2;
  m.members = {net.sample(rng).values, net.sample(rng).values};
  m.anchors = m.members;
  MatrixXd Xs(1, 2);
  Xs << 0.3, -1.2;
  const PredictiveMoments pm = ensemble_predict(m, Xs, false);
  const MatrixXd fa = net.forward(m.members[0], Xs), fb = net.forward(m.members[1], Xs);
  for (int i = 0; i < 2; ++i) CHECK(pm.mean(i) == doctest::Approx((fa(0, i) + fb(0, i)) / 2.0).epsilon(1e-14));
  std::swap(m.members[0], m.members[1]);
  const PredictiveMoments sw = ensemble_predict(m, Xs, false);
  CHECK((sw.mean - pm.mean).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((sw.std - pm.std).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("anchored loss gradient") {
  const Network net(basic(Activation::erf(), {}, 6));
  Rng rng(6);
  const VectorXd theta = net.sample(rng).values, anchor = net.sample(rng).values;
  const MatrixXd X = MatrixXd::Random(1, 5);
  const MatrixXd Y = MatrixXd::Random(1, 5);
  VectorXd g = VectorXd::Zero(theta.size()), s = g;
  anchored_loss(net, theta, anchor, X, Y, 0.1, g);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    const double fd = (anchored_loss(net, tp, anchor, X, Y, 0.1, s) - anchored_loss(net, tm, anchor, X, Y, 0.1, s)) /
                      (2 * h);
    CHECK(g(i) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("ensemble errors and serialisation") {
  EnsembleConfig cfg;
  cfg.n_members = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.n_members = 2;
  cfg.member_seeds = {1};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.member_seeds.clear();
  cfg.steps = 10;
  cfg.noise_var = 1e-300;
  MatrixXd X(1, 2);
  X << 0.0, 1.0;
  CHECK_THROWS_AS(anchored_ensemble_train(basic(Activation::relu(), {}, 4), X, VectorXd::Constant(2, 1e200), cfg, 1),
                  std::runtime_error);
  cfg.noise_var = 0.01;
  const EnsembleModel m = anchored_ensemble_train(basic(Activation::relu(), {}, 4), X, VectorXd::Ones(2), cfg, 1);
  const EnsembleModel back = EnsembleModel::from_json(m.to_json());
  CHECK(back.members == m.members);
  CHECK(back.to_json() == m.to_json());
}
