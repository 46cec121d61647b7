#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include <doctest.h>

#include "bnnk/kernel.hpp"
#include "bnnk/stats.hpp"
#include "oracle.hpp"

using namespace bnnk;
using std::numbers::pi;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }
Vec v2(double a, double b) { return (Vec(2) << a, b).finished(); }

PriorSpec unit_priors() { return {1.0, 1.0, 1.0}; }

std::vector<Kernel> kernel_zoo() {
  const PriorSpec p{0.8, 0.6, 1.3};
  const ESSParams ess{1.2, 0.9, 1.5};
  return {se_kernel({1.5, 0.7}),
          ess_kernel(ess),
          relu_kernel(p),
          erf_kernel(p),
          rbf_bnn_kernel({0.7, 1.4}),
          cos_bnn_kernel(p),
          relu_periodic_kernel(2.0, p),
          kernel_add(se_kernel({1.0, 1.0}), relu_kernel(p)),
          kernel_mul(ess_kernel(ess), se_kernel({1.0, 2.0})),
          kernel_pow(relu_kernel(p), 3),
          kernel_warp(rbf_bnn_kernel({1.0, 1.0}), WarpSpec{1, {0}, 1.3}),
          hidden_add_kernel(relu_kernel(p), relu_kernel(unit_priors()), MeanFunction::relu(p),
                            MeanFunction::relu(unit_priors()), 1.0)};
}

}  // namespace

TEST_CASE("k_se closed form") {
  CHECK(k_se(v1(0), v1(0), {1.5, 1.0}) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(k_se(v1(0), v1(1), {1.0, 1.0}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(k_se(v1(0), v1(1), {1.0, 1e6}) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK_THROWS_AS(k_se(v1(0), v2(0, 1), {1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(se_kernel({0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(se_kernel({1.0, -1.0}), std::invalid_argument);
}

TEST_CASE("k_ess closed form and periodicity") {
  const ESSParams p{2.0, 1.0, 3.0};
  CHECK(k_ess(0.4, 0.4, p) == doctest::Approx(2.0));
  CHECK(k_ess(0.4, 3.4, p) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(k_ess(0.0, 1.5, {1.0, 1.0, 3.0}) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(ess_kernel({1.0, 1.0, 0.0}), std::invalid_argument);
}

TEST_CASE("k_relu closed form") {
  const PriorSpec p{0.7, 0.4, 1.9};
  const Vec x = v2(0.3, -1.2);
  CHECK(k_relu(x, x, p) == doctest::Approx(0.5 * p.sigma2_w2 * p.preact_cov(x, x)).epsilon(1e-14));
  CHECK(std::abs(k_relu(v1(1), v1(-1), {1.0, 0.0, 1.0})) < 1e-15);
  CHECK(k_relu(v1(1), v1(2), unit_priors()) == doctest::Approx(1.5055303695675453).epsilon(1e-12));
  CHECK_THROWS_AS(k_relu(v1(0), v1(1), {1.0, 0.0, 1.0}), std::domain_error);
}

TEST_CASE("k_erf closed form") {
  CHECK(k_erf(v1(0.5), v1(-0.5), unit_priors()) == doctest::Approx(0.2819659280572693).epsilon(1e-12));
  CHECK(k_erf(v1(1e4), v1(1e4), {1.0, 1.0, 1.7}) == doctest::Approx(1.7).epsilon(1e-3));
  CHECK(k_erf(v1(0.2), v1(-3.0), {0.0, 0.0, 1.0}) == 0.0);
  // Bounded by sigma2_w2.
  std::mt19937_64 g(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int i = 0; i < 50; ++i) CHECK(std::abs(k_erf(v1(n(g)), v1(n(g)), {1.0, 1.0, 0.9})) <= 0.9);
}

TEST_CASE("k_rbf_bnn closed form") {
  const RBFLayerParams p{1.0, 1.0};
  CHECK(1.0 / p.sigma2_e() == doctest::Approx(2.0 / p.sigma2_g + 1.0 / p.sigma2_u));
  CHECK(p.sigma2_s() == doctest::Approx(2.0 * p.sigma2_g + p.sigma2_g * p.sigma2_g / p.sigma2_u));
  CHECK(p.sigma2_m() == doctest::Approx(2.0 * p.sigma2_u + p.sigma2_g));
  CHECK(k_rbf_bnn(v1(0), v1(0), p) == doctest::Approx(std::sqrt(p.sigma2_e() / p.sigma2_u)).epsilon(1e-15));
  CHECK(k_rbf_bnn(v1(1), v1(0), p) == doctest::Approx(0.4136895450425726).epsilon(1e-12));
  CHECK(k_rbf_bnn(v1(1), v1(0), p) == doctest::Approx(std::exp(-1.0 / 3.0) / std::sqrt(3.0)).epsilon(1e-14));
}

TEST_CASE("k_cos_bnn closed form") {
  CHECK(k_cos_bnn(v1(0), v1(0), {1.0, 0.0, 1.0}) == doctest::Approx(1.0));
  CHECK(k_cos_bnn(v1(1), v1(-1), {1.0, 0.0, 1.0}) == doctest::Approx((std::exp(-2.0) + 1.0) / 2.0).epsilon(1e-14));
  CHECK(k_cos_bnn(v1(1), v1(-1), {1.0, 0.0, 1.0}) == doctest::Approx(0.567667641618328).epsilon(1e-12));
  CHECK(k_cos_bnn(v1(0.3), v1(0.7), unit_priors()) == doctest::Approx(0.5026006725053059).epsilon(1e-12));
}

TEST_CASE("k_relu_periodic closed form") {
  const PriorSpec p{1.0, 1.0, 2.5};
  CHECK(k_relu_periodic(0.3, 0.3, 2.0, p) == doctest::Approx(2.5).epsilon(1e-14));
  CHECK(k_relu_periodic(0.3, 2.3, 2.0, p) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(std::abs(k_relu_periodic(0.3, 1.3, 2.0, {1.0, 0.0, 1.0})) < 1e-12);
  CHECK_THROWS_AS(k_relu_periodic(0.0, 1.0, 2.0, {0.0, 0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(k_relu_periodic(0.0, 1.0, -2.0, p), std::invalid_argument);
}

TEST_CASE("analytic kernels agree with an independent quadrature oracle") {
  const auto relu = [](double a) { return a > 0.0 ? a : 0.0; };
  SUBCASE("relu") {
    const PriorSpec p{0.8, 0.5, 1.0};
    const double q = oracle::expect2([&](double w, double b) { return relu(w * 0.7 + b) * relu(w * -1.3 + b); },
                                     p.sigma2_w1, p.sigma2_b1);
    CHECK(k_relu(v1(0.7), v1(-1.3), p) == doctest::Approx(q).epsilon(1e-5));
  }
  SUBCASE("erf") {
    const PriorSpec p{1.5, 0.3, 1.0};
    const double q = oracle::expect2([](double w, double b) { return std::erf(w * 0.4 + b) * std::erf(w * 1.1 + b); },
                                     p.sigma2_w1, p.sigma2_b1);
    CHECK(k_erf(v1(0.4), v1(1.1), p) == doctest::Approx(q).epsilon(1e-6));
  }
  SUBCASE("cosine") {
    const PriorSpec p{0.6, 1.2, 1.0};
    const double q = oracle::expect2([](double w, double b) { return std::cos(w * 0.9 + b) * std::cos(w * -0.2 + b); },
                                     p.sigma2_w1, p.sigma2_b1);
    CHECK(k_cos_bnn(v1(0.9), v1(-0.2), p) == doctest::Approx(q).epsilon(1e-6));
  }
  SUBCASE("rbf") {
    const RBFLayerParams p{0.5, 2.0};
    const auto unit = [&](double x, double c) { return std::exp(-(x - c) * (x - c) / (2.0 * p.sigma2_g)); };
    const double q = oracle::expect1([&](double c) { return unit(0.3, c) * unit(-0.8, c); }, p.sigma2_u);
    CHECK(k_rbf_bnn(v1(0.3), v1(-0.8), p) == doctest::Approx(q).epsilon(1e-8));
  }
  SUBCASE("relu periodic") {
    const PriorSpec p{1.0, 1.0, 1.0};
    const double period = 2.0;
    const double x = 0.35, xp = 1.6;
    // Warped inputs are unit vectors 2 pi (x - x') / p apart; with sigma2_b1 + sigma2_w1 = 2 the
    // closed form coincides with the arc-cosine kernel on them.
    const double ang = 2.0 * pi * (x - xp) / period;
    const Vec a = v2(1.0, 0.0), b = v2(std::cos(ang), std::sin(ang));
    CHECK(k_relu_periodic(x, xp, period, p) == doctest::Approx(k_relu(a, b, p)).epsilon(1e-12));
  }
}

TEST_CASE("symmetry on random pairs") {
  std::mt19937_64 g(11);
  std::normal_distribution<double> n(0.0, 1.5);
  for (const auto& k : kernel_zoo()) {
    for (int i = 0; i < 100; ++i) {
      const Vec a = v1(n(g)), b = v1(n(g));
      CHECK(std::abs(k(a, b) - k(b, a)) <= 1e-12);
    }
  }
}

TEST_CASE("Gram matrices are PSD") {
  std::mt19937_64 g(5);
  std::normal_distribution<double> n(0.0, 1.5);
  std::vector<Vec> X;
  for (int i = 0; i < 20; ++i) X.push_back(v1(n(g)));
  for (const auto& k : kernel_zoo()) {
    const Mat G = k.gram(X);
    CHECK(stats::min_eigenvalue(G) >= -1e-8 * G.trace());
  }
}

TEST_CASE("periodicity and its absence") {
  const double p = 1.7;
  const Kernel ess = ess_kernel({1.0, 0.8, p});
  const Kernel rp = relu_periodic_kernel(p, {0.9, 1.1, 1.0});
  const Kernel cosk = cos_bnn_kernel({1.0, 1.0, 1.0});
  double max_cos_violation = 0.0;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      const double x = -2.0 + 0.2 * i, xp = -2.0 + 0.2 * j;
      CHECK(std::abs(ess(v1(x), v1(xp + p)) - ess(v1(x), v1(xp))) <= 1e-12);
      CHECK(std::abs(rp(v1(x), v1(xp + p)) - rp(v1(x), v1(xp))) <= 1e-12);
      max_cos_violation = std::max(max_cos_violation, std::abs(cosk(v1(x), v1(xp + p)) - cosk(v1(x), v1(xp))));
    }
  CHECK(max_cos_violation > 1e-3);
}

TEST_CASE("periodic warp of the RBF kernel has the ESS form") {
  const RBFLayerParams r{0.8, 1.3};
  const double p = 2.5;
  const Kernel warped = kernel_warp(rbf_bnn_kernel(r), WarpSpec{1, {0}, p});
  const double se = std::sqrt(r.sigma2_e()), su = std::sqrt(r.sigma2_u);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) {
      const double x = -3.0 + 0.31 * i, xp = -3.0 + 0.31 * j;
      const double s = std::sin(pi * (x - xp) / p);
      const double closed =
          std::pow(se / su, 2) * std::exp(-1.0 / r.sigma2_m()) * std::exp(-2.0 * s * s / r.sigma2_s());
      CHECK(std::abs(warped(v1(x), v1(xp)) - closed) <= 1e-12);
    }
}

TEST_CASE("kernel_add") {
  const SEParams sp{1.3, 0.8};
  const Kernel se = se_kernel(sp);
  CHECK(kernel_add(se, se)(v1(0.4), v1(0.4)) == doctest::Approx(2.0 * 1.3));
  const Kernel rk = relu_kernel(unit_priors());
  const Kernel z = kernel_add(rk, zero_kernel());
  CHECK(z(v1(0.3), v1(-0.9)) == rk(v1(0.3), v1(-0.9)));
  const ESSParams ep{0.7, 1.0, 2.0};
  CHECK(kernel_add(ess_kernel(ep), se)(v1(0), v1(2.0)) ==
        doctest::Approx(0.7 + k_se(v1(0), v1(2.0), sp)).epsilon(1e-14));
  CHECK_THROWS_AS(kernel_add(relu_kernel(unit_priors()), kernel_project(se, {0, 1}, 2))(v1(0), v1(0)),
                  std::exception);
}

TEST_CASE("kernel algebra laws") {
  const Kernel a = relu_kernel({0.8, 0.5, 1.2}), b = se_kernel({0.9, 1.1}), c = erf_kernel(unit_priors());
  std::mt19937_64 g(2);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 30; ++i) {
    const Vec x = v1(n(g)), y = v1(n(g));
    CHECK(kernel_add(a, b)(x, y) == doctest::Approx(kernel_add(b, a)(x, y)).epsilon(1e-15));
    CHECK(kernel_add(kernel_add(a, b), c)(x, y) == doctest::Approx(kernel_add(a, kernel_add(b, c))(x, y)).epsilon(1e-14));
    CHECK(kernel_mul(a, b)(x, y) == doctest::Approx(kernel_mul(b, a)(x, y)).epsilon(1e-15));
    CHECK(kernel_pow(a, 2)(x, y) == doctest::Approx(kernel_mul(a, a)(x, y)).epsilon(1e-14));
    CHECK(kernel_pow(a, 1)(x, y) == doctest::Approx(a(x, y)).epsilon(1e-15));
    CHECK(kernel_mul(a, constant_kernel(1.0))(x, y) == doctest::Approx(a(x, y)).epsilon(1e-15));
    CHECK(kernel_mul(a, b)(x, x) == doctest::Approx(a(x, x) * b(x, x)).epsilon(1e-15));
    CHECK(kernel_pow(a, 2)(x, x) == doctest::Approx(a(x, x) * a(x, x)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(kernel_pow(a, 0), std::invalid_argument);
}

TEST_CASE("product with SE is periodic only when SE is flat") {
  const double p = 1.5;
  const Kernel ess = ess_kernel({1.0, 1.0, p});
  const Kernel prod = kernel_mul(ess, se_kernel({1.0, 1.0}));
  const Kernel flat = kernel_mul(ess, se_kernel({1.0, 1e9}));
  double worst_prod = 0.0, worst_flat = 0.0;
  for (int i = 0; i < 15; ++i) {
    const double x = -1.0 + 0.15 * i, xp = 0.4;
    worst_prod = std::max(worst_prod, std::abs(prod(v1(x), v1(xp + p)) - prod(v1(x), v1(xp))));
    worst_flat = std::max(worst_flat, std::abs(flat(v1(x), v1(xp + p)) - flat(v1(x), v1(xp))));
  }
  CHECK(worst_prod > 1e-3);
  CHECK(worst_flat < 1e-12);
}

TEST_CASE("kernel_warp") {
  const Kernel a = relu_kernel(unit_priors());
  const Kernel same = kernel_warp(a, WarpFn::identity(1));
  CHECK(same(v1(0.3), v1(1.7)) == a(v1(0.3), v1(1.7)));
  const WarpFn constant{[](const Vec&) { return v1(0.5); }, 1, 1, std::nullopt};
  const Kernel c = kernel_warp(a, constant);
  CHECK(c(v1(-3.0), v1(2.0)) == doctest::Approx(c(v1(0.1), v1(0.2))));
  CHECK_THROWS_AS(kernel_warp(ess_kernel({}), WarpSpec{1, {0}, 1.0}), std::invalid_argument);
}

TEST_CASE("kernel_project") {
  const Kernel a = se_kernel({1.0, 0.7});
  const Kernel all = kernel_project(a, {0, 1}, 2);
  CHECK(all(v2(0.1, 0.5), v2(-0.3, 0.2)) == a(v2(0.1, 0.5), v2(-0.3, 0.2)));
  const Kernel d0 = kernel_project(a, {0}, 2);
  for (int i = 0; i < 10; ++i) CHECK(d0(v2(0.3, -1.0 + 0.3 * i), v2(0.9, 4.0)) == d0(v2(0.3, 0.0), v2(0.9, 0.0)));
  const Kernel b = relu_kernel(unit_priors());
  const Kernel sep = kernel_add(kernel_project(a, {0}, 2), kernel_project(b, {1}, 2));
  const Vec x = v2(0.2, 1.4), y = v2(-0.6, 0.3);
  CHECK(sep(x, y) == doctest::Approx(a(v1(0.2), v1(-0.6)) + b(v1(1.4), v1(0.3))).epsilon(1e-15));
  CHECK_THROWS_AS(kernel_project(a, {2}, 2), std::out_of_range);
}

TEST_CASE("hidden_add_kernel") {
  const PriorSpec odd{1.0, 0.0, 1.0};
  const Kernel ea = erf_kernel(odd), eb = erf_kernel({2.0, 0.0, 1.0});
  const Kernel ha = hidden_add_kernel(ea, eb, MeanFunction::zero(), MeanFunction::zero(), 1.0);
  CHECK(ha(v1(0.3), v1(-1.1)) == kernel_add(ea, eb)(v1(0.3), v1(-1.1)));
  const Kernel sig = hidden_add_kernel(ea, eb, MeanFunction::constant(0.5), MeanFunction::constant(0.5), 2.0);
  CHECK(sig(v1(0.3), v1(-1.1)) == doctest::Approx(kernel_add(ea, eb)(v1(0.3), v1(-1.1)) + 0.5 * 2.0).epsilon(1e-15));
  const Kernel r = relu_kernel(unit_priors());
  const Kernel rr = hidden_add_kernel(r, r, MeanFunction::relu(unit_priors()), MeanFunction::relu(unit_priors()), 1.0);
  CHECK(rr(v1(1), v1(2)) == doctest::Approx(4.0176449812248318).epsilon(1e-12));
  const double m1 = oracle::expect2([](double w, double b) { return std::max(0.0, w + b); }, 1.0, 1.0);
  CHECK(MeanFunction::relu(unit_priors())(v1(1)) == doctest::Approx(m1).epsilon(1e-5));
  CHECK(MeanFunction::relu(unit_priors())(v1(2)) == doctest::Approx(std::sqrt(5.0 / (2.0 * pi))).epsilon(1e-14));
}

TEST_CASE("kernels are safe to evaluate concurrently") {
  const Kernel k = kernel_add(relu_kernel(unit_priors()), kernel_warp(rbf_bnn_kernel({1, 1}), WarpSpec{1, {0}, 2.0}));
  std::vector<double> out(4);
  {
    std::vector<std::jthread> ts;
    for (int t = 0; t < 4; ++t)
      ts.emplace_back([&, t] {
        double acc = 0.0;
        for (int i = 0; i < 2000; ++i) acc += k(v1(0.001 * i), v1(-0.002 * i));
        out[static_cast<std::size_t>(t)] = acc;
      });
  }
  for (double v : out) CHECK(v == out[0]);
}
