#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "bnnk/network.hpp"
#include "bnnk/prior.hpp"
#include "bnnk/stats.hpp"

using namespace bnnk;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd v1(double a) { return VectorXd::Constant(1, a); }

void check_within(const MCEstimate& e, double target, double n_se = 3.0) {
  CAPTURE(e.estimate);
  CAPTURE(e.std_error);
  CAPTURE(target);
  CHECK(std::abs(e.estimate - target) <= n_se * e.std_error);
}

const std::vector<std::pair<double, double>> kPairs{{-2.0, -1.5}, {-1.0, 0.5}, {-0.3, -0.3}, {0.0, 1.0}, {0.2, 2.5},
                                                    {0.7, -0.7}, {1.0, 1.0},   {1.3, 0.4},   {2.0, -2.0}, {2.5, 1.8}};

// CDF of standardised f(x) for a single-layer ReLU net, with the output layer integrated out.
double rb_ks_distance(std::size_t width, std::size_t n_draws, std::uint64_t seed) {
  const PriorSpec p{1.0, 1.0, 1.0};
  const Network net(basic(Activation::relu(), p, width));
  const MatrixXd X = MatrixXd::Constant(1, 1, 1.0);
  const double kxx = k_relu(v1(1.0), v1(1.0), p);
  Rng rng(seed);
  std::vector<double> scale(n_draws);
  for (auto& s : scale) {
    const VectorXd psi = net.features(net.sample(rng).values, X).col(0);
    s = std::sqrt(p.sigma2_w2 * psi.squaredNorm() / static_cast<double>(width) / kxx);
  }
  double worst = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double t = -4.0 + 0.02 * i;
    double cdf = 0.0;
    for (double s : scale) cdf += s > 0.0 ? stats::normal_cdf(t / s) : (t >= 0.0 ? 1.0 : 0.0);
    worst = std::max(worst, std::abs(cdf / static_cast<double>(n_draws) - stats::normal_cdf(t)));
  }
  return worst;
}

}  // namespace

TEST_CASE("empirical kernel closed-form examples") {
  const PriorSpec p{1.0, 1.0, 1.0};
  const MCEstimate e = empirical_kernel(basic(Activation::relu(), p, 50), v1(1.0), v1(1.0), 200000, 1);
  CHECK(e.n_samples == 200000);
  check_within(e, 1.0);
  const MCEstimate c = empirical_kernel(basic(Activation::cosine(), {1.0, 0.0, 1.0}, 50), v1(1.0), v1(-1.0), 200000, 2);
  check_within(c, 0.5676676416183064);
}

TEST_CASE("empirical kernel does not depend on worker count") {
  const ArchSpec a = output_sum({basic(Activation::relu(), {}, 50), basic(Activation::erf(), {}, 50)});
  MCOptions one;
  one.workers = 1;
  one.chunk_size = 1000;
  MCOptions many = one;
  many.workers = 5;
  const MCEstimate e1 = empirical_kernel(a, v1(0.3), v1(-0.6), 10000, 77, one);
  const MCEstimate e5 = empirical_kernel(a, v1(0.3), v1(-0.6), 10000, 77, many);
  CHECK(e1.estimate == e5.estimate);
  CHECK(e1.std_error == e5.std_error);
}

TEST_CASE("empirical kernel rejects small sample counts") {
  CHECK_THROWS_AS(empirical_kernel(basic(Activation::relu(), {}, 5), v1(0), v1(0), 999, 1), std::invalid_argument);
  CHECK_THROWS_AS(empirical_kernel(basic(Activation::relu(), {}, 5), VectorXd::Zero(2), v1(0), 1000, 1),
                  std::invalid_argument);
}

TEST_CASE("full-draw and variance-reduced estimators agree") {
  const ArchSpec a = basic(Activation::erf(), {2.0, 0.5, 1.5}, 64);
  MCOptions full;
  full.variance_reduced = false;
  const MCEstimate r = empirical_kernel(a, v1(0.8), v1(-0.4), 100000, 3);
  const MCEstimate f = empirical_kernel(a, v1(0.8), v1(-0.4), 100000, 4, full);
  const double target = k_erf(v1(0.8), v1(-0.4), {2.0, 0.5, 1.5});
  check_within(r, target);
  check_within(f, target);
  CHECK(r.std_error < f.std_error);
}

TEST_CASE("hidden product matches the product of kernels") {
  const PriorSpec p{1.0, 1.0, 1.0};
  const ArchSpec a = hidden_mul({basic(Activation::relu(), p, 50), basic(Activation::relu(), p, 50)}, 1.0);
  std::uint64_t seed = 100;
  for (const auto& [x, xp] : kPairs) {
    const double k = k_relu(v1(x), v1(xp), p);
    check_within(empirical_kernel(a, v1(x), v1(xp), 100000, seed++), k * k);
  }
}

TEST_CASE("output sum matches the sum of kernels") {
  const PriorSpec pa{1.0, 1.0, 2.0}, pb{2.0, 0.5, 0.5};
  const ArchSpec a = output_sum({basic(Activation::relu(), pa, 50), basic(Activation::erf(), pb, 50)});
  std::uint64_t seed = 200;
  for (const auto& [x, xp] : kPairs)
    check_within(empirical_kernel(a, v1(x), v1(xp), 100000, seed++),
                 k_relu(v1(x), v1(xp), pa) + k_erf(v1(x), v1(xp), pb));
}

TEST_CASE("hidden sum carries the mean cross term") {
  const PriorSpec p{1.0, 1.0, 1.0};
  const ArchSpec a = hidden_add({basic(Activation::relu(), p, 50), basic(Activation::relu(), {0.5, 2.0, 1.0}, 50)}, 2.0);
  const Kernel k = equivalent_kernel(a);
  std::uint64_t seed = 300;
  for (const auto& [x, xp] : kPairs) check_within(empirical_kernel(a, v1(x), v1(xp), 100000, seed++), k(v1(x), v1(xp)));

  const ArchSpec odd = hidden_add({basic(Activation::erf(), p, 50), basic(Activation::erf(), {3.0, 0.2, 1.0}, 50)}, 2.0);
  const Kernel ko = equivalent_kernel(odd);
  for (const auto& [x, xp] : kPairs) {
    const double plain = 2.0 * (k_erf(v1(x), v1(xp), p) + k_erf(v1(x), v1(xp), {3.0, 0.2, 1.0}));
    CHECK(ko(v1(x), v1(xp)) == doctest::Approx(plain).epsilon(1e-12));
  }
}

TEST_CASE("prior function draws have the analytic moments") {
  const PriorSpec p{1.0, 1.0, 1.0};
  const ArchSpec a = basic(Activation::relu(), p, 4096);
  const std::vector<VectorXd> grid{v1(-1.5), v1(0.0), v1(1.0)};
  const std::size_t n = 10000;
  const MatrixXd F = sample_prior_functions(a, grid, n, 5);
  REQUIRE(F.rows() == static_cast<Eigen::Index>(n));
  REQUIRE(F.cols() == 3);
  for (Eigen::Index j = 0; j < F.cols(); ++j) {
    std::vector<double> col(F.col(j).data(), F.col(j).data() + n);
    const double m = stats::mean(col);
    CHECK(std::abs(m) < 4.0 * stats::standard_error(col));
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = (col[i] - m) * (col[i] - m);
    const double kxx = k_relu(grid[static_cast<std::size_t>(j)], grid[static_cast<std::size_t>(j)], p);
    CHECK(std::abs(stats::mean(sq) - kxx) < 3.0 * stats::standard_error(sq));
  }
  CHECK(sample_prior_functions(a, grid, 3, 9) == sample_prior_functions(a, grid, 3, 9));
  const ParamSet p0 = sample_params(a, 9);
  CHECK(sample_prior_functions(a, grid, 1, 9)(0, 2) == doctest::Approx(forward(a, p0, grid[2])).epsilon(1e-12));
}

TEST_CASE("output product draws are not Gaussian") {
  const ArchSpec a = output_product({basic(Activation::relu(), {}, 512), basic(Activation::relu(), {}, 512)});
  const MatrixXd F = sample_prior_functions(a, {v1(0.5)}, 5000, 11);
  std::vector<double> f(F.data(), F.data() + F.size());
  CHECK(stats::excess_kurtosis(f) > 0.5);

  const ArchSpec s = output_sum({basic(Activation::relu(), {}, 512), basic(Activation::relu(), {}, 512)});
  const MatrixXd G = sample_prior_functions(s, {v1(0.5)}, 5000, 12);
  std::vector<double> g(G.data(), G.data() + G.size());
  CHECK(std::abs(stats::excess_kurtosis(g)) < 0.3);
}

TEST_CASE("wider networks are closer to Gaussian") {
  std::vector<double> ks;
  for (std::size_t h : {8, 64, 512, 4096}) ks.push_back(rb_ks_distance(h, 2000, 21));
  CAPTURE(ks[0]);
  CAPTURE(ks[1]);
  CAPTURE(ks[2]);
  CAPTURE(ks[3]);
  for (std::size_t i = 1; i < ks.size(); ++i) CHECK(ks[i] <= ks[i - 1]);
  CHECK(ks[3] < 0.02);
}

TEST_CASE("deep networks are supported by the sampler and the oracle") {
  const ArchSpec d = deep({{Activation::relu(), 64, 1.0, 1.0}, {Activation::relu(), 64, 1.0, 1.0}}, 1.0);
  const MCEstimate e = empirical_kernel(d, v1(0.5), v1(0.5), 2000, 1);
  CHECK(e.estimate > 0.0);
  CHECK(std::isfinite(e.std_error));
}
