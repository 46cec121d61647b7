#include "bnnk/prior.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "bnnk/network.hpp"
#include "bnnk/rng.hpp"

namespace bnnk {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

bool per_unit_eligible(const ArchSpec& a) {
  if (a.kind == NodeKind::OutputSum) {
    return std::all_of(a.children.begin(), a.children.end(), [](const ArchSpec& c) { return per_unit_eligible(c); });
  }
  return a.is_feature() && a.single_layer();
}

MatrixXd pair_matrix(const VectorXd& x, const VectorXd& x_p) {
  MatrixXd X(x.size(), 2);
  X.col(0) = x;
  X.col(1) = x_p;
  return X;
}

// `count` independent, unbiased samples of E[f(x) f(x')] for node `a`.
std::vector<double> sample_terms(const ArchSpec& a, const MatrixXd& X, std::size_t count, Rng rng, bool reduced) {
  std::vector<double> terms(count, 0.0);
  if (reduced && a.kind == NodeKind::OutputSum) {
    for (std::size_t c = 0; c < a.children.size(); ++c) {
      const auto child = sample_terms(a.children[c], X, count, rng.split(c), reduced);
      for (std::size_t i = 0; i < count; ++i) terms[i] += child[i];
    }
    return terms;
  }
  if (reduced && a.is_feature() && a.single_layer()) {
    // Hidden units of a single-layer tree are i.i.d. across the unit index.
    const Network net(with_width(a, count));
    const ParamSet p = net.sample(rng);
    const MatrixXd F = net.features(p.values, X);
    const double s2 = a.output_variance();
    for (std::size_t i = 0; i < count; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      terms[i] = s2 * F(r, 0) * F(r, 1) + a.sigma2_b_out;
    }
    return terms;
  }
  const Network net(a);
  if (reduced && a.is_feature()) {
    const double s2 = a.output_variance() / static_cast<double>(a.hidden_width());
    for (std::size_t i = 0; i < count; ++i) {
      const ParamSet p = net.sample(rng);
      const MatrixXd F = net.features(p.values, X);
      terms[i] = s2 * F.col(0).dot(F.col(1)) + a.sigma2_b_out;
    }
    return terms;
  }
  for (std::size_t i = 0; i < count; ++i) {
    const ParamSet p = net.sample(rng);
    const MatrixXd out = net.forward(p.values, X);
    terms[i] = out(0, 0) * out(0, 1);
  }
  return terms;
}

struct Moments {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
};

Moments moments_of(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) {
    m.n += 1.0;
    const double d = x - m.mean;
    m.mean += d / m.n;
    m.m2 += d * (x - m.mean);
  }
  return m;
}

Moments merge(const Moments& a, const Moments& b) {
  if (a.n == 0.0) return b;
  Moments out;
  out.n = a.n + b.n;
  const double d = b.mean - a.mean;
  out.mean = a.mean + d * b.n / out.n;
  out.m2 = a.m2 + b.m2 + d * d * a.n * b.n / out.n;
  return out;
}

}  // namespace

MCEstimate empirical_kernel(const ArchSpec& arch, const VectorXd& x, const VectorXd& x_p, std::size_t n_samples,
                            std::uint64_t seed, const MCOptions& options) {
  if (n_samples < kMinKernelSamples)
    throw std::invalid_argument("empirical_kernel: n_samples must be >= " + std::to_string(kMinKernelSamples));
  if (options.chunk_size == 0) throw std::invalid_argument("empirical_kernel: chunk_size must be positive");
  arch.validate();
  if (static_cast<std::size_t>(x.size()) != arch.input_dim || static_cast<std::size_t>(x_p.size()) != arch.input_dim)
    throw std::invalid_argument("empirical_kernel: inputs must have dimension " + std::to_string(arch.input_dim));

  const MatrixXd X = pair_matrix(x, x_p);
  const Rng root(seed);
  const std::size_t n_chunks = (n_samples + options.chunk_size - 1) / options.chunk_size;
  std::vector<Moments> chunk_moments(n_chunks);

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < n_chunks; k = next++) {
      const std::size_t count = std::min(options.chunk_size, n_samples - k * options.chunk_size);
      chunk_moments[k] = moments_of(sample_terms(arch, X, count, root.split(k), options.variance_reduced));
    }
  };

  unsigned workers = options.workers ? options.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n_chunks));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  Moments total;
  for (const auto& m : chunk_moments) total = merge(total, m);
  MCEstimate est;
  est.n_samples = n_samples;
  est.estimate = total.mean;
  est.std_error = std::sqrt(total.m2 / (total.n - 1.0) / total.n);
  return est;
}

MatrixXd sample_prior_functions(const ArchSpec& arch, const std::vector<VectorXd>& grid, std::size_t n_draws,
                                std::uint64_t seed) {
  if (n_draws < 1) throw std::invalid_argument("sample_prior_functions: n_draws must be >= 1");
  const Network net(arch);
  if (net.num_outputs() != 1) throw std::invalid_argument("sample_prior_functions: architecture has multiple outputs");
  MatrixXd X(static_cast<Eigen::Index>(arch.input_dim), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (static_cast<std::size_t>(grid[j].size()) != arch.input_dim)
      throw std::invalid_argument("sample_prior_functions: grid point dimension mismatch");
    X.col(static_cast<Eigen::Index>(j)) = grid[j];
  }
  MatrixXd draws(static_cast<Eigen::Index>(n_draws), X.cols());
  for (std::size_t i = 0; i < n_draws; ++i) {
    Rng rng(seed + i);
    const ParamSet p = net.sample(rng);
    draws.row(static_cast<Eigen::Index>(i)) = net.forward(p.values, X).row(0);
  }
  return draws;
}

}  // namespace bnnk
