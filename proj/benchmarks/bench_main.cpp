#include <vector>

#include <benchmark/benchmark.h>

#include "bnnk/gp.hpp"
#include "bnnk/hmc.hpp"
#include "bnnk/network.hpp"
#include "bnnk/prior.hpp"

using namespace bnnk;

namespace {

std::vector<Vec> grid(int n) {
  std::vector<Vec> X;
  for (int i = 0; i < n; ++i) X.push_back(Vec::Constant(1, -3.0 + 6.0 * i / n));
  return X;
}

void BM_GramRelu(benchmark::State& state) {
  const Kernel k = kernel_add(relu_kernel({}), kernel_warp(rbf_bnn_kernel({}), WarpSpec{1, {0}, 1.0}));
  const auto X = grid(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(k.gram(X));
}
BENCHMARK(BM_GramRelu)->Arg(64)->Arg(256);

void BM_GpFit(benchmark::State& state) {
  const auto X = grid(static_cast<int>(state.range(0)));
  const Vec y = Vec::Random(static_cast<Eigen::Index>(X.size()));
  for (auto _ : state) benchmark::DoNotOptimize(gp_fit({relu_kernel({}), 0.01}, X, y));
}
BENCHMARK(BM_GpFit)->Arg(96)->Arg(256);

void BM_ForwardBackward(benchmark::State& state) {
  const Network net(output_sum({basic(Activation::relu(), {}, 50), basic(Activation::rbf(1.0), {}, 50)}));
  Rng rng(1);
  const Eigen::VectorXd theta = net.sample(rng).values;
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(1, state.range(0));
  const Eigen::MatrixXd d = Eigen::MatrixXd::Ones(1, state.range(0));
  Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.size());
  for (auto _ : state) benchmark::DoNotOptimize(net.forward_backward(theta, X, d, g));
}
BENCHMARK(BM_ForwardBackward)->Arg(96)->Arg(1024);

void BM_EmpiricalKernel(benchmark::State& state) {
  const ArchSpec a = hidden_mul({basic(Activation::relu(), {}, 50), basic(Activation::erf(), {}, 50)}, 1.0);
  MCOptions opt;
  opt.workers = 1;
  for (auto _ : state)
    benchmark::DoNotOptimize(empirical_kernel(a, Vec::Constant(1, 0.3), Vec::Constant(1, -0.8), 100000, 1, opt));
}
BENCHMARK(BM_EmpiricalKernel)->Unit(benchmark::kMillisecond);

void BM_HmcTrajectory(benchmark::State& state) {
  Eigen::MatrixXd X(1, 96);
  Eigen::VectorXd y(96);
  for (int i = 0; i < 96; ++i) {
    X(0, i) = -1.7 + 3.4 * i / 95.0;
    y(i) = X(0, i);
  }
  const BnnPosterior post(Network(basic(Activation::relu(), {}, 50)), X, y, 0.01);
  const LogDensityFn f = post.as_function();
  Rng rng(2);
  Eigen::VectorXd q = post.network().sample(rng).values;
  const Eigen::VectorXd inv_mass = Eigen::VectorXd::Ones(q.size());
  for (auto _ : state) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(q.size());
    leapfrog(f, q, p, 1e-4, 30, inv_mass);
  }
}
BENCHMARK(BM_HmcTrajectory)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
