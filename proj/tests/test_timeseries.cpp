#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include <doctest.h>

#include "bnnk/gp.hpp"
#include "bnnk/network.hpp"
#include "bnnk/prior.hpp"
#include "bnnk/timeseries.hpp"

using namespace bnnk;
using namespace bnnk::ts;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bnnk_ts_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

std::string csv_rows(int n, bool duplicate = false) {
  std::string s = "t,y\n";
  for (int i = 0; i < n; ++i) s += std::to_string(duplicate && i == 5 ? 4 : i) + "," + std::to_string(0.1 * i) + "\n";
  return s;
}

double train_rmse(const ModelResult& r, const GapSplit& split) {
  double acc = 0.0;
  for (std::size_t i = 0; i < split.train_t.size(); ++i) {
    REQUIRE(r.x[i] == split.train_t[i]);
    acc += std::pow(r.pred.mean(static_cast<Eigen::Index>(i)) - split.train_y[i], 2);
  }
  return std::sqrt(acc / static_cast<double>(split.train_t.size()));
}

ModelConfig config(const std::string& name, ModelKind kind, InferenceKind inf) {
  ModelConfig c;
  c.name = name;
  c.kind = kind;
  c.inference = inf;
  return c;
}

}  // namespace

TEST_CASE("series loading and validation") {
  const fs::path dir = temp_dir("load");
  write_file(dir / "ok.csv", csv_rows(120));
  CHECK(load_series(dir / "ok.csv").size() == 120);
  write_file(dir / "dup.csv", csv_rows(120, true));
  CHECK_THROWS(load_series(dir / "dup.csv"));
  write_file(dir / "short.csv", csv_rows(23));
  CHECK_THROWS(load_series(dir / "short.csv"));
  write_file(dir / "missing.csv", "t,y\n0,1\n1,\n");
  CHECK_THROWS(load_series(dir / "missing.csv"));
  CHECK_THROWS(load_series(dir / "absent.csv"));

  const TimeSeries s = synthetic_series(Seasonality::Additive);
  save_series(dir / "syn.csv", s);
  const TimeSeries back = load_series(dir / "syn.csv");
  REQUIRE(back.size() == 120);
  for (std::size_t i = 0; i < 120; ++i) {
    CHECK(back.t[i] == s.t[i]);
    CHECK(back.y[i] == s.y[i]);
  }
  CHECK(s.y[3] == doctest::Approx(0.25 + 1.0).epsilon(1e-12));
  fs::remove_all(dir);
}

TEST_CASE("gap split") {
  const GapSplit g = make_gap_split(synthetic_series(Seasonality::Multiplicative));
  CHECK(g.train_t.size() == 96);
  for (double t : g.train_t) CHECK((t < 36.0 || t >= 60.0));
  for (double t : g.gap_grid) CHECK((t >= 36.0 && t < 60.0));
  for (double t : g.extrap_grid) CHECK((t > 120.0 && t <= 240.0));
  CHECK(g.query_grid().size() == 96 + g.gap_grid.size() + g.extrap_grid.size());
  CHECK_THROWS_AS(make_gap_split(synthetic_series(Seasonality::Additive, 100)), std::invalid_argument);
}

TEST_CASE("model construction") {
  const GapSplit g = make_gap_split(synthetic_series(Seasonality::Additive));
  const Standardizer sc = Standardizer::fit(g.train_t, g.train_y);

  ModelConfig add = config("gp_add", ModelKind::CombinedGpAdd, InferenceKind::ExactGp);
  const BuiltModel gm = build_model(add, sc);
  REQUIRE(gm.kernel.has_value());
  const Kernel periodic = kernel_warp(rbf_bnn_kernel({add.periodic.sigma2_g, add.periodic.sigma2_u}),
                                      WarpSpec{1, {0}, 12.0 / sc.t_std});
  for (double raw : {0.0, 40.0, 130.0}) {
    const Vec x = Vec::Constant(1, sc.t(raw));
    CHECK((*gm.kernel)(x, x) ==
          doctest::Approx(k_relu(x, x, add.relu) + add.periodic.sigma2_w2 * periodic(x, x)).epsilon(1e-12));
  }

  const BuiltModel pm = build_model(config("p", ModelKind::PeriodicBnn, InferenceKind::Hmc), sc);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const ParamSet p = sample_params(pm.arch, s);
    for (double raw : {3.0, 50.0, 111.0})
      CHECK(std::abs(forward(pm.arch, p, Vec::Constant(1, sc.t(raw))) -
                     forward(pm.arch, p, Vec::Constant(1, sc.t(raw + 12.0)))) < 1e-10);
  }

  ModelConfig mul = config("mul", ModelKind::CombinedBnnMul, InferenceKind::Hmc);
  mul.sigma2_w2_shared = 2.0;
  const BuiltModel bm = build_model(mul, sc);
  ModelConfig gmul = mul;
  gmul.kind = ModelKind::CombinedGpMul;
  gmul.inference = InferenceKind::ExactGp;
  const Kernel km = *build_model(gmul, sc).kernel;
  std::uint64_t seed = 40;
  for (const auto& [a, b] : std::vector<std::pair<double, double>>{{0, 5}, {20, 70}, {100, 100}, {12, 130}}) {
    const Vec x = Vec::Constant(1, sc.t(a)), xp = Vec::Constant(1, sc.t(b));
    const MCEstimate e = empirical_kernel(bm.arch, x, xp, 100000, seed++);
    CHECK(std::abs(e.estimate - km(x, xp)) <= 3.0 * e.std_error);
  }

  CHECK_THROWS_AS(build_model(config("bad", ModelKind::CombinedGpAdd, InferenceKind::Hmc), sc), std::invalid_argument);
  CHECK_THROWS_AS(build_model(config("bad", ModelKind::ReluBnn, InferenceKind::ExactGp), sc), std::invalid_argument);
}

TEST_CASE("model config JSON") {
  ModelConfig c = config("m", ModelKind::CombinedBnnMul, InferenceKind::Ensemble);
  c.seed = 5;
  c.relu.sigma2_w2 = 3.0;
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(model_kind_from_string("combined_gp_mul") == ModelKind::CombinedGpMul);
  CHECK_THROWS(model_kind_from_string("lstm"));
  CHECK_THROWS(inference_from_string("vi"));
}

TEST_CASE("experiment outputs and the periodic-only failure mode") {
  const TimeSeries series = synthetic_series(Seasonality::Additive);
  const GapSplit g = make_gap_split(series);
  std::vector<ModelConfig> cfgs{config("periodic", ModelKind::PeriodicBnn, InferenceKind::Ensemble),
                                config("combined", ModelKind::CombinedBnnAdd, InferenceKind::Ensemble),
                                config("gp", ModelKind::CombinedGpAdd, InferenceKind::ExactGp)};
  for (auto& c : cfgs) {
    c.ensemble.n_members = 3;
    c.ensemble.steps = 1500;
  }
  const ExperimentResult r = run_experiment(series, cfgs, 1);
  REQUIRE(r.models.size() == 3);
  for (const auto& m : r.models) {
    CHECK(m.x.size() == g.query_grid().size());
    CHECK(m.pred.mean.size() == static_cast<Eigen::Index>(m.x.size()));
    CHECK((m.pred.std.array() >= 0.0).all());
  }
  CHECK(train_rmse(r.models[0], g) > train_rmse(r.models[1], g));
  CHECK(train_rmse(r.models[0], g) > train_rmse(r.models[2], g));
  CHECK(r.manifest.at("models").size() == 3);

  const fs::path dir = temp_dir("exp");
  write_experiment(r, dir);
  for (const char* f : {"periodic.csv", "combined.csv", "gp.csv", "manifest.json"}) CHECK(fs::exists(dir / f));
  fs::remove_all(dir);
}

TEST_CASE("GP predictions do not depend on kernel argument order") {
  const GapSplit g = make_gap_split(synthetic_series(Seasonality::Multiplicative));
  const Standardizer sc = Standardizer::fit(g.train_t, g.train_y);
  std::vector<Vec> X, Xs;
  Vec y(static_cast<Eigen::Index>(g.train_t.size()));
  for (std::size_t i = 0; i < g.train_t.size(); ++i) {
    X.push_back(Vec::Constant(1, sc.t(g.train_t[i])));
    y(static_cast<Eigen::Index>(i)) = sc.y(g.train_y[i]);
  }
  for (double t : g.extrap_grid) Xs.push_back(Vec::Constant(1, sc.t(t)));
  const Kernel a = relu_kernel({0.5, 0.5, 2.0});
  const Kernel b = kernel_warp(rbf_bnn_kernel({1.0, 1.0}), WarpSpec{1, {0}, 12.0 / sc.t_std});
  for (bool mul : {false, true}) {
    const Kernel ab = mul ? kernel_mul(a, b) : kernel_add(a, b);
    const Kernel ba = mul ? kernel_mul(b, a) : kernel_add(b, a);
    const GPPrediction p1 = gp_predict(gp_fit({ab, 0.01}, X, y), Xs);
    const GPPrediction p2 = gp_predict(gp_fit({ba, 0.01}, X, y), Xs);
    CHECK((p1.mean - p2.mean).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((p1.cov - p2.cov).cwiseAbs().maxCoeff() < 1e-9);
  }
}
