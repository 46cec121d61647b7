#include "bnnk/timeseries.hpp"

#include <chrono>
#include <limits>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "bnnk/io.hpp"
#include "bnnk/rng.hpp"
#include "bnnk/version.hpp"

namespace bnnk::ts {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void TimeSeries::validate() const {
  if (t.size() != y.size()) throw std::invalid_argument("series '" + name + "': |t| != |y|");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(y[i]))
      throw std::invalid_argument("series '" + name + "': non-finite value at row " + std::to_string(i));
    if (i > 0 && !(t[i] > t[i - 1]))
      throw std::invalid_argument("series '" + name + "': t is not strictly increasing at row " + std::to_string(i));
  }
}

TimeSeries load_series(const std::filesystem::path& path) {
  const io::CsvTable table = io::read_csv(path);
  if (table.header.size() != 2 || table.header[0] != "t" || table.header[1] != "y")
    throw std::runtime_error(path.string() + ": expected header 't,y'");
  TimeSeries s;
  s.name = path.stem().string();
  s.t = table.column_values("t");
  s.y = table.column_values("y");
  if (s.size() < kMinSeriesLength)
    throw std::runtime_error(path.string() + ": need at least " + std::to_string(kMinSeriesLength) + " rows, got " +
                             std::to_string(s.size()));
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  return s;
}

void save_series(const std::filesystem::path& path, const TimeSeries& series) {
  series.validate();
  io::CsvTable table{{"t", "y"}, {}};
  for (std::size_t i = 0; i < series.size(); ++i) table.rows.push_back({series.t[i], series.y[i]});
  io::write_csv(path, table);
}

TimeSeries synthetic_series(Seasonality mode, std::size_t months, double noise_std, std::uint64_t seed) {
  TimeSeries s;
  s.name = mode == Seasonality::Additive ? "synthetic_additive" : "synthetic_multiplicative";
  Rng rng(seed);
  for (std::size_t i = 0; i < months; ++i) {
    const double t = static_cast<double>(i);
    const double season = std::sin(2.0 * std::numbers::pi * t / 12.0);
    double y = mode == Seasonality::Additive ? t / 12.0 + season : (1.0 + t / 24.0) * (1.0 + 0.4 * season);
    if (noise_std > 0.0) y += noise_std * rng.normal();
    s.t.push_back(t);
    s.y.push_back(y);
  }
  return s;
}

std::vector<double> GapSplit::query_grid() const {
  std::vector<double> q = train_t;
  q.insert(q.end(), gap_grid.begin(), gap_grid.end());
  q.insert(q.end(), extrap_grid.begin(), extrap_grid.end());
  return q;
}

GapSplit make_gap_split(const TimeSeries& series) {
  series.validate();
  GapSplit g;
  if (series.size() == 0 || series.t.back() - series.t.front() < g.extrap_begin - 1.0)
    throw std::invalid_argument("make_gap_split: series must cover at least 120 months");
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double t = series.t[i];
    if (t < 0.0 || t >= g.extrap_begin) continue;
    if (t >= g.gap_begin && t < g.gap_end) continue;
    g.train_t.push_back(t);
    g.train_y.push_back(series.y[i]);
  }
  for (double m = g.gap_begin; m < g.gap_end; m += 1.0) g.gap_grid.push_back(m);
  for (double m = g.extrap_begin + 1.0; m <= g.extrap_end; m += 1.0) g.extrap_grid.push_back(m);
  return g;
}

Standardizer Standardizer::fit(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() < 2 || t.size() != y.size()) throw std::invalid_argument("Standardizer: need >= 2 paired points");
  auto moments = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size()));
    if (!(sd > 0.0)) sd = 1.0;
  };
  Standardizer s;
  moments(t, s.t_mean, s.t_std);
  moments(y, s.y_mean, s.y_std);
  return s;
}

nlohmann::json Standardizer::to_json() const {
  return {{"t_mean", t_mean}, {"t_std", t_std}, {"y_mean", y_mean}, {"y_std", y_std}};
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::ReluBnn: return "relu_bnn";
    case ModelKind::PeriodicBnn: return "periodic_bnn";
    case ModelKind::CombinedBnnAdd: return "combined_bnn_add";
    case ModelKind::CombinedBnnMul: return "combined_bnn_mul";
    case ModelKind::CombinedGpAdd: return "combined_gp_add";
    case ModelKind::CombinedGpMul: return "combined_gp_mul";
  }
  return "?";
}

std::string to_string(InferenceKind kind) {
  switch (kind) {
    case InferenceKind::Hmc: return "hmc";
    case InferenceKind::Ensemble: return "ensemble";
    case InferenceKind::ExactGp: return "exact_gp";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  for (auto k : {ModelKind::ReluBnn, ModelKind::PeriodicBnn, ModelKind::CombinedBnnAdd, ModelKind::CombinedBnnMul,
                 ModelKind::CombinedGpAdd, ModelKind::CombinedGpMul})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

InferenceKind inference_from_string(const std::string& s) {
  for (auto k : {InferenceKind::Hmc, InferenceKind::Ensemble, InferenceKind::ExactGp})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown inference '" + s + "'");
}

bool is_gp_kind(ModelKind kind) { return kind == ModelKind::CombinedGpAdd || kind == ModelKind::CombinedGpMul; }

nlohmann::json PeriodicPrior::to_json() const {
  return {{"sigma2_g", sigma2_g}, {"sigma2_u", sigma2_u}, {"sigma2_w2", sigma2_w2}};
}

PeriodicPrior PeriodicPrior::from_json(const nlohmann::json& j) {
  PeriodicPrior p;
  p.sigma2_g = j.value("sigma2_g", p.sigma2_g);
  p.sigma2_u = j.value("sigma2_u", p.sigma2_u);
  p.sigma2_w2 = j.value("sigma2_w2", p.sigma2_w2);
  return p;
}

void ModelConfig::validate() const {
  const bool gp = is_gp_kind(kind);
  if (gp && inference != InferenceKind::ExactGp)
    throw std::invalid_argument("model '" + name + "': " + to_string(kind) + " requires exact_gp inference, got " +
                                to_string(inference));
  if (!gp && inference == InferenceKind::ExactGp)
    throw std::invalid_argument("model '" + name + "': " + to_string(kind) + " needs hmc or ensemble inference");
  if (!(period > 0.0)) throw std::invalid_argument("model '" + name + "': period must be positive");
  if (!(noise_var > 0.0)) throw std::invalid_argument("model '" + name + "': noise_var must be positive");
  if (width < 1) throw std::invalid_argument("model '" + name + "': width must be >= 1");
  relu.validate();
  if (!(periodic.sigma2_g > 0.0 && periodic.sigma2_u > 0.0 && periodic.sigma2_w2 > 0.0))
    throw std::invalid_argument("model '" + name + "': periodic prior variances must be positive");
  if (!(sigma2_w2_shared > 0.0)) throw std::invalid_argument("model '" + name + "': sigma2_w2_shared must be positive");
  if (inference == InferenceKind::Hmc) hmc.validate();
  if (inference == InferenceKind::Ensemble) ensemble.validate();
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j{{"name", name},
                   {"kind", to_string(kind)},
                   {"inference", to_string(inference)},
                   {"priors", {{"relu", relu.to_json()}, {"periodic", periodic.to_json()}, {"sigma2_w2_shared", sigma2_w2_shared}}},
                   {"period", period},
                   {"noise_var", noise_var},
                   {"width", width},
                   {"tune", tune},
                   {"hmc", hmc.to_json()},
                   {"ensemble", ensemble.to_json()}};
  if (seed) j["seed"] = *seed;
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = model_kind_from_string(j.at("kind").get<std::string>());
  c.name = j.value("name", to_string(c.kind));
  c.inference = j.contains("inference") ? inference_from_string(j.at("inference").get<std::string>())
                                        : (is_gp_kind(c.kind) ? InferenceKind::ExactGp : InferenceKind::Hmc);
  if (j.contains("priors")) {
    const auto& p = j.at("priors");
    if (p.contains("relu")) c.relu = PriorSpec::from_json(p.at("relu"));
    if (p.contains("periodic")) c.periodic = PeriodicPrior::from_json(p.at("periodic"));
    c.sigma2_w2_shared = p.value("sigma2_w2_shared", c.sigma2_w2_shared);
  }
  c.period = j.value("period", c.period);
  c.noise_var = j.value("noise_var", c.noise_var);
  c.width = j.value("width", c.width);
  c.tune = j.value("tune", c.tune);
  if (j.contains("hmc")) c.hmc = HMCConfig::from_json(j.at("hmc"));
  if (j.contains("ensemble")) c.ensemble = EnsembleConfig::from_json(j.at("ensemble"));
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

namespace {

ArchSpec relu_component(const ModelConfig& cfg) { return basic(Activation::relu(), cfg.relu, cfg.width, 1); }

ArchSpec periodic_component(const ModelConfig& cfg, const Standardizer& scaler) {
  const PriorSpec p{cfg.periodic.sigma2_u, 1.0, cfg.periodic.sigma2_w2};
  ArchSpec a = basic(Activation::rbf(cfg.periodic.sigma2_g), p, cfg.width, 1);
  WarpSpec w;
  w.in_dim = 1;
  w.periodic_dims = {0};
  w.period = cfg.period / scaler.t_std;
  a.warp = w;
  return a;
}

std::vector<Vec> as_points(const std::vector<double>& t, const Standardizer& scaler) {
  std::vector<Vec> X;
  X.reserve(t.size());
  for (double v : t) X.push_back(Vec::Constant(1, scaler.t(v)));
  return X;
}

MatrixXd as_columns(const std::vector<double>& t, const Standardizer& scaler) {
  MatrixXd X(1, static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) X(0, static_cast<Eigen::Index>(i)) = scaler.t(t[i]);
  return X;
}

VectorXd standardized_targets(const std::vector<double>& y, const Standardizer& scaler) {
  VectorXd v(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) v(static_cast<Eigen::Index>(i)) = scaler.y(y[i]);
  return v;
}

bool uses_relu(ModelKind k) { return k != ModelKind::PeriodicBnn; }
bool uses_periodic(ModelKind k) { return k != ModelKind::ReluBnn; }
bool is_mul(ModelKind k) { return k == ModelKind::CombinedBnnMul || k == ModelKind::CombinedGpMul; }

}  // namespace

BuiltModel build_model(const ModelConfig& cfg, const Standardizer& scaler) {
  cfg.validate();
  BuiltModel m{cfg, scaler, {}, std::nullopt};
  switch (cfg.kind) {
    case ModelKind::ReluBnn: m.arch = relu_component(cfg); break;
    case ModelKind::PeriodicBnn: m.arch = periodic_component(cfg, scaler); break;
    case ModelKind::CombinedBnnAdd:
    case ModelKind::CombinedGpAdd:
      m.arch = output_sum({relu_component(cfg), periodic_component(cfg, scaler)});
      break;
    case ModelKind::CombinedBnnMul:
    case ModelKind::CombinedGpMul:
      m.arch = hidden_mul({relu_component(cfg), periodic_component(cfg, scaler)}, cfg.sigma2_w2_shared);
      break;
  }
  m.arch.validate();
  if (is_gp_kind(cfg.kind)) m.kernel = equivalent_kernel(m.arch);
  return m;
}

ModelConfig tune_hyperparameters(const ModelConfig& cfg, const Standardizer& scaler, const std::vector<double>& t,
                                 const std::vector<double>& y) {
  const std::vector<Vec> X = as_points(t, scaler);
  const VectorXd Y = standardized_targets(y, scaler);
  const bool mul = is_mul(cfg.kind);
  const std::vector<double> relu_first = uses_relu(cfg.kind) ? std::vector<double>{0.5, 2.0} : std::vector<double>{cfg.relu.sigma2_w1};
  const std::vector<double> relu_out =
      uses_relu(cfg.kind) && !mul ? std::vector<double>{0.5, 1.0, 2.0, 4.0, 8.0} : std::vector<double>{cfg.relu.sigma2_w2};
  const std::vector<double> rbf_g =
      uses_periodic(cfg.kind) ? std::vector<double>{0.25, 0.5, 1.0, 2.0, 4.0} : std::vector<double>{cfg.periodic.sigma2_g};
  const std::vector<double> rbf_out = uses_periodic(cfg.kind) && !mul ? std::vector<double>{0.1, 0.3, 1.0}
                                                                       : std::vector<double>{cfg.periodic.sigma2_w2};
  const std::vector<double> shared = mul ? std::vector<double>{0.5, 1.0, 2.0, 4.0, 8.0} : std::vector<double>{cfg.sigma2_w2_shared};

  ModelConfig best = cfg;
  double best_lml = -std::numeric_limits<double>::infinity();
  for (double a : relu_first)
    for (double b : relu_out)
      for (double g : rbf_g)
        for (double c : rbf_out)
          for (double s : shared) {
            ModelConfig trial = cfg;
            trial.relu.sigma2_w1 = a;
            trial.relu.sigma2_b1 = a;
            trial.relu.sigma2_w2 = b;
            trial.periodic.sigma2_g = g;
            trial.periodic.sigma2_w2 = c;
            trial.sigma2_w2_shared = s;
            const BuiltModel m = build_model(trial, scaler);
            const Kernel k = m.kernel ? *m.kernel : equivalent_kernel(m.arch);
            try {
              const double lml = gp_log_marginal(gp_fit(GPModel{k, cfg.noise_var}, X, Y));
              if (lml > best_lml) {
                best_lml = lml;
                best = trial;
              }
            } catch (const GPFitError&) {
            }
          }
  if (!std::isfinite(best_lml)) throw std::runtime_error("tune_hyperparameters: no grid point could be fitted");
  return best;
}

FittedModel::FittedModel(BuiltModel model, const std::vector<double>& t, const std::vector<double>& y,
                         std::uint64_t seed)
    : model_(std::move(model)) {
  const ModelConfig& cfg = model_.config;
  const Standardizer& sc = model_.scaler;
  const VectorXd Y = standardized_targets(y, sc);
  switch (cfg.inference) {
    case InferenceKind::ExactGp: {
      gp_ = gp_fit(GPModel{*model_.kernel, cfg.noise_var}, as_points(t, sc), Y);
      diag_.log_marginal = gp_log_marginal(*gp_);
      break;
    }
    case InferenceKind::Hmc: {
      const Network net(model_.arch);
      const BnnPosterior post(net, as_columns(t, sc), Y, cfg.noise_var);
      HMCConfig hc = cfg.hmc;
      hc.seed = seed;
      const Rng init_root = Rng(seed).split(0x1417);
      std::vector<VectorXd> inits;
      for (std::size_t c = 0; c < hc.n_chains; ++c) {
        Rng r = init_root.split(c);
        inits.push_back(net.sample(r).values);
      }
      chain_ = hmc_sample(post.as_function(), inits, hc);
      diag_.acceptance_rate = chain_->acceptance_rate;
      diag_.n_samples = chain_->samples.size();
      break;
    }
    case InferenceKind::Ensemble: {
      ensemble_ = anchored_ensemble_train(model_.arch, as_columns(t, sc), Y, cfg.ensemble, seed);
      diag_.n_samples = ensemble_->members.size();
      break;
    }
  }
}

PredictiveMoments FittedModel::predict(const std::vector<double>& t, bool include_noise) const {
  const ModelConfig& cfg = model_.config;
  const Standardizer& sc = model_.scaler;
  PredictiveMoments pm;
  if (gp_) {
    const GPPrediction p = gp_predict(*gp_, as_points(t, sc));
    pm.mean = p.mean;
    pm.std = p.cov.diagonal().cwiseMax(0.0);
    if (include_noise) pm.std.array() += cfg.noise_var;
    pm.std = pm.std.cwiseSqrt();
  } else if (chain_) {
    pm = bnn_predictive_hmc(Network(model_.arch), chain_->samples, as_columns(t, sc),
                            include_noise ? cfg.noise_var : 0.0);
  } else {
    pm = ensemble_predict(*ensemble_, as_columns(t, sc), include_noise);
  }
  pm.mean = pm.mean.array() * sc.y_std + sc.y_mean;
  pm.std *= sc.y_std;
  return pm;
}

nlohmann::json FittedModel::snapshot() const {
  nlohmann::json j{{"config", model_.config.to_json()}, {"standardizer", model_.scaler.to_json()}};
  if (chain_) j["chain"] = chain_to_json(model_.arch, *chain_, model_.config.hmc, model_.config.noise_var);
  if (ensemble_) j["ensemble"] = ensemble_->to_json();
  if (gp_) {
    j["kernel"] = model_.kernel->to_json();
    j["log_marginal"] = diag_.log_marginal;
    j["jitter"] = gp_->jitter;
  }
  return j;
}

ExperimentResult run_experiment(const TimeSeries& series, const std::vector<ModelConfig>& configs, std::uint64_t seed,
                                bool include_noise) {
  if (configs.empty()) throw std::invalid_argument("run_experiment: no model configs");
  for (const auto& c : configs) c.validate();
  const GapSplit split = make_gap_split(series);
  const Standardizer scaler = Standardizer::fit(split.train_t, split.train_y);
  const std::vector<double> grid = split.query_grid();

  ExperimentResult result;
  nlohmann::json models = nlohmann::json::array();
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    ModelResult r;
    r.seed = configs[i].seed.value_or(splitmix64(seed + i));
    try {
      r.config = configs[i].tune ? tune_hyperparameters(configs[i], scaler, split.train_t, split.train_y) : configs[i];
      const FittedModel fitted(build_model(r.config, scaler), split.train_t, split.train_y, r.seed);
      r.x = grid;
      r.pred = fitted.predict(grid, include_noise);
      r.diagnostics = fitted.diagnostics();
    } catch (const std::exception& e) {
      throw std::runtime_error("model '" + configs[i].name + "': " + e.what());
    }
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    models.push_back({{"name", r.config.name},
                      {"file", r.config.name + ".csv"},
                      {"config", r.config.to_json()},
                      {"config_hash", io::config_hash(r.config.to_json())},
                      {"seed", r.seed},
                      {"runtime_s", r.runtime_s},
                      {"rows", r.x.size()},
                      {"log_marginal", r.diagnostics.log_marginal},
                      {"acceptance_rate", r.diagnostics.acceptance_rate},
                      {"n_samples", r.diagnostics.n_samples}});
    result.models.push_back(std::move(r));
  }
  result.manifest = {{"version", kVersion},
                     {"schema_version", kSchemaVersion},
                     {"series", series.name},
                     {"seed", seed},
                     {"include_noise", include_noise},
                     {"standardizer", scaler.to_json()},
                     {"n_train", split.train_t.size()},
                     {"gap", {split.gap_begin, split.gap_end}},
                     {"extrapolation", {split.extrap_begin, split.extrap_end}},
                     {"models", models}};
  return result;
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& m : result.models) {
    io::CsvTable table{{"x", "mean", "std"}, {}};
    for (std::size_t i = 0; i < m.x.size(); ++i)
      table.rows.push_back({m.x[i], m.pred.mean(static_cast<Eigen::Index>(i)), m.pred.std(static_cast<Eigen::Index>(i))});
    io::write_csv(out_dir / (m.config.name + ".csv"), table);
  }
  io::write_json(out_dir / "manifest.json", result.manifest);
}

}  // namespace bnnk::ts
