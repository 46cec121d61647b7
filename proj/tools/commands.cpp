#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <stdexcept>

#include "bnnk/arch.hpp"
#include "bnnk/ensemble.hpp"
#include "bnnk/gp.hpp"
#include "bnnk/hmc.hpp"
#include "bnnk/io.hpp"
#include "bnnk/kernel.hpp"
#include "bnnk/network.hpp"
#include "bnnk/pendulum.hpp"
#include "bnnk/prior.hpp"
#include "bnnk/timeseries.hpp"
#include "bnnk/version.hpp"

namespace bnnk::cli {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

void Outputs::commit(const std::filesystem::path& out_dir) const {
  std::filesystem::create_directories(out_dir);
  for (const auto& [name, text] : files_) io::write_text_atomic(out_dir / name, text);
}

namespace {

json load_config(const CommonOptions& o) {
  if (o.config.empty()) return json::object();
  json j = io::read_json(o.config);
  if (!j.is_object()) throw std::runtime_error(o.config.string() + ": top level must be an object");
  if (j.contains("schema_version") && j.at("schema_version").get<int>() != kSchemaVersion)
    throw std::runtime_error(o.config.string() + ": unsupported schema_version " + j.at("schema_version").dump());
  return j;
}

std::uint64_t resolve_seed(const CommonOptions& o, const json& cfg) {
  return o.seed.value_or(cfg.value("seed", std::uint64_t{0}));
}

json manifest(const std::string& command, const json& cfg, std::uint64_t seed) {
  return {{"command", command},
          {"version", kVersion},
          {"schema_version", kSchemaVersion},
          {"seed", seed},
          {"config_hash", io::config_hash(cfg)},
          {"config", cfg}};
}

std::vector<double> linspace(double a, double b, std::size_t n) {
  if (n < 1) throw std::invalid_argument("grid: n must be >= 1");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
  return v;
}

/// {"start", "stop", "n"} spans every input dimension as a mesh; an array
/// lists points (numbers for 1-D inputs, arrays otherwise).
std::vector<VectorXd> parse_points(const json& j, std::size_t dim) {
  std::vector<VectorXd> pts;
  if (j.is_object()) {
    const auto axis = linspace(j.at("start").get<double>(), j.at("stop").get<double>(), j.at("n").get<std::size_t>());
    std::vector<std::size_t> idx(dim, 0);
    while (true) {
      VectorXd x(static_cast<Eigen::Index>(dim));
      for (std::size_t d = 0; d < dim; ++d) x(static_cast<Eigen::Index>(d)) = axis[idx[d]];
      pts.push_back(x);
      std::size_t d = dim;
      while (d > 0 && ++idx[d - 1] == axis.size()) idx[--d] = 0;
      if (d == 0) break;
    }
    return pts;
  }
  if (!j.is_array()) throw std::invalid_argument("grid must be an object {start, stop, n} or an array of points");
  for (const auto& p : j) {
    VectorXd x;
    if (p.is_number()) {
      x = VectorXd::Constant(1, p.get<double>());
    } else {
      const auto v = p.get<std::vector<double>>();
      x = Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    if (x.size() != static_cast<Eigen::Index>(dim))
      throw std::invalid_argument("grid point has dimension " + std::to_string(x.size()) + ", expected " +
                                  std::to_string(dim));
    pts.push_back(x);
  }
  return pts;
}

std::vector<std::string> x_header(std::size_t dim) {
  if (dim == 1) return {"x"};
  std::vector<std::string> h;
  for (std::size_t d = 0; d < dim; ++d) h.push_back("x" + std::to_string(d));
  return h;
}

struct Dataset {
  std::vector<VectorXd> X;
  VectorXd y;
};

Dataset load_xy(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error("data file not found: " + path.string());
  const io::CsvTable t = io::read_csv(path);
  const std::size_t yc = t.column("y");
  Dataset d;
  d.y.resize(static_cast<Eigen::Index>(t.rows.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    VectorXd x(static_cast<Eigen::Index>(t.header.size() - 1));
    Eigen::Index k = 0;
    for (std::size_t c = 0; c < t.header.size(); ++c)
      if (c != yc) x(k++) = t.rows[r][c];
    d.X.push_back(x);
    d.y(static_cast<Eigen::Index>(r)) = t.rows[r][yc];
  }
  if (d.X.empty()) throw std::runtime_error(path.string() + ": no data rows");
  return d;
}

std::string predictions_csv(const std::vector<VectorXd>& Q, const VectorXd& mean, const VectorXd& sd) {
  io::CsvTable t{x_header(static_cast<std::size_t>(Q.front().size())), {}};
  t.header.push_back("mean");
  t.header.push_back("std");
  for (std::size_t i = 0; i < Q.size(); ++i) {
    std::vector<double> row(Q[i].data(), Q[i].data() + Q[i].size());
    row.push_back(mean(static_cast<Eigen::Index>(i)));
    row.push_back(sd(static_cast<Eigen::Index>(i)));
    t.rows.push_back(std::move(row));
  }
  return io::format_csv(t);
}

}  // namespace

int cmd_prior_sample(const CommonOptions& o) {
  json cfg = load_config(o);
  const std::uint64_t seed = resolve_seed(o, cfg);
  const std::size_t n = o.samples.value_or(cfg.value("samples", std::size_t{2}));
  std::vector<std::pair<std::string, ArchSpec>> archs;
  if (cfg.contains("archs")) {
    for (const auto& a : cfg.at("archs")) archs.emplace_back(a.at("name").get<std::string>(), ArchSpec::from_json(a.at("arch")));
  } else if (cfg.contains("arch")) {
    archs.emplace_back(cfg.value("name", std::string("prior")), ArchSpec::from_json(cfg.at("arch")));
  } else {
    throw std::runtime_error("config needs 'arch' or 'archs'");
  }
  const json grid = cfg.value("grid", json{{"start", -3.0}, {"stop", 3.0}, {"n", 201}});

  Outputs out;
  json files = json::array();
  for (std::size_t k = 0; k < archs.size(); ++k) {
    const auto& [name, arch] = archs[k];
    const auto pts = parse_points(grid, arch.input_dim);
    const MatrixXd F = sample_prior_functions(arch, pts, n, seed + k * 1000003ULL);
    io::CsvTable t{{"draw_id"}, {}};
    for (const auto& h : x_header(arch.input_dim)) t.header.push_back(h);
    t.header.push_back("f");
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t d = 0; d < n; ++d) {
        std::vector<double> row{static_cast<double>(d)};
        row.insert(row.end(), pts[i].data(), pts[i].data() + pts[i].size());
        row.push_back(F(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)));
        t.rows.push_back(std::move(row));
      }
    out.add("prior_" + name + ".csv", io::format_csv(t));
    files.push_back("prior_" + name + ".csv");
  }
  json m = manifest("prior-sample", cfg, seed);
  m["samples"] = n;
  m["files"] = files;
  out.add_json("manifest.json", m);
  out.commit(o.out);
  return kExitOk;
}

int cmd_kernel_check(const CommonOptions& o) {
  json cfg = load_config(o);
  const std::uint64_t seed = resolve_seed(o, cfg);
  const std::size_t n = o.samples.value_or(cfg.value("samples", std::size_t{200000}));
  if (n < kMinKernelSamples)
    throw std::runtime_error("n_samples " + std::to_string(n) + " is below the minimum of " +
                             std::to_string(kMinKernelSamples));
  const ArchSpec arch = ArchSpec::from_json(cfg.at("arch"));
  const Kernel kernel = cfg.contains("kernel") ? Kernel::from_json(cfg.at("kernel")) : equivalent_kernel(arch);
  if (kernel.input_dim() && *kernel.input_dim() != arch.input_dim)
    throw std::runtime_error("kernel expects input dimension " + std::to_string(*kernel.input_dim()) +
                             " but the architecture takes " + std::to_string(arch.input_dim));
  const double n_sigma = cfg.value("n_sigma", 3.0);
  const json pairs_cfg = cfg.at("pairs");

  json report = json::array();
  bool all_pass = true;
  std::size_t k = 0;
  for (const auto& pr : pairs_cfg) {
    const auto a = parse_points(json::array({pr.at(0)}), arch.input_dim).front();
    const auto b = parse_points(json::array({pr.at(1)}), arch.input_dim).front();
    const double analytic = kernel(a, b);
    const MCEstimate mc = empirical_kernel(arch, a, b, n, seed + k++);
    const double z = mc.std_error > 0.0 ? (mc.estimate - analytic) / mc.std_error
                                        : (mc.estimate == analytic ? 0.0 : INFINITY);
    const bool pass = std::abs(z) <= n_sigma;
    all_pass = all_pass && pass;
    report.push_back({{"x", std::vector<double>(a.data(), a.data() + a.size())},
                      {"x_p", std::vector<double>(b.data(), b.data() + b.size())},
                      {"analytic", analytic},
                      {"mc", mc.estimate},
                      {"std_error", mc.std_error},
                      {"z", z},
                      {"pass", pass}});
  }
  json m = manifest("kernel-check", cfg, seed);
  m["samples"] = n;
  m["n_sigma"] = n_sigma;
  m["all_pass"] = all_pass;
  m["pairs"] = report;
  Outputs out;
  out.add_json("kernel_check.json", m);
  out.commit(o.out);
  std::cout << (all_pass ? "PASS" : "FAIL") << " kernel-check " << report.size() << " pairs\n";
  return all_pass ? kExitOk : kExitCheckFailed;
}

int cmd_gp_fit(const CommonOptions& o) {
  json cfg = load_config(o);
  const Dataset d = load_xy(o.data);
  const Kernel kernel = Kernel::from_json(cfg.at("kernel"));
  const double noise = cfg.value("noise_var", 0.0);
  const bool include_noise = cfg.value("include_noise", false);
  const std::size_t dim = static_cast<std::size_t>(d.X.front().size());
  const auto Q = cfg.contains("query") ? parse_points(cfg.at("query"), dim) : d.X;
  const GPPosterior post = gp_fit(GPModel{kernel, noise}, d.X, d.y);
  const GPPrediction pred = gp_predict(post, Q);
  VectorXd var = pred.cov.diagonal().cwiseMax(0.0);
  if (include_noise) var.array() += noise;

  json m = manifest("gp-fit", cfg, 0);
  m["data"] = o.data.filename().string();
  m["log_marginal"] = gp_log_marginal(post);
  m["jitter"] = post.jitter;
  m["include_noise"] = include_noise;
  Outputs out;
  out.add("predictions.csv", predictions_csv(Q, pred.mean, var.cwiseSqrt()));
  out.add_json("manifest.json", m);
  out.commit(o.out);
  return kExitOk;
}

int cmd_bnn_fit(const CommonOptions& o) {
  json cfg = load_config(o);
  const std::uint64_t seed = resolve_seed(o, cfg);
  const Dataset d = load_xy(o.data);
  const ArchSpec arch = ArchSpec::from_json(cfg.at("arch"));
  const std::size_t dim = arch.input_dim;
  if (static_cast<std::size_t>(d.X.front().size()) != dim)
    throw std::runtime_error("data has " + std::to_string(d.X.front().size()) + " input columns, arch expects " +
                             std::to_string(dim));
  const std::string inference = cfg.value("inference", std::string("hmc"));
  const double noise = cfg.value("noise_var", 0.01);
  const bool include_noise = cfg.value("include_noise", true);
  const bool standardize = cfg.value("standardize", true);
  const auto Q = cfg.contains("query") ? parse_points(cfg.at("query"), dim) : d.X;

  // Per-dimension affine scaling of inputs and targets.
  const auto n = static_cast<Eigen::Index>(d.X.size());
  MatrixXd X(static_cast<Eigen::Index>(dim), n);
  for (Eigen::Index i = 0; i < n; ++i) X.col(i) = d.X[static_cast<std::size_t>(i)];
  VectorXd x_mean = VectorXd::Zero(X.rows()), x_std = VectorXd::Ones(X.rows());
  double y_mean = 0.0, y_std = 1.0;
  if (standardize && n > 1) {
    x_mean = X.rowwise().mean();
    x_std = ((X.colwise() - x_mean).cwiseAbs2().rowwise().mean()).cwiseSqrt();
    for (Eigen::Index r = 0; r < x_std.size(); ++r)
      if (!(x_std(r) > 0.0)) x_std(r) = 1.0;
    y_mean = d.y.mean();
    y_std = std::sqrt((d.y.array() - y_mean).square().mean());
    if (!(y_std > 0.0)) y_std = 1.0;
  }
  const MatrixXd Xs = (X.colwise() - x_mean).array().colwise() / x_std.array();
  const VectorXd ys = (d.y.array() - y_mean) / y_std;
  MatrixXd Qs(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(Q.size()));
  for (std::size_t i = 0; i < Q.size(); ++i)
    Qs.col(static_cast<Eigen::Index>(i)) = (Q[i] - x_mean).array() / x_std.array();

  Outputs out;
  json m = manifest("bnn-fit", cfg, seed);
  PredictiveMoments pm;
  const Network net(arch);
  if (inference == "hmc") {
    HMCConfig hc = cfg.contains("hmc") ? HMCConfig::from_json(cfg.at("hmc")) : HMCConfig{};
    hc.seed = seed;
    if (o.samples) hc.n_samples = *o.samples;
    const BnnPosterior post(net, Xs, ys, noise);
    std::vector<VectorXd> inits;
    const Rng root = Rng(seed).split(0x1417);
    for (std::size_t c = 0; c < hc.n_chains; ++c) {
      Rng r = root.split(c);
      inits.push_back(net.sample(r).values);
    }
    const HMCResult res = hmc_sample(post.as_function(), inits, hc);
    pm = bnn_predictive_hmc(net, res.samples, Qs, include_noise ? noise : 0.0);
    m["acceptance_rate"] = res.acceptance_rate;
    out.add_json("chain.json", chain_to_json(arch, res, hc, noise));
  } else if (inference == "ensemble") {
    EnsembleConfig ec = cfg.contains("ensemble") ? EnsembleConfig::from_json(cfg.at("ensemble")) : EnsembleConfig{};
    ec.noise_var = noise;
    if (o.samples) ec.n_members = *o.samples;
    const EnsembleModel model = anchored_ensemble_train(arch, Xs, ys, ec, seed);
    pm = ensemble_predict(model, Qs, include_noise);
    out.add_json("ensemble.json", model.to_json());
  } else {
    throw std::runtime_error("inference must be 'hmc' or 'ensemble', got '" + inference + "'");
  }
  pm.mean = pm.mean.array() * y_std + y_mean;
  pm.std *= y_std;
  m["include_noise"] = include_noise;
  m["standardize"] = standardize;
  out.add("predictions.csv", predictions_csv(Q, pm.mean, pm.std));
  out.add_json("manifest.json", m);
  out.commit(o.out);
  return kExitOk;
}

int cmd_timeseries(const CommonOptions& o, const std::string& synthetic) {
  json cfg = load_config(o);
  const std::uint64_t seed = resolve_seed(o, cfg);
  ts::TimeSeries series;
  if (!synthetic.empty()) {
    const auto mode = synthetic == "additive" ? ts::Seasonality::Additive : ts::Seasonality::Multiplicative;
    series = ts::synthetic_series(mode, cfg.value("months", std::size_t{120}), cfg.value("noise_std", 0.05), seed);
  } else {
    if (o.data.empty()) throw std::runtime_error("either --data or --synthetic is required");
    if (!std::filesystem::exists(o.data)) throw std::runtime_error("data file not found: " + o.data.string());
    series = ts::load_series(o.data);
  }
  std::vector<ts::ModelConfig> models;
  for (const auto& mj : cfg.at("models")) models.push_back(ts::ModelConfig::from_json(mj));
  const bool include_noise = cfg.value("include_noise", true);
  const ts::ExperimentResult res = ts::run_experiment(series, models, seed, include_noise);

  Outputs out;
  for (const auto& mr : res.models) {
    io::CsvTable t{{"x", "mean", "std"}, {}};
    for (std::size_t i = 0; i < mr.x.size(); ++i)
      t.rows.push_back({mr.x[i], mr.pred.mean(static_cast<Eigen::Index>(i)), mr.pred.std(static_cast<Eigen::Index>(i))});
    out.add(mr.config.name + ".csv", io::format_csv(t));
  }
  const ts::GapSplit split = ts::make_gap_split(series);
  io::CsvTable train{{"t", "y"}, {}};
  for (std::size_t i = 0; i < split.train_t.size(); ++i) train.rows.push_back({split.train_t[i], split.train_y[i]});
  out.add("train.csv", io::format_csv(train));
  json m = res.manifest;
  m["command"] = "timeseries";
  m["config_hash"] = io::config_hash(cfg);
  m["data"] = synthetic.empty() ? o.data.filename().string() : "synthetic:" + synthetic;
  out.add_json("manifest.json", m);
  out.commit(o.out);
  return kExitOk;
}

namespace {

std::string q_slice_csv(const rl::Agent& agent) {
  const auto grid = linspace(-std::numbers::pi, 5.0 * std::numbers::pi, 601);
  const VectorXd q = agent.qvalue_slice(grid, 0.0, 1);
  io::CsvTable t{{"theta", "q"}, {}};
  for (std::size_t i = 0; i < grid.size(); ++i) t.rows.push_back({grid[i], q(static_cast<Eigen::Index>(i))});
  return io::format_csv(t);
}

std::string curve_csv(const std::vector<double>& rewards) {
  io::CsvTable t{{"episode", "cumulative_reward"}, {}};
  for (std::size_t i = 0; i < rewards.size(); ++i) t.rows.push_back({static_cast<double>(i), rewards[i]});
  return io::format_csv(t);
}

}  // namespace

int cmd_rl_train(const CommonOptions& o, bool log_steps) {
  json cfg = load_config(o);
  const std::uint64_t seed = resolve_seed(o, cfg);
  const std::size_t episodes = o.episodes.value_or(cfg.value("episodes", std::size_t{50}));
  const rl::TrainConfig tc = rl::TrainConfig::from_json(cfg);
  const rl::TrainResult res = rl::train_run(tc, episodes, seed);

  Outputs out;
  out.add("curve.csv", curve_csv(res.episode_rewards));
  out.add("qslice.csv", q_slice_csv(res.agent));
  json agent = res.agent.to_json();
  agent["env"] = tc.env.to_json();
  out.add_json("agent.json", agent);
  if (log_steps) {
    io::CsvTable t{{"episode", "step", "theta", "theta_dot", "torque", "reward"}, {}};
    for (const auto& s : res.steps)
      t.rows.push_back({static_cast<double>(s.episode), static_cast<double>(s.step), s.state.theta, s.state.theta_dot,
                        rl::kTorques[s.action], s.reward});
    out.add("steps.csv", io::format_csv(t));
  }
  json m = manifest("rl-train", tc.to_json(), seed);
  m["episodes"] = episodes;
  m["steps_logged"] = res.steps.size();
  out.add_json("manifest.json", m);
  out.commit(o.out);
  return kExitOk;
}

int cmd_rl_eval(const CommonOptions& o) {
  json snap = load_config(o);
  const std::uint64_t seed = resolve_seed(o, snap);
  const std::size_t episodes = o.episodes.value_or(5);
  const rl::Agent agent = rl::Agent::from_json(snap);
  const rl::EnvParams env = snap.contains("env") ? rl::EnvParams::from_json(snap.at("env")) : rl::EnvParams{};
  const auto rewards = rl::evaluate(agent, env, episodes, seed);

  Outputs out;
  out.add("eval.csv", curve_csv(rewards));
  out.add("qslice.csv", q_slice_csv(agent));
  json m = manifest("rl-eval", snap.at("config"), seed);
  m["episodes"] = episodes;
  out.add_json("manifest.json", m);
  out.commit(o.out);
  return kExitOk;
}

}  // namespace bnnk::cli
