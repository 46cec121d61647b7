#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bnnk/arch.hpp"
#include "bnnk/ensemble.hpp"
#include "bnnk/gp.hpp"
#include "bnnk/hmc.hpp"

namespace bnnk::ts {

/// Monthly series; t counts months since the start.
struct TimeSeries {
  std::string name;
  std::vector<double> t;
  std::vector<double> y;

  std::size_t size() const { return t.size(); }
  /// Throws std::invalid_argument for |t| != |y|, non-finite values, or t not strictly increasing.
  void validate() const;
};

inline constexpr std::size_t kMinSeriesLength = 24;

/// CSV with header "t,y". Throws std::runtime_error on missing values,
/// non-monotone t, or fewer than kMinSeriesLength rows.
TimeSeries load_series(const std::filesystem::path& path);
void save_series(const std::filesystem::path& path, const TimeSeries& series);

enum class Seasonality { Additive, Multiplicative };

/// Trend plus 12-month seasonality over t = 0..months-1.
/// Additive: t/12 + sin(2 pi t/12). Multiplicative: (1 + t/24)(1 + 0.4 sin(2 pi t/12)).
/// Gaussian noise of standard deviation noise_std is added when positive.
TimeSeries synthetic_series(Seasonality mode, std::size_t months = 120, double noise_std = 0.0,
                            std::uint64_t seed = 0);

struct GapSplit {
  std::vector<double> train_t, train_y;
  double gap_begin = 36.0, gap_end = 60.0;      // [begin, end)
  double extrap_begin = 120.0, extrap_end = 240.0;  // (begin, end]
  std::vector<double> gap_grid;
  std::vector<double> extrap_grid;

  /// train_t, then the gap grid, then the extrapolation grid.
  std::vector<double> query_grid() const;
};

/// Drops months in [36, 60) and restricts training to months [0, 120).
/// Query grids are integer months. Throws std::invalid_argument when the
/// series covers fewer than 120 months.
GapSplit make_gap_split(const TimeSeries& series);

/// Zero-mean, unit-variance affine maps for inputs and targets.
struct Standardizer {
  double t_mean = 0.0, t_std = 1.0;
  double y_mean = 0.0, y_std = 1.0;

  static Standardizer fit(const std::vector<double>& t, const std::vector<double>& y);
  double t(double raw) const { return (raw - t_mean) / t_std; }
  double y(double raw) const { return (raw - y_mean) / y_std; }
  double y_raw(double z) const { return z * y_std + y_mean; }
  nlohmann::json to_json() const;
};

enum class ModelKind { ReluBnn, PeriodicBnn, CombinedBnnAdd, CombinedBnnMul, CombinedGpAdd, CombinedGpMul };
enum class InferenceKind { Hmc, Ensemble, ExactGp };

std::string to_string(ModelKind kind);
std::string to_string(InferenceKind kind);
ModelKind model_kind_from_string(const std::string& s);
InferenceKind inference_from_string(const std::string& s);
bool is_gp_kind(ModelKind kind);

/// Periodic component: periodic warp then RBF units.
struct PeriodicPrior {
  double sigma2_g = 1.0;   // RBF bandwidth
  double sigma2_u = 1.0;   // centre variance
  double sigma2_w2 = 1.0;  // output variance

  nlohmann::json to_json() const;
  static PeriodicPrior from_json(const nlohmann::json& j);
};

struct ModelConfig {
  std::string name;
  ModelKind kind = ModelKind::CombinedBnnAdd;
  InferenceKind inference = InferenceKind::Hmc;
  PriorSpec relu{1.0, 1.0, 1.0};
  PeriodicPrior periodic;
  /// Output variance shared by the hidden product (multiplicative kinds).
  double sigma2_w2_shared = 1.0;
  double period = 12.0;  // months
  double noise_var = 0.01;  // on standardized targets
  std::size_t width = 50;
  /// Select priors by grid search on the GP-equivalent log marginal likelihood.
  bool tune = true;
  HMCConfig hmc;
  EnsembleConfig ensemble;
  std::optional<std::uint64_t> seed;

  /// Throws std::invalid_argument on an inconsistent kind/inference pairing.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Architecture or kernel in standardized units.
struct BuiltModel {
  ModelConfig config;
  Standardizer scaler;
  ArchSpec arch;
  std::optional<Kernel> kernel;  // GP kinds only
};

/// ReLU, periodic, sum or hidden product architecture for cfg.kind; GP kinds
/// carry the equivalent kernel of the matching combined architecture.
BuiltModel build_model(const ModelConfig& cfg, const Standardizer& scaler);

/// Copy of cfg with priors chosen by coarse grid search maximizing the GP log
/// marginal likelihood of the equivalent kernel on the standardized data.
ModelConfig tune_hyperparameters(const ModelConfig& cfg, const Standardizer& scaler, const std::vector<double>& t,
                                 const std::vector<double>& y);

struct FitDiagnostics {
  double log_marginal = 0.0;      // exact GP only
  double acceptance_rate = 0.0;   // HMC only
  std::size_t n_samples = 0;
};

/// Fitted model; predictions are on the raw scale.
class FittedModel {
 public:
  FittedModel(BuiltModel model, const std::vector<double>& t, const std::vector<double>& y, std::uint64_t seed);

  PredictiveMoments predict(const std::vector<double>& t, bool include_noise = true) const;
  const BuiltModel& model() const { return model_; }
  const FitDiagnostics& diagnostics() const { return diag_; }
  /// Snapshot of the fitted state (chain, ensemble, or GP hyperparameters).
  nlohmann::json snapshot() const;

 private:
  BuiltModel model_;
  FitDiagnostics diag_;
  std::optional<GPPosterior> gp_;
  std::optional<HMCResult> chain_;
  std::optional<EnsembleModel> ensemble_;
};

struct ModelResult {
  ModelConfig config;  // after tuning
  std::uint64_t seed = 0;
  std::vector<double> x;
  PredictiveMoments pred;
  FitDiagnostics diagnostics;
  double runtime_s = 0.0;
};

struct ExperimentResult {
  std::vector<ModelResult> models;
  nlohmann::json manifest;
};

/// Fits every config on the gap split of `series` and predicts over its query
/// grid. Model i uses cfg.seed when set, otherwise splitmix64(seed + i).
ExperimentResult run_experiment(const TimeSeries& series, const std::vector<ModelConfig>& configs,
                                std::uint64_t seed, bool include_noise = true);

/// Writes <name>.csv ("x,mean,std") per model and manifest.json into out_dir.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& out_dir);

}  // namespace bnnk::ts
