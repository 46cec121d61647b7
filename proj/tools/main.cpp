#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "bnnk/version.hpp"
#include "commands.hpp"

namespace {

void add_common(CLI::App* sub, bnnk::cli::CommonOptions& o, bool data, bool samples, bool episodes) {
  sub->add_option("--config", o.config, "JSON configuration file")->check(CLI::ExistingFile);
  if (data) sub->add_option("--data", o.data, "Input CSV");
  sub->add_option("--out", o.out, "Output directory")->required();
  sub->add_option("--seed", o.seed, "Random seed (overrides the config)");
  if (samples) sub->add_option("--samples", o.samples, "Number of samples (overrides the config)");
  if (episodes) sub->add_option("--episodes", o.episodes, "Number of episodes (overrides the config)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional Bayesian neural network priors: sampling, kernel checks, regression and RL"};
  app.set_version_flag("--version", bnnk::kVersion);
  app.require_subcommand(1);

  bnnk::cli::CommonOptions o;
  std::string synthetic;
  bool log_steps = false;

  auto* prior = app.add_subcommand("prior-sample", "Draw functions from architecture priors over a grid");
  add_common(prior, o, false, true, false);
  prior->get_option("--config")->required();

  auto* check = app.add_subcommand("kernel-check", "Compare analytic kernels with Monte-Carlo estimates");
  add_common(check, o, false, true, false);
  check->get_option("--config")->required();

  auto* gp = app.add_subcommand("gp-fit", "Exact GP regression on a CSV of (x, y)");
  add_common(gp, o, true, false, false);
  gp->get_option("--config")->required();
  gp->get_option("--data")->required();

  auto* bnn = app.add_subcommand("bnn-fit", "BNN regression with HMC or an anchored ensemble");
  add_common(bnn, o, true, true, false);
  bnn->get_option("--config")->required();
  bnn->get_option("--data")->required();

  auto* ts = app.add_subcommand("timeseries", "Gap interpolation and extrapolation experiment");
  add_common(ts, o, true, false, false);
  ts->get_option("--config")->required();
  ts->add_option("--synthetic", synthetic, "Use a generated series instead of --data")
      ->check(CLI::IsMember({"additive", "multiplicative"}));

  auto* train = app.add_subcommand("rl-train", "Train a Q-ensemble on the pendulum");
  add_common(train, o, false, false, true);
  train->add_flag("--log-steps", log_steps, "Also write every environment step");

  auto* eval = app.add_subcommand("rl-eval", "Evaluate an agent snapshot and export its Q-slice");
  add_common(eval, o, false, false, true);
  eval->get_option("--config")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*prior) return bnnk::cli::cmd_prior_sample(o);
    if (*check) return bnnk::cli::cmd_kernel_check(o);
    if (*gp) return bnnk::cli::cmd_gp_fit(o);
    if (*bnn) return bnnk::cli::cmd_bnn_fit(o);
    if (*ts) return bnnk::cli::cmd_timeseries(o, synthetic);
    if (*train) return bnnk::cli::cmd_rl_train(o, log_steps);
    if (*eval) return bnnk::cli::cmd_rl_eval(o);
  } catch (const std::exception& e) {
    std::cerr << app.get_subcommands().front()->get_name() << ": " << e.what() << "\n";
    return bnnk::cli::kExitError;
  }
  return bnnk::cli::kExitError;
}
