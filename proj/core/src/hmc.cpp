#include "bnnk/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "bnnk/rng.hpp"

namespace bnnk {

using Eigen::MatrixXd;
using Eigen::VectorXd;

BnnPosterior::BnnPosterior(Network net, MatrixXd X, VectorXd y, double noise_var)
    : net_(std::move(net)), X_(std::move(X)), y_(std::move(y)), noise_var_(noise_var) {
  if (!(noise_var_ > 0.0)) throw std::invalid_argument("BnnPosterior: noise variance must be positive");
  if (net_.num_outputs() != 1) throw std::invalid_argument("BnnPosterior: network must have a single output");
  if (X_.cols() != y_.size()) throw std::invalid_argument("BnnPosterior: |X| != |y|");
  const VectorXd& v = net_.prior_variances();
  if ((v.array() <= 0.0).any())
    throw std::invalid_argument("BnnPosterior: every parameter needs a positive prior variance");
  inv_prior_var_ = v.cwiseInverse();
}

double BnnPosterior::log_density(const VectorXd& theta, VectorXd& grad) const {
  grad = -inv_prior_var_.cwiseProduct(theta);
  double logp = -0.5 * theta.cwiseAbs2().dot(inv_prior_var_);
  if (X_.cols() == 0) return logp;
  const MatrixXd f = net_.forward(theta, X_);
  const VectorXd resid = y_ - f.row(0).transpose();
  logp -= 0.5 * resid.squaredNorm() / noise_var_;
  const MatrixXd d_out = resid.transpose() / noise_var_;
  VectorXd g = VectorXd::Zero(theta.size());
  net_.forward_backward(theta, X_, d_out, g);
  grad += g;
  return logp;
}

LogDensityFn BnnPosterior::as_function() const {
  return [this](const VectorXd& theta, VectorXd& grad) { return log_density(theta, grad); };
}

void HMCConfig::validate() const {
  if (!(step_size > 0.0)) throw std::invalid_argument("HMCConfig: step_size must be positive");
  if (leapfrog_steps < 1) throw std::invalid_argument("HMCConfig: leapfrog_steps must be >= 1");
  if (n_samples < 1) throw std::invalid_argument("HMCConfig: n_samples must be >= 1");
  if (n_chains < 1) throw std::invalid_argument("HMCConfig: n_chains must be >= 1");
  if (thin < 1) throw std::invalid_argument("HMCConfig: thin must be >= 1");
  if (step_jitter < 0.0 || step_jitter >= 1.0) throw std::invalid_argument("HMCConfig: step_jitter must lie in [0, 1)");
  if (mass.size() > 0 && (mass.array() <= 0.0).any()) throw std::invalid_argument("HMCConfig: mass must be positive");
}

nlohmann::json HMCConfig::to_json() const {
  nlohmann::json j{{"step_size", step_size},         {"leapfrog_steps", leapfrog_steps},
                   {"n_samples", n_samples},         {"n_burnin", burnin()},
                   {"n_chains", n_chains},           {"seed", seed},
                   {"adapt_step_size", adapt_step_size}, {"target_accept", target_accept},
                   {"step_jitter", step_jitter},     {"thin", thin}};
  if (mass.size() > 0) j["mass"] = std::vector<double>(mass.data(), mass.data() + mass.size());
  return j;
}

HMCConfig HMCConfig::from_json(const nlohmann::json& j) {
  HMCConfig c;
  c.step_size = j.value("step_size", c.step_size);
  c.leapfrog_steps = j.value("leapfrog_steps", c.leapfrog_steps);
  c.n_samples = j.value("n_samples", c.n_samples);
  if (j.contains("n_burnin")) c.n_burnin = j.at("n_burnin").get<std::size_t>();
  c.n_chains = j.value("n_chains", c.n_chains);
  c.seed = j.value("seed", c.seed);
  c.adapt_step_size = j.value("adapt_step_size", c.adapt_step_size);
  c.target_accept = j.value("target_accept", c.target_accept);
  c.step_jitter = j.value("step_jitter", c.step_jitter);
  c.thin = j.value("thin", c.thin);
  if (j.contains("mass")) {
    const auto m = j.at("mass").get<std::vector<double>>();
    c.mass = Eigen::Map<const VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  }
  c.validate();
  return c;
}

namespace {

// Leapfrog from (q, p) given the gradient at q; leaves the gradient at the
// final q in `grad` and returns the final log density.
double leapfrog_cached(const LogDensityFn& target, VectorXd& q, VectorXd& p, VectorXd& grad, double eps, int steps,
                       const VectorXd& inv_mass) {
  double logp = 0.0;
  p += 0.5 * eps * grad;
  for (int s = 0; s < steps; ++s) {
    q += eps * inv_mass.cwiseProduct(p);
    logp = target(q, grad);
    if (!std::isfinite(logp)) return logp;
    if (s + 1 < steps) p += eps * grad;
  }
  p += 0.5 * eps * grad;
  return logp;
}

double kinetic(const VectorXd& p, const VectorXd& inv_mass) { return 0.5 * p.cwiseAbs2().dot(inv_mass); }

struct ChainOutput {
  std::vector<VectorXd> samples;
  double acceptance = 0.0;
  double step_size = 0.0;
};

ChainOutput run_chain(const LogDensityFn& target, VectorXd q, const HMCConfig& cfg, const VectorXd& mass,
                      Rng rng) {
  const VectorXd inv_mass = mass.cwiseInverse();
  const VectorXd mass_sqrt = mass.cwiseSqrt();
  VectorXd grad(q.size());
  double logp = target(q, grad);
  if (!std::isfinite(logp) || !grad.allFinite())
    throw std::domain_error("hmc_sample: non-finite log density or gradient at the initial point");

  // Dual averaging (Hoffman & Gelman) during burn-in.
  double log_eps = std::log(cfg.step_size);
  const double mu = std::log(10.0 * cfg.step_size);
  double h_bar = 0.0, log_eps_bar = 0.0;
  constexpr double gamma = 0.05, t0 = 10.0, kappa = 0.75;

  const std::size_t burnin = cfg.burnin();
  const std::size_t total = burnin + cfg.n_samples;
  ChainOutput out;
  std::size_t accepted = 0;

  for (std::size_t it = 0; it < total; ++it) {
    const bool adapting = cfg.adapt_step_size && it < burnin;
    double eps = std::exp(log_eps);
    if (cfg.step_jitter > 0.0) eps *= 1.0 + cfg.step_jitter * (2.0 * rng.uniform() - 1.0);

    VectorXd p(q.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p(i) = mass_sqrt(i) * rng.normal();
    const double h0 = -logp + kinetic(p, inv_mass);

    VectorXd q_new = q, p_new = p, grad_new = grad;
    const double logp_new = leapfrog_cached(target, q_new, p_new, grad_new, eps, cfg.leapfrog_steps, inv_mass);
    const double h1 = -logp_new + kinetic(p_new, inv_mass);
    double accept_prob = 0.0;
    if (std::isfinite(h1) && grad_new.allFinite()) accept_prob = std::min(1.0, std::exp(h0 - h1));

    if (rng.uniform() < accept_prob) {
      q = std::move(q_new);
      grad = std::move(grad_new);
      logp = logp_new;
      if (it >= burnin) ++accepted;
    }

    if (adapting) {
      const double t = static_cast<double>(it + 1);
      h_bar = (1.0 - 1.0 / (t + t0)) * h_bar + (cfg.target_accept - accept_prob) / (t + t0);
      log_eps = mu - std::sqrt(t) / gamma * h_bar;
      const double w = std::pow(t, -kappa);
      log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
      if (it + 1 == burnin) log_eps = log_eps_bar;
    }

    if (it >= burnin && (it - burnin) % cfg.thin == 0) out.samples.push_back(q);
  }
  out.acceptance = static_cast<double>(accepted) / static_cast<double>(cfg.n_samples);
  out.step_size = std::exp(log_eps);
  return out;
}

}  // namespace

void leapfrog(const LogDensityFn& target, VectorXd& q, VectorXd& p, double step_size, int steps,
              const VectorXd& inv_mass) {
  VectorXd grad(q.size());
  target(q, grad);
  leapfrog_cached(target, q, p, grad, step_size, steps, inv_mass);
}

double hamiltonian(const LogDensityFn& target, const VectorXd& q, const VectorXd& p, const VectorXd& inv_mass) {
  VectorXd grad(q.size());
  return -target(q, grad) + kinetic(p, inv_mass);
}

HMCResult hmc_sample(const LogDensityFn& target, const std::vector<VectorXd>& inits, const HMCConfig& cfg) {
  cfg.validate();
  if (inits.empty()) throw std::invalid_argument("hmc_sample: need at least one initial point");
  const Eigen::Index dim = inits.front().size();
  for (const auto& q : inits)
    if (q.size() != dim) throw std::invalid_argument("hmc_sample: initial points differ in dimension");
  const VectorXd mass = cfg.mass.size() > 0 ? cfg.mass : VectorXd::Ones(dim);
  if (mass.size() != dim) throw std::invalid_argument("hmc_sample: mass dimension mismatch");

  const Rng root(cfg.seed);
  std::vector<ChainOutput> chains(cfg.n_chains);
  std::vector<std::exception_ptr> errors(cfg.n_chains);
  auto run = [&](std::size_t c) {
    try {
      chains[c] = run_chain(target, inits[c % inits.size()], cfg, mass, root.split(c));
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (hw <= 1 || cfg.n_chains == 1) {
    for (std::size_t c = 0; c < cfg.n_chains; ++c) run(c);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t c = 0; c < cfg.n_chains; ++c) pool.emplace_back(run, c);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  HMCResult result;
  double acc = 0.0;
  for (auto& ch : chains) {
    result.chain_lengths.push_back(ch.samples.size());
    result.chain_acceptance.push_back(ch.acceptance);
    result.chain_step_size.push_back(ch.step_size);
    acc += ch.acceptance;
    for (auto& s : ch.samples) result.samples.push_back(std::move(s));
  }
  result.acceptance_rate = acc / static_cast<double>(chains.size());
  if (result.acceptance_rate < 0.01) {
    std::ostringstream msg;
    msg << "hmc_sample: persistent divergence, acceptance rate " << result.acceptance_rate << " (per chain:";
    for (std::size_t c = 0; c < chains.size(); ++c)
      msg << " " << result.chain_acceptance[c] << "@eps=" << result.chain_step_size[c];
    msg << ")";
    throw std::runtime_error(msg.str());
  }
  return result;
}

HMCResult hmc_sample(const LogDensityFn& target, const VectorXd& init, const HMCConfig& cfg) {
  return hmc_sample(target, std::vector<VectorXd>{init}, cfg);
}

PredictiveMoments bnn_predictive_hmc(const Network& net, const std::vector<VectorXd>& samples, const MatrixXd& Xstar,
                                     double noise_var) {
  if (samples.empty()) throw std::invalid_argument("bnn_predictive_hmc: empty chain");
  const Eigen::Index m = Xstar.cols();
  VectorXd mean = VectorXd::Zero(m), sum_sq = VectorXd::Zero(m);
  std::vector<VectorXd> outs;
  outs.reserve(samples.size());
  for (const auto& s : samples) {
    outs.push_back(net.forward(s, Xstar).row(0).transpose());
    mean += (outs.back() - mean) / static_cast<double>(outs.size());
  }
  const double n = static_cast<double>(samples.size());
  for (const auto& o : outs) sum_sq += (o - mean).cwiseAbs2();
  PredictiveMoments pm;
  pm.mean = mean;
  pm.std = ((sum_sq / n).array() + noise_var).sqrt().matrix();
  return pm;
}

nlohmann::json chain_to_json(const ArchSpec& arch, const HMCResult& result, const HMCConfig& cfg, double noise_var) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : result.samples) samples.push_back(std::vector<double>(s.data(), s.data() + s.size()));
  return {{"kind", "hmc_chain"},
          {"arch", arch.to_json()},
          {"config", cfg.to_json()},
          {"noise_var", noise_var},
          {"acceptance_rate", result.acceptance_rate},
          {"chain_lengths", result.chain_lengths},
          {"chain_acceptance", result.chain_acceptance},
          {"chain_step_size", result.chain_step_size},
          {"samples", samples}};
}

}  // namespace bnnk
