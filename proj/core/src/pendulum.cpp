#include "bnnk/pendulum.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bnnk::rl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kPi = std::numbers::pi;

VectorXd vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> vec_to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

MatrixXd to_inputs(const std::vector<PendulumState>& states) {
  MatrixXd X(2, static_cast<Eigen::Index>(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    X(0, static_cast<Eigen::Index>(i)) = states[i].theta;
    X(1, static_cast<Eigen::Index>(i)) = states[i].theta_dot;
  }
  return X;
}

int argmax_lowest(const Eigen::Ref<const VectorXd>& q) {
  int best = 0;
  for (int a = 1; a < q.size(); ++a)
    if (q(a) > q(best)) best = a;
  return best;
}

int action_index(int torque) {
  for (int a = 0; a < kNumActions; ++a)
    if (kTorques[a] == static_cast<double>(torque)) return a;
  throw std::invalid_argument("env_step: torque must be -1, 0 or +1, got " + std::to_string(torque));
}

}  // namespace

void EnvParams::validate() const {
  if (!(dt > 0.0)) throw std::invalid_argument("EnvParams: dt must be positive");
  if (!(gravity >= 0.0 && mass > 0.0 && length > 0.0)) throw std::invalid_argument("EnvParams: bad physical constants");
  if (!(max_speed > 0.0)) throw std::invalid_argument("EnvParams: max_speed must be positive");
  if (!(literal_guard > 0.0)) throw std::invalid_argument("EnvParams: literal_guard must be positive");
  if (episode_len < 1) throw std::invalid_argument("EnvParams: episode_len must be >= 1");
}

nlohmann::json EnvParams::to_json() const {
  return {{"dt", dt},
          {"gravity", gravity},
          {"mass", mass},
          {"length", length},
          {"max_speed", max_speed},
          {"friction_mode", friction == FrictionMode::Sigmoid ? "sigmoid" : "literal"},
          {"literal_guard", literal_guard},
          {"episode_len", episode_len},
          {"reward", "-(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 torque^2)"}};
}

EnvParams EnvParams::from_json(const nlohmann::json& j) {
  EnvParams p;
  p.dt = j.value("dt", p.dt);
  p.gravity = j.value("gravity", p.gravity);
  p.mass = j.value("mass", p.mass);
  p.length = j.value("length", p.length);
  p.max_speed = j.value("max_speed", p.max_speed);
  if (j.contains("friction_mode")) {
    const auto m = j.at("friction_mode").get<std::string>();
    if (m == "sigmoid")
      p.friction = FrictionMode::Sigmoid;
    else if (m == "literal")
      p.friction = FrictionMode::Literal;
    else
      throw std::invalid_argument("EnvParams: unknown friction_mode '" + m + "'");
  }
  p.literal_guard = j.value("literal_guard", p.literal_guard);
  p.episode_len = j.value("episode_len", p.episode_len);
  p.validate();
  return p;
}

double friction_factor(double theta, const EnvParams& params) {
  if (params.friction == FrictionMode::Sigmoid) return 2.0 / (1.0 + std::exp(-theta / 3.0));
  double d = 1.0 - std::exp(-theta / 3.0);
  if (std::abs(d) < params.literal_guard) d = d < 0.0 ? -params.literal_guard : params.literal_guard;
  return 2.0 / d;
}

double wrap_angle(double theta) {
  double w = std::fmod(theta + kPi, 2.0 * kPi);
  if (w <= 0.0) w += 2.0 * kPi;
  return w - kPi;
}

double reward(const PendulumState& s, double torque) {
  const double a = wrap_angle(s.theta);
  return -(a * a + 0.1 * s.theta_dot * s.theta_dot + 0.001 * torque * torque);
}

StepResult env_step(const PendulumState& s, int action, std::size_t t, const EnvParams& p) {
  const double u = kTorques[action_index(action)];
  if (!std::isfinite(s.theta) || !std::isfinite(s.theta_dot))
    throw std::domain_error("env_step: non-finite state");
  // sin(theta) written about the hanging position so theta = pi is an exact equilibrium.
  const double sin_theta = -std::sin(s.theta - kPi);
  const double accel = 3.0 * p.gravity / (2.0 * p.length) * sin_theta + 3.0 / (p.mass * p.length * p.length) * u;
  StepResult r;
  r.reward = reward(s, u);
  r.next.theta_dot = std::clamp(s.theta_dot + accel * p.dt, -p.max_speed, p.max_speed);
  r.next.theta = s.theta + friction_factor(s.theta, p) * r.next.theta_dot * p.dt;
  if (!std::isfinite(r.next.theta) || !std::isfinite(r.next.theta_dot))
    throw std::domain_error("env_step: state became non-finite");
  r.done = t + 1 >= p.episode_len;
  return r;
}

std::string to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::Relu: return "relu";
    case ArchKind::Periodic: return "periodic";
    case ArchKind::PeriodicXTanh: return "periodic_x_tanh";
  }
  return "?";
}

ArchKind arch_kind_from_string(const std::string& s) {
  for (auto k : {ArchKind::Relu, ArchKind::Periodic, ArchKind::PeriodicXTanh})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

void AgentConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0) && gamma != 0.0)
    throw std::invalid_argument("AgentConfig: gamma must lie in (0, 1)");
  if (n_members < 1) throw std::invalid_argument("AgentConfig: n_members must be >= 1");
  if (width < 1) throw std::invalid_argument("AgentConfig: width must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("AgentConfig: batch_size must be >= 1");
  if (replay_capacity < batch_size) throw std::invalid_argument("AgentConfig: replay_capacity < batch_size");
  if (target_update < 1 || update_every < 1) throw std::invalid_argument("AgentConfig: intervals must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("AgentConfig: learning_rate must be positive");
  if (!(noise_var > 0.0)) throw std::invalid_argument("AgentConfig: noise_var must be positive");
  if (exploration != "thompson") throw std::invalid_argument("AgentConfig: exploration must be 'thompson'");
}

nlohmann::json AgentConfig::to_json() const {
  return {{"arch", to_string(arch)},
          {"width", width},
          {"sigma2_w1", sigma2_w1},
          {"sigma2_b1", sigma2_b1},
          {"sigma2_hidden", sigma2_hidden},
          {"sigma2_w2", sigma2_w2},
          {"sigma2_b_out", sigma2_b_out},
          {"tanh_sigma2_w", tanh_sigma2_w},
          {"tanh_sigma2_b", tanh_sigma2_b},
          {"n_members", n_members},
          {"gamma", gamma},
          {"replay_capacity", replay_capacity},
          {"batch_size", batch_size},
          {"target_update", target_update},
          {"update_every", update_every},
          {"learning_rate", learning_rate},
          {"noise_var", noise_var},
          {"reward_scale", reward_scale},
          {"exploration", exploration}};
}

AgentConfig AgentConfig::from_json(const nlohmann::json& j) {
  AgentConfig c;
  if (j.contains("arch")) c.arch = arch_kind_from_string(j.at("arch").get<std::string>());
  c.width = j.value("width", c.width);
  c.sigma2_w1 = j.value("sigma2_w1", c.sigma2_w1);
  c.sigma2_b1 = j.value("sigma2_b1", c.sigma2_b1);
  c.sigma2_hidden = j.value("sigma2_hidden", c.sigma2_hidden);
  c.sigma2_w2 = j.value("sigma2_w2", c.sigma2_w2);
  c.sigma2_b_out = j.value("sigma2_b_out", c.sigma2_b_out);
  c.tanh_sigma2_w = j.value("tanh_sigma2_w", c.tanh_sigma2_w);
  c.tanh_sigma2_b = j.value("tanh_sigma2_b", c.tanh_sigma2_b);
  c.n_members = j.value("n_members", c.n_members);
  c.gamma = j.value("gamma", c.gamma);
  c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.target_update = j.value("target_update", c.target_update);
  c.update_every = j.value("update_every", c.update_every);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.noise_var = j.value("noise_var", c.noise_var);
  c.reward_scale = j.value("reward_scale", c.reward_scale);
  c.exploration = j.value("exploration", c.exploration);
  c.validate();
  return c;
}

ArchSpec make_q_arch(const AgentConfig& cfg) {
  const std::vector<LayerSpec> layers{{Activation::relu(), cfg.width, cfg.sigma2_w1, cfg.sigma2_b1},
                                      {Activation::relu(), cfg.width, cfg.sigma2_hidden, cfg.sigma2_hidden}};
  ArchSpec q = deep(layers, cfg.sigma2_w2, 2);
  if (cfg.arch != ArchKind::Relu) {
    WarpSpec w;
    w.in_dim = 2;
    w.periodic_dims = {0};
    w.period = 2.0 * kPi;
    q.warp = w;
  }
  if (cfg.arch == ArchKind::PeriodicXTanh) {
    ArchSpec env = basic(Activation::tanh(), PriorSpec{cfg.tanh_sigma2_w, cfg.tanh_sigma2_b, 1.0}, cfg.width, 2);
    env.input_dims = {0};
    q = hidden_mul({q, env}, cfg.sigma2_w2);
  }
  q.sigma2_b_out = cfg.sigma2_b_out;
  q.n_outputs = kNumActions;
  for (auto& c : q.children) c.n_outputs = kNumActions;
  q.validate();
  return q;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::push(const Transition& t) {
  if (data_.size() == capacity_) data_.pop_front();
  data_.push_back(t);
}

std::vector<Transition> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
  if (data_.empty()) throw std::logic_error("ReplayBuffer: sample from an empty buffer");
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(data_[rng.index(data_.size())]);
  return out;
}

Agent::Agent(AgentConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), net_((cfg_.validate(), make_q_arch(cfg_))) {
  const Rng root(seed);
  for (std::size_t m = 0; m < cfg_.n_members; ++m) {
    Rng rng = root.split(m);
    Member mem;
    mem.anchor = net_.sample(rng).values;
    mem.theta = net_.sample(rng).values;
    mem.target = mem.theta;
    mem.optimiser.learning_rate = cfg_.learning_rate;
    members_.push_back(std::move(mem));
  }
}

MatrixXd Agent::q_values(std::size_t member, const std::vector<PendulumState>& states) const {
  return net_.forward(members_.at(member).theta, to_inputs(states));
}

int Agent::greedy_action(std::size_t member, const PendulumState& s) const {
  const MatrixXd q = q_values(member, {s});
  return argmax_lowest(q.col(0));
}

double Agent::update(const std::vector<Transition>& batch, std::size_t replay_size) {
  if (batch.empty()) throw std::invalid_argument("Agent::update: empty batch");
  std::vector<PendulumState> s, s_next;
  for (const auto& t : batch) {
    s.push_back(t.s);
    s_next.push_back(t.s_next);
  }
  const MatrixXd X = to_inputs(s), X_next = to_inputs(s_next);
  const double B = static_cast<double>(batch.size());
  const double reg = cfg_.noise_var / static_cast<double>(std::max<std::size_t>(replay_size, 1));
  const VectorXd& var = net_.prior_variances();
  VectorXd inv_var(var.size());
  for (Eigen::Index i = 0; i < var.size(); ++i) inv_var(i) = var(i) > 0.0 ? 1.0 / var(i) : 0.0;

  double total = 0.0;
  for (std::size_t m = 0; m < members_.size(); ++m) {
    Member& mem = members_[m];
    VectorXd y(static_cast<Eigen::Index>(batch.size()));
    if (cfg_.gamma > 0.0) {
      const MatrixXd q_next = net_.forward(mem.target, X_next);
      for (std::size_t i = 0; i < batch.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = cfg_.reward_scale * batch[i].reward +
                                          cfg_.gamma * q_next.col(static_cast<Eigen::Index>(i)).maxCoeff();
    } else {
      for (std::size_t i = 0; i < batch.size(); ++i)
        y(static_cast<Eigen::Index>(i)) = cfg_.reward_scale * batch[i].reward;
    }
    VectorXd grad = VectorXd::Zero(mem.theta.size());
    const MatrixXd q = net_.forward(mem.theta, X);
    MatrixXd d_out = MatrixXd::Zero(q.rows(), q.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      const double err = q(batch[i].action, col) - y(col);
      loss += err * err / B;
      d_out(batch[i].action, col) = 2.0 * err / B;
    }
    net_.forward_backward(mem.theta, X, d_out, grad);
    const VectorXd diff = mem.theta - mem.anchor;
    loss += reg * diff.cwiseAbs2().dot(inv_var);
    grad += 2.0 * reg * inv_var.cwiseProduct(diff);
    if (!std::isfinite(loss) || !grad.allFinite())
      throw std::runtime_error("Agent::update: non-finite loss for member " + std::to_string(m));
    mem.optimiser.step(mem.theta, grad);
    total += loss;
  }
  return total / static_cast<double>(members_.size());
}

void Agent::sync_targets() {
  for (auto& m : members_) m.target = m.theta;
}

VectorXd Agent::qvalue_slice(const std::vector<double>& theta_grid, double theta_dot, int action) const {
  if (action < 0 || action >= kNumActions) throw std::invalid_argument("qvalue_slice: bad action index");
  std::vector<PendulumState> states;
  for (double th : theta_grid) states.push_back({th, theta_dot});
  const MatrixXd X = to_inputs(states);
  VectorXd acc = VectorXd::Zero(static_cast<Eigen::Index>(theta_grid.size()));
  for (const auto& m : members_) acc += net_.forward(m.theta, X).row(action).transpose();
  return acc / static_cast<double>(members_.size());
}

nlohmann::json Agent::to_json() const {
  nlohmann::json mem = nlohmann::json::array();
  for (const auto& m : members_) mem.push_back({{"theta", vec_to_std(m.theta)}, {"anchor", vec_to_std(m.anchor)}});
  return {{"kind", "q_ensemble"}, {"config", cfg_.to_json()}, {"arch", net_.spec().to_json()}, {"members", mem}};
}

Agent Agent::from_json(const nlohmann::json& j) {
  Agent a(AgentConfig::from_json(j.at("config")), 0);
  const auto& mem = j.at("members");
  if (mem.size() != a.members_.size()) throw std::invalid_argument("agent snapshot: member count mismatch");
  for (std::size_t i = 0; i < mem.size(); ++i) {
    a.members_[i].theta = vec_from_json(mem[i].at("theta"));
    a.members_[i].anchor = vec_from_json(mem[i].at("anchor"));
    if (a.members_[i].theta.size() != a.net_.num_params() || a.members_[i].anchor.size() != a.net_.num_params())
      throw std::invalid_argument("agent snapshot: parameter count mismatch");
    a.members_[i].target = a.members_[i].theta;
  }
  return a;
}

int agent_act(const Agent& agent, const PendulumState& s, std::uint64_t seed) {
  Rng rng(seed);
  return agent.greedy_action(rng.index(agent.members().size()), s);
}

nlohmann::json TrainConfig::to_json() const { return {{"agent", agent.to_json()}, {"env", env.to_json()}}; }

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("agent")) c.agent = AgentConfig::from_json(j.at("agent"));
  if (j.contains("env")) c.env = EnvParams::from_json(j.at("env"));
  return c;
}

namespace {

PendulumState hanging_start(Rng& rng) {
  return {kPi + 0.1 * (rng.uniform() - 0.5), 0.1 * (rng.uniform() - 0.5)};
}

}  // namespace

TrainResult train_run(const TrainConfig& cfg, std::size_t episodes, std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("train_run: episodes must be >= 1");
  cfg.env.validate();
  const Rng root(seed);
  TrainResult result{{}, {}, Agent(cfg.agent, root.split(0).seed())};
  Agent& agent = result.agent;
  ReplayBuffer replay(cfg.agent.replay_capacity);
  Rng env_rng = root.split(1), act_rng = root.split(2), batch_rng = root.split(3);
  std::size_t global_step = 0;

  for (std::size_t ep = 0; ep < episodes; ++ep) {
    const std::size_t member = act_rng.index(agent.members().size());
    PendulumState s = hanging_start(env_rng);
    double total = 0.0;
    for (std::size_t t = 0; t < cfg.env.episode_len; ++t) {
      const int a = agent.greedy_action(member, s);
      const StepResult r = env_step(s, static_cast<int>(kTorques[a]), t, cfg.env);
      replay.push({s, a, r.reward, r.next});
      result.steps.push_back({ep, t, s, a, r.reward});
      total += r.reward;
      ++global_step;
      if (replay.size() >= cfg.agent.batch_size && global_step % cfg.agent.update_every == 0)
        agent.update(replay.sample(cfg.agent.batch_size, batch_rng), replay.size());
      if (global_step % cfg.agent.target_update == 0) agent.sync_targets();
      s = r.next;
      if (r.done) break;
    }
    result.episode_rewards.push_back(total);
  }
  return result;
}

std::vector<double> evaluate(const Agent& agent, const EnvParams& env, std::size_t episodes, std::uint64_t seed) {
  env.validate();
  Rng rng(seed);
  std::vector<double> out;
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    PendulumState s = hanging_start(rng);
    double total = 0.0;
    for (std::size_t t = 0; t < env.episode_len; ++t) {
      VectorXd q = VectorXd::Zero(kNumActions);
      for (std::size_t m = 0; m < agent.members().size(); ++m) q += agent.q_values(m, {s}).col(0);
      const int a = argmax_lowest(q);
      const StepResult r = env_step(s, static_cast<int>(kTorques[a]), t, env);
      total += r.reward;
      s = r.next;
      if (r.done) break;
    }
    out.push_back(total);
  }
  return out;
}

}  // namespace bnnk::rl
