#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bnnk/arch.hpp"
#include "bnnk/ensemble.hpp"
#include "bnnk/network.hpp"
#include "bnnk/rng.hpp"

namespace bnnk::rl {

/// theta is the cumulative angle with 0 upright; pi hangs straight down.
struct PendulumState {
  double theta = 0.0;
  double theta_dot = 0.0;
};

enum class FrictionMode { Sigmoid, Literal };

struct EnvParams {
  double dt = 0.05;
  double gravity = 10.0;
  double mass = 1.0;
  double length = 1.0;
  double max_speed = 8.0;
  FrictionMode friction = FrictionMode::Sigmoid;
  /// Literal mode keeps |1 - exp(-theta/3)| at least this large.
  double literal_guard = 1e-3;
  std::size_t episode_len = 200;

  void validate() const;
  nlohmann::json to_json() const;
  static EnvParams from_json(const nlohmann::json& j);
};

inline constexpr int kNumActions = 3;
/// Torque of action index 0, 1, 2.
inline constexpr double kTorques[kNumActions] = {-1.0, 0.0, 1.0};

/// Sigmoid: 2 / (1 + exp(-theta/3)). Literal: 2 / (1 - exp(-theta/3)) with the guard band.
double friction_factor(double theta, const EnvParams& params);
/// Wraps to (-pi, pi].
double wrap_angle(double theta);
/// -(wrap(theta)^2 + 0.1 theta_dot^2 + 0.001 torque^2), evaluated before the step.
double reward(const PendulumState& s, double torque);

struct StepResult {
  PendulumState next;
  double reward = 0.0;
  bool done = false;
};

/// `action` is a torque in {-1, 0, +1}; `t` is the index of this step within
/// the episode. Throws std::invalid_argument for other torques and
/// std::domain_error for a non-finite state.
StepResult env_step(const PendulumState& s, int action, std::size_t t, const EnvParams& params);

enum class ArchKind { Relu, Periodic, PeriodicXTanh };
std::string to_string(ArchKind kind);
ArchKind arch_kind_from_string(const std::string& s);

struct AgentConfig {
  ArchKind arch = ArchKind::PeriodicXTanh;
  std::size_t width = 50;
  double sigma2_w1 = 1.0;
  double sigma2_b1 = 1.0;
  /// Second hidden layer, per weight and per bias.
  double sigma2_hidden = 1.0 / 50.0;
  /// Output weights (before width scaling) and output bias.
  double sigma2_w2 = 10.0;
  double sigma2_b_out = 10.0;
  /// Envelope of the Periodic x TanH architecture.
  double tanh_sigma2_w = 0.2;
  double tanh_sigma2_b = 0.2;

  std::size_t n_members = 5;
  double gamma = 0.95;
  std::size_t replay_capacity = 50000;
  std::size_t batch_size = 32;
  std::size_t target_update = 200;  // environment steps
  std::size_t update_every = 1;
  double learning_rate = 1e-3;
  /// Weight of the anchor term is noise_var / |replay|.
  double noise_var = 0.1;
  /// Rewards are multiplied by this before entering the TD targets.
  double reward_scale = 0.1;
  std::string exploration = "thompson";

  void validate() const;
  nlohmann::json to_json() const;
  static AgentConfig from_json(const nlohmann::json& j);
};

/// Q-network architecture with inputs (theta, theta_dot) and one output per action.
ArchSpec make_q_arch(const AgentConfig& cfg);

struct Transition {
  PendulumState s;
  int action = 1;  // index into kTorques
  double reward = 0.0;
  PendulumState s_next;
};

/// Fixed-capacity buffer; the oldest transition is evicted first.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(const Transition& t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return data_[i]; }
  /// Uniform draws with replacement.
  std::vector<Transition> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> data_;
};

/// Ensemble of anchored Q-networks.
class Agent {
 public:
  struct Member {
    Eigen::VectorXd theta;
    Eigen::VectorXd anchor;
    Eigen::VectorXd target;
    Adam optimiser;
  };

  Agent(AgentConfig cfg, std::uint64_t seed);

  const AgentConfig& config() const { return cfg_; }
  const Network& network() const { return net_; }
  std::vector<Member>& members() { return members_; }
  const std::vector<Member>& members() const { return members_; }

  /// Q-values of every action (kNumActions x n) under one member.
  Eigen::MatrixXd q_values(std::size_t member, const std::vector<PendulumState>& states) const;
  /// Greedy action index under `member`; ties go to the lowest index.
  int greedy_action(std::size_t member, const PendulumState& s) const;
  /// One anchored gradient step per member; returns the mean loss.
  /// `replay_size` sets the anchor weight. Throws std::runtime_error on a non-finite loss.
  double update(const std::vector<Transition>& batch, std::size_t replay_size);
  void sync_targets();
  /// Mean ensemble Q of `action` at (theta, theta_dot) for each theta.
  Eigen::VectorXd qvalue_slice(const std::vector<double>& theta_grid, double theta_dot = 0.0, int action = 1) const;

  nlohmann::json to_json() const;
  static Agent from_json(const nlohmann::json& j);

 private:
  AgentConfig cfg_;
  Network net_;
  std::vector<Member> members_;
};

/// Thompson-style action: member drawn from Rng(seed), then greedy under it.
/// Returns an action index.
int agent_act(const Agent& agent, const PendulumState& s, std::uint64_t seed);

struct StepLog {
  std::size_t episode = 0;
  std::size_t step = 0;
  PendulumState state;
  int action = 1;
  double reward = 0.0;
};

struct TrainResult {
  std::vector<double> episode_rewards;
  std::vector<StepLog> steps;
  Agent agent;
};

struct TrainConfig {
  AgentConfig agent;
  EnvParams env;

  nlohmann::json to_json() const;
  /// Accepts {"agent": {...}, "env": {...}}; missing sections use defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Runs `episodes` episodes from a hanging start; deterministic per seed.
TrainResult train_run(const TrainConfig& cfg, std::size_t episodes, std::uint64_t seed);

/// Greedy rollouts with the ensemble-mean Q; returns the per-episode rewards.
std::vector<double> evaluate(const Agent& agent, const EnvParams& env, std::size_t episodes, std::uint64_t seed);

}  // namespace bnnk::rl
