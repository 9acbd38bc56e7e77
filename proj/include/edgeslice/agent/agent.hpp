#pragma once

// Deterministic-policy actor-critic agents for the offloading MDP: twin
// critics with target smoothing and delayed actor updates, confidence-weighted
// distillation toward a frozen peer, and the single-critic ablation.

#include "edgeslice/env/offload_env.hpp"
#include "edgeslice/nn/layers.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace edgeslice::agent {

using nn::Matrix;

enum class AgentKind { kDualDistill, kTd3NoDistill, kDdpgSingleCritic };

AgentKind agent_kind_from_string(const std::string& name);
std::string to_string(AgentKind kind);

struct AgentConfig {
  double discount = 0.99;
  double soft_update_rate = 0.005;
  int batch_size = 128;
  int buffer_capacity = 100000;
  double exploration_noise_sd = 0.1;
  double target_noise_sd = 0.2;
  double target_noise_clip = 0.5;
  int actor_delay = 2;
  double distill_confidence = 1.0;  // alpha
  double advantage_clamp = 5.0;
  double distill_weight = 1.0;      // lambda
  double learning_rate = 1e-3;
  int distill_period_episodes = 1;
  std::vector<int> hidden_layer_sizes{256, 256};
  int warmup_steps = 1000;          // uniform-random actions before learning starts
  double reward_scale = 1.0;        // applied inside the critic target
  bool bootstrap_terminal = false;  // false: y = r on terminal transitions
  int peer_state_pool = 4096;       // states shipped with a peer snapshot
  bool debug_checks = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const AgentConfig& c);
void from_json(const nlohmann::json& j, AgentConfig& c);

struct Transition {
  std::vector<double> state;
  std::vector<double> action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
};

struct Batch {
  Matrix states;
  Matrix actions;
  Matrix rewards;    // K x 1
  Matrix next_states;
  Matrix terminals;  // K x 1, 1 for terminal
};

class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  ReplayBuffer(std::size_t capacity, int state_dim, int action_dim);

  void add(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  Batch sample(std::size_t count, std::mt19937_64& rng) const;
  Matrix sample_states(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_ = 0;
  std::size_t size_ = 0;
  std::size_t next_ = 0;
  Matrix states_, actions_, rewards_, next_states_, terminals_;
};

/// Frozen copy of an agent handed to its peer at an episode boundary.
struct PeerSnapshot {
  nn::Mlp actor;
  nn::Mlp critic1;
  nn::Mlp critic2;
  bool twin = true;
  std::vector<double> observation_scale;
  Matrix states;  // raw states sampled from the owner's replay buffer
};

class TwinCriticAgent {
 public:
  TwinCriticAgent(int state_dim, int action_dim, AgentConfig config, AgentKind kind,
                  std::vector<double> observation_scale, std::uint64_t seed);
  TwinCriticAgent(const TwinCriticAgent&) = delete;
  TwinCriticAgent& operator=(const TwinCriticAgent&) = delete;

  const AgentConfig& config() const { return config_; }
  AgentKind kind() const { return kind_; }
  bool twin() const { return kind_ != AgentKind::kDdpgSingleCritic; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }

  /// Actor output in [0,1]; with `explore`, Gaussian noise then clipping.
  std::vector<double> select_action(std::span<const double> state, bool explore);
  std::vector<double> random_action();
  /// Deterministic actions for raw states (rows).
  Matrix policy(const Matrix& states);
  /// Smoothed target-policy action: pi'(s') + clip(N(0, sigma), +-c), clipped to [0,1].
  Matrix target_action(const Matrix& next_states);
  /// y = scale * r + gamma * min(Q1', Q2')(s', a~), without the bootstrap on terminal rows.
  Matrix critic_target(const Matrix& rewards, const Matrix& next_states, const Matrix& terminals);
  std::pair<double, double> update_critics(const Batch& batch);
  /// Policy-gradient step on Q1 plus the distillation term when a peer is set.
  /// Only legal on steps where the delay schedule allows an actor update.
  double update_actor(const Batch& batch);
  /// min(Q1, Q2)(s, pi(s)) per row (Q1 alone for the single-critic agent).
  Matrix value_estimate(const Matrix& states);
  /// Peer advantage V_peer(s) - V_own(s), clamped.
  Matrix advantage(const PeerSnapshot& peer, const Matrix& states);
  /// Value of the distillation loss on `states` against `peer`.
  double distill_loss(const PeerSnapshot& peer, const Matrix& states);
  void soft_update(double tau);

  void set_peer(std::shared_ptr<const PeerSnapshot> peer) { peer_ = std::move(peer); }
  const PeerSnapshot* peer() const { return peer_.get(); }
  PeerSnapshot snapshot();

  void observe(const Transition& t) { buffer_.add(t); }
  const ReplayBuffer& buffer() const { return buffer_; }
  bool ready() const;

  struct TrainStats {
    double critic1_loss = 0.0;
    double critic2_loss = 0.0;
    bool actor_updated = false;
    double actor_loss = 0.0;
    double distill_loss = 0.0;
    double peer_chosen_fraction = 0.0;
  };
  /// One learning iteration: sample K, update critics, and on every
  /// `actor_delay`-th iteration update the actor and soft-update the targets.
  TrainStats train_step();

  long train_steps() const { return train_steps_; }
  const std::vector<long>& actor_update_steps() const { return actor_update_steps_; }
  const std::vector<long>& target_update_steps() const { return target_update_steps_; }
  /// Marks the next update_actor call as belonging to step `step` (for direct use in tests).
  void set_current_step(long step) { current_step_ = step; }

  nn::Mlp& actor() { return actor_; }
  nn::Mlp& critic1() { return critic1_; }
  nn::Mlp& critic2() { return critic2_; }
  nn::Mlp& actor_target() { return actor_target_; }
  nn::Mlp& critic1_target() { return critic1_target_; }
  nn::Mlp& critic2_target() { return critic2_target_; }
  std::vector<nn::Parameter*> actor_parameters() { return actor_.parameters(); }
  std::vector<nn::Parameter*> critic_parameters();

  nlohmann::json checkpoint();
  void load_checkpoint(const nlohmann::json& j);
  void save(const std::filesystem::path& file);
  static std::unique_ptr<TwinCriticAgent> load(const std::filesystem::path& file);

  Matrix normalize(const Matrix& states) const;

 private:
  static Matrix critic_input(const Matrix& states, const Matrix& actions);

  int state_dim_;
  int action_dim_;
  AgentConfig config_;
  AgentKind kind_;
  std::vector<double> obs_scale_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;

  nn::Mlp actor_, critic1_, critic2_;
  nn::Mlp actor_target_, critic1_target_, critic2_target_;
  nn::Adam actor_opt_, critic1_opt_, critic2_opt_;
  ReplayBuffer buffer_;
  std::shared_ptr<const PeerSnapshot> peer_;

  long train_steps_ = 0;
  long current_step_ = 0;
  double last_distill_loss_ = 0.0;
  double last_peer_fraction_ = 0.0;
  std::vector<long> actor_update_steps_;
  std::vector<long> target_update_steps_;
};

/// Value of a peer snapshot's own policy: min of its critics at its action.
Matrix peer_value(const PeerSnapshot& peer, const Matrix& states);
Matrix peer_policy(const PeerSnapshot& peer, const Matrix& states);

struct HybridResult {
  Matrix actions;
  double peer_chosen_fraction = 0.0;
  std::vector<bool> peer_chosen;
};

/// Per-state choice between the agent and its peer.
HybridResult hybrid_policy_eval(TwinCriticAgent& agent, const PeerSnapshot& peer, const Matrix& states);

/// Everything needed to run one episode: the day's tasks and the slice plan.
struct EpisodeSetup {
  env::DayTasks tasks;
  env::SlicePlan plan;
};
using EpisodeFactory = std::function<EpisodeSetup(int agent_index, int episode)>;

struct EpisodeRecord {
  int episode = 0;
  int agent_id = 0;
  double reward = 0.0;
  double distill_loss_mean = 0.0;
  double peer_chosen_fraction = 0.0;
};

struct TrainingResult {
  std::vector<std::unique_ptr<TwinCriticAgent>> agents;
  std::vector<std::vector<EpisodeRecord>> curves;  // per agent

  /// Index of the agent with the higher final-decile mean reward.
  std::size_t best_agent() const;
};

/// Mean reward over the last tenth of a curve (at least one episode).
double final_decile_mean(const std::vector<EpisodeRecord>& curve);

/// Trains a dual-distillation pair: two agents on their own environments,
/// exchanging frozen snapshots every `distill_period_episodes`.
TrainingResult train_pair(const env::EnvConfig& env_config, const EpisodeFactory& factory, int episodes,
                          const AgentConfig& config, std::uint64_t seed);

/// Trains one agent of the given kind (no peer).
TrainingResult train_single(const env::EnvConfig& env_config, const EpisodeFactory& factory, int episodes,
                            const AgentConfig& config, AgentKind kind, std::uint64_t seed);

using PolicyFn = std::function<std::vector<double>(const env::RegionSnapshot&)>;

/// Total reward of one episode under `policy`.
double run_episode(env::OffloadEnv& environment, const EpisodeSetup& setup, const PolicyFn& policy);

PolicyFn greedy_policy(TwinCriticAgent& agent);
PolicyFn uniform_random_policy(int action_dim, std::uint64_t seed);

void write_reward_curve(const std::vector<std::vector<EpisodeRecord>>& curves, const std::filesystem::path& file);

}  // namespace edgeslice::agent
