#include "edgeslice/agent/agent.hpp"

#include "edgeslice/core/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace edgeslice::agent {

namespace {

Matrix clip01(Matrix m) { return m.cwiseMax(0.0).cwiseMin(1.0); }

Matrix row_matrix(std::span<const double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  return m;
}

Matrix scale_columns(const Matrix& states, const std::vector<double>& scale) {
  if (states.cols() != static_cast<Eigen::Index>(scale.size())) {
    throw std::invalid_argument("state width does not match the observation scale");
  }
  Matrix out = states;
  for (Eigen::Index c = 0; c < out.cols(); ++c) out.col(c) *= scale[static_cast<std::size_t>(c)];
  return out;
}

Matrix concat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

AgentKind agent_kind_from_string(const std::string& name) {
  if (name == "dual_distill" || name == "sliceoff") return AgentKind::kDualDistill;
  if (name == "td3_no_distill") return AgentKind::kTd3NoDistill;
  if (name == "ddpg" || name == "ddpg_single_critic") return AgentKind::kDdpgSingleCritic;
  throw std::invalid_argument("unknown agent kind: " + name);
}

std::string to_string(AgentKind kind) {
  switch (kind) {
    case AgentKind::kDualDistill:
      return "dual_distill";
    case AgentKind::kTd3NoDistill:
      return "td3_no_distill";
    case AgentKind::kDdpgSingleCritic:
      return "ddpg";
  }
  return "unknown";
}

void AgentConfig::validate() const {
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("AgentConfig: discount in (0,1)");
  if (!(soft_update_rate >= 0.0 && soft_update_rate <= 1.0)) throw std::invalid_argument("AgentConfig: tau");
  if (batch_size < 1 || buffer_capacity < batch_size) throw std::invalid_argument("AgentConfig: batch/buffer");
  if (actor_delay < 1 || distill_period_episodes < 1) throw std::invalid_argument("AgentConfig: periods");
  if (exploration_noise_sd < 0 || target_noise_sd < 0 || target_noise_clip < 0 || advantage_clamp < 0 ||
      distill_weight < 0 || !(learning_rate > 0) || !(reward_scale > 0) || warmup_steps < 0 || peer_state_pool < 1) {
    throw std::invalid_argument("AgentConfig: negative or zero hyperparameter");
  }
  for (int h : hidden_layer_sizes) {
    if (h < 1) throw std::invalid_argument("AgentConfig: hidden sizes must be positive");
  }
}

void to_json(nlohmann::json& j, const AgentConfig& c) {
  j = nlohmann::json{{"discount", c.discount},
                     {"soft_update_rate", c.soft_update_rate},
                     {"batch_size", c.batch_size},
                     {"buffer_capacity", c.buffer_capacity},
                     {"exploration_noise_sd", c.exploration_noise_sd},
                     {"target_noise_sd", c.target_noise_sd},
                     {"target_noise_clip", c.target_noise_clip},
                     {"actor_delay", c.actor_delay},
                     {"distill_confidence", c.distill_confidence},
                     {"advantage_clamp", c.advantage_clamp},
                     {"distill_weight", c.distill_weight},
                     {"learning_rate", c.learning_rate},
                     {"distill_period_episodes", c.distill_period_episodes},
                     {"hidden_layer_sizes", c.hidden_layer_sizes},
                     {"warmup_steps", c.warmup_steps},
                     {"reward_scale", c.reward_scale},
                     {"bootstrap_terminal", c.bootstrap_terminal},
                     {"peer_state_pool", c.peer_state_pool},
                     {"debug_checks", c.debug_checks}};
}

void from_json(const nlohmann::json& j, AgentConfig& c) {
  AgentConfig d;
  c.discount = j.value("discount", d.discount);
  c.soft_update_rate = j.value("soft_update_rate", d.soft_update_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.buffer_capacity = j.value("buffer_capacity", d.buffer_capacity);
  c.exploration_noise_sd = j.value("exploration_noise_sd", d.exploration_noise_sd);
  c.target_noise_sd = j.value("target_noise_sd", d.target_noise_sd);
  c.target_noise_clip = j.value("target_noise_clip", d.target_noise_clip);
  c.actor_delay = j.value("actor_delay", d.actor_delay);
  c.distill_confidence = j.value("distill_confidence", d.distill_confidence);
  c.advantage_clamp = j.value("advantage_clamp", d.advantage_clamp);
  c.distill_weight = j.value("distill_weight", d.distill_weight);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.distill_period_episodes = j.value("distill_period_episodes", d.distill_period_episodes);
  c.hidden_layer_sizes = j.value("hidden_layer_sizes", d.hidden_layer_sizes);
  c.warmup_steps = j.value("warmup_steps", d.warmup_steps);
  c.reward_scale = j.value("reward_scale", d.reward_scale);
  c.bootstrap_terminal = j.value("bootstrap_terminal", d.bootstrap_terminal);
  c.peer_state_pool = j.value("peer_state_pool", d.peer_state_pool);
  c.debug_checks = j.value("debug_checks", d.debug_checks);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, int state_dim, int action_dim)
    : capacity_(capacity),
      states_(static_cast<Eigen::Index>(capacity), state_dim),
      actions_(static_cast<Eigen::Index>(capacity), action_dim),
      rewards_(static_cast<Eigen::Index>(capacity), 1),
      next_states_(static_cast<Eigen::Index>(capacity), state_dim),
      terminals_(static_cast<Eigen::Index>(capacity), 1) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
}

void ReplayBuffer::add(const Transition& t) {
  if (t.state.size() != static_cast<std::size_t>(states_.cols()) ||
      t.next_state.size() != static_cast<std::size_t>(states_.cols()) ||
      t.action.size() != static_cast<std::size_t>(actions_.cols())) {
    throw std::invalid_argument("ReplayBuffer: transition shape mismatch");
  }
  const auto i = static_cast<Eigen::Index>(next_);
  states_.row(i) = row_matrix(t.state);
  actions_.row(i) = row_matrix(t.action);
  rewards_(i, 0) = t.reward;
  next_states_.row(i) = row_matrix(t.next_state);
  terminals_(i, 0) = t.terminal ? 1.0 : 0.0;
  next_ = (next_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Batch ReplayBuffer::sample(std::size_t count, std::mt19937_64& rng) const {
  if (size_ == 0 || count == 0) throw std::invalid_argument("ReplayBuffer: cannot sample an empty batch");
  const auto k = static_cast<Eigen::Index>(count);
  Batch b{Matrix(k, states_.cols()), Matrix(k, actions_.cols()), Matrix(k, 1), Matrix(k, states_.cols()),
          Matrix(k, 1)};
  for (Eigen::Index r = 0; r < k; ++r) {
    const auto i = static_cast<Eigen::Index>(rng() % size_);
    b.states.row(r) = states_.row(i);
    b.actions.row(r) = actions_.row(i);
    b.rewards(r, 0) = rewards_(i, 0);
    b.next_states.row(r) = next_states_.row(i);
    b.terminals(r, 0) = terminals_(i, 0);
  }
  return b;
}

Matrix ReplayBuffer::sample_states(std::size_t count, std::mt19937_64& rng) const {
  if (size_ == 0 || count == 0) throw std::invalid_argument("ReplayBuffer: cannot sample from an empty buffer");
  Matrix out(static_cast<Eigen::Index>(count), states_.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) = states_.row(static_cast<Eigen::Index>(rng() % size_));
  return out;
}

TwinCriticAgent::TwinCriticAgent(int state_dim, int action_dim, AgentConfig config, AgentKind kind,
                                 std::vector<double> observation_scale, std::uint64_t seed)
    : state_dim_(state_dim),
      action_dim_(action_dim),
      config_(std::move(config)),
      kind_(kind),
      obs_scale_(std::move(observation_scale)),
      seed_(seed),
      rng_(seed) {
  config_.validate();
  if (state_dim < 1 || action_dim < 1) throw std::invalid_argument("agent dimensions must be positive");
  if (obs_scale_.empty()) obs_scale_.assign(static_cast<std::size_t>(state_dim), 1.0);
  if (obs_scale_.size() != static_cast<std::size_t>(state_dim)) {
    throw std::invalid_argument("observation scale width mismatch");
  }
  if (kind_ == AgentKind::kDdpgSingleCritic) {
    config_.actor_delay = 1;
    config_.target_noise_sd = 0.0;
  }
  if (kind_ != AgentKind::kDualDistill) config_.distill_weight = 0.0;

  const auto& hidden = config_.hidden_layer_sizes;
  using nn::Activation;
  actor_ = nn::Mlp("actor", state_dim, hidden, action_dim, Activation::kRelu, Activation::kSigmoid, rng_);
  critic1_ = nn::Mlp("critic1", state_dim + action_dim, hidden, 1, Activation::kRelu, Activation::kIdentity, rng_);
  critic2_ = nn::Mlp("critic2", state_dim + action_dim, hidden, 1, Activation::kRelu, Activation::kIdentity, rng_);
  actor_target_ = actor_;
  critic1_target_ = critic1_;
  critic2_target_ = critic2_;
  const nn::Adam::Options opt{.learning_rate = config_.learning_rate};
  actor_opt_ = nn::Adam(actor_.parameters(), opt);
  critic1_opt_ = nn::Adam(critic1_.parameters(), opt);
  critic2_opt_ = nn::Adam(critic2_.parameters(), opt);
  buffer_ = ReplayBuffer(static_cast<std::size_t>(config_.buffer_capacity), state_dim, action_dim);
}

Matrix TwinCriticAgent::normalize(const Matrix& states) const { return scale_columns(states, obs_scale_); }

Matrix TwinCriticAgent::critic_input(const Matrix& states, const Matrix& actions) { return concat(states, actions); }

std::vector<double> TwinCriticAgent::select_action(std::span<const double> state, bool explore) {
  Matrix a = actor_.evaluate(normalize(row_matrix(state)));
  if (explore && config_.exploration_noise_sd > 0.0) {
    std::normal_distribution<double> noise(0.0, config_.exploration_noise_sd);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] += noise(rng_);
    a = clip01(std::move(a));
  }
  return {a.data(), a.data() + a.size()};
}

std::vector<double> TwinCriticAgent::random_action() {
  std::vector<double> a(static_cast<std::size_t>(action_dim_));
  for (auto& x : a) x = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return a;
}

Matrix TwinCriticAgent::policy(const Matrix& states) { return actor_.evaluate(normalize(states)); }

Matrix TwinCriticAgent::target_action(const Matrix& next_states) {
  Matrix a = actor_target_.evaluate(normalize(next_states));
  if (config_.target_noise_sd > 0.0) {
    std::normal_distribution<double> noise(0.0, config_.target_noise_sd);
    const double c = config_.target_noise_clip;
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] += std::clamp(noise(rng_), -c, c);
  }
  return clip01(std::move(a));
}

Matrix TwinCriticAgent::critic_target(const Matrix& rewards, const Matrix& next_states, const Matrix& terminals) {
  const Matrix a = target_action(next_states);
  const Matrix x = critic_input(normalize(next_states), a);
  Matrix q = critic1_target_.evaluate(x);
  if (twin()) q = q.cwiseMin(critic2_target_.evaluate(x));
  Matrix y = config_.reward_scale * rewards;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const bool stop = terminals(r, 0) > 0.5 && !config_.bootstrap_terminal;
    if (!stop) y(r, 0) += config_.discount * q(r, 0);
  }
  return y;
}

std::pair<double, double> TwinCriticAgent::update_critics(const Batch& batch) {
  if (batch.states.rows() == 0) throw std::invalid_argument("update_critics: empty batch");
  const Matrix y = critic_target(batch.rewards, batch.next_states, batch.terminals);
  const Matrix x = critic_input(normalize(batch.states), batch.actions);
  auto fit = [&](nn::Mlp& critic, nn::Adam& opt) {
    opt.zero_grad();
    nn::Tape tape;
    nn::Var loss = nn::mse(critic.forward(tape, tape.constant(x)), y);
    const double value = loss.scalar();
    tape.backward(loss);
    opt.step();
    return value;
  };
  const double l1 = fit(critic1_, critic1_opt_);
  const double l2 = twin() ? fit(critic2_, critic2_opt_) : 0.0;
  return {l1, l2};
}

Matrix TwinCriticAgent::value_estimate(const Matrix& states) {
  const Matrix s = normalize(states);
  const Matrix x = critic_input(s, actor_.evaluate(s));
  Matrix q = critic1_.evaluate(x);
  if (twin()) q = q.cwiseMin(critic2_.evaluate(x));
  return q;
}

Matrix peer_policy(const PeerSnapshot& peer, const Matrix& states) {
  return peer.actor.evaluate(scale_columns(states, peer.observation_scale));
}

Matrix peer_value(const PeerSnapshot& peer, const Matrix& states) {
  const Matrix s = scale_columns(states, peer.observation_scale);
  const Matrix x = concat(s, peer.actor.evaluate(s));
  Matrix q = peer.critic1.evaluate(x);
  if (peer.twin) q = q.cwiseMin(peer.critic2.evaluate(x));
  return q;
}

Matrix TwinCriticAgent::advantage(const PeerSnapshot& peer, const Matrix& states) {
  const double c = config_.advantage_clamp;
  return (peer_value(peer, states) - value_estimate(states)).cwiseMax(-c).cwiseMin(c);
}

double TwinCriticAgent::distill_loss(const PeerSnapshot& peer, const Matrix& states) {
  if (kind_ != AgentKind::kDualDistill) return 0.0;
  const Matrix gap = policy(states) - peer_policy(peer, states);
  const Matrix w = (config_.distill_confidence * advantage(peer, states)).array().exp();
  return (gap.rowwise().squaredNorm().cwiseProduct(w)).mean();
}

double TwinCriticAgent::update_actor(const Batch& batch) {
  if (config_.debug_checks && current_step_ % config_.actor_delay != 0) {
    throw core::ContractViolation("update_actor called off the delay schedule");
  }
  actor_opt_.zero_grad();
  nn::Tape tape;
  nn::Var s = tape.constant(normalize(batch.states));
  nn::Var a = actor_.forward(tape, s);
  nn::Var q = critic1_.forward(tape, nn::concat_cols({s, a}));
  nn::Var loss = nn::scale(nn::mean(q), -1.0);

  last_distill_loss_ = 0.0;
  last_peer_fraction_ = 0.0;
  if (peer_ && kind_ == AgentKind::kDualDistill && config_.distill_weight > 0.0 && peer_->states.rows() > 0) {
    Matrix ps(batch.states.rows(), state_dim_);
    for (Eigen::Index r = 0; r < ps.rows(); ++r) {
      ps.row(r) = peer_->states.row(static_cast<Eigen::Index>(rng_() % static_cast<std::uint64_t>(peer_->states.rows())));
    }
    const Matrix xi = advantage(*peer_, ps);
    const Matrix weight = (config_.distill_confidence * xi).array().exp();
    const Matrix peer_a = peer_policy(*peer_, ps);
    nn::Var own = actor_.forward(tape, tape.constant(normalize(ps)));
    nn::Var gap = nn::sum_cols(nn::square(nn::sub(own, tape.constant(peer_a))));
    nn::Var distill = nn::mean(nn::mul(gap, tape.constant(weight)));
    last_distill_loss_ = distill.scalar();
    last_peer_fraction_ = (xi.array() > 0.0).cast<double>().mean();
    loss = nn::add(loss, nn::scale(distill, config_.distill_weight));
  }
  const double value = loss.scalar();
  tape.backward(loss);
  actor_opt_.step();
  actor_update_steps_.push_back(current_step_);
  return value;
}

void TwinCriticAgent::soft_update(double tau) {
  nn::soft_update(actor_.parameters(), actor_target_.parameters(), tau);
  nn::soft_update(critic1_.parameters(), critic1_target_.parameters(), tau);
  nn::soft_update(critic2_.parameters(), critic2_target_.parameters(), tau);
}

PeerSnapshot TwinCriticAgent::snapshot() {
  PeerSnapshot s;
  s.actor = actor_;
  s.critic1 = critic1_;
  s.critic2 = critic2_;
  s.twin = twin();
  s.observation_scale = obs_scale_;
  if (buffer_.size() > 0) {
    s.states = buffer_.sample_states(
        std::min(buffer_.size(), static_cast<std::size_t>(config_.peer_state_pool)), rng_);
  } else {
    s.states = Matrix(0, state_dim_);
  }
  return s;
}

bool TwinCriticAgent::ready() const {
  return buffer_.size() >= static_cast<std::size_t>(std::max(config_.batch_size, config_.warmup_steps));
}

TwinCriticAgent::TrainStats TwinCriticAgent::train_step() {
  TrainStats st;
  current_step_ = train_steps_;
  const Batch batch = buffer_.sample(static_cast<std::size_t>(config_.batch_size), rng_);
  std::tie(st.critic1_loss, st.critic2_loss) = update_critics(batch);
  if (current_step_ % config_.actor_delay == 0) {
    st.actor_loss = update_actor(batch);
    st.actor_updated = true;
    st.distill_loss = last_distill_loss_;
    st.peer_chosen_fraction = last_peer_fraction_;
    soft_update(config_.soft_update_rate);
    target_update_steps_.push_back(current_step_);
  }
  ++train_steps_;
  return st;
}

std::vector<nn::Parameter*> TwinCriticAgent::critic_parameters() {
  auto out = critic1_.parameters();
  for (auto* p : critic2_.parameters()) out.push_back(p);
  return out;
}

nlohmann::json TwinCriticAgent::checkpoint() {
  nlohmann::json j;
  j["format"] = "edgeslice-agent";
  j["version"] = 1;
  j["kind"] = to_string(kind_);
  j["state_dim"] = state_dim_;
  j["action_dim"] = action_dim_;
  j["seed"] = seed_;
  j["config"] = config_;
  j["observation_scale"] = obs_scale_;
  j["train_steps"] = train_steps_;
  j["actor"] = nn::parameters_to_json(actor_.parameters());
  j["critic1"] = nn::parameters_to_json(critic1_.parameters());
  j["critic2"] = nn::parameters_to_json(critic2_.parameters());
  j["actor_target"] = nn::parameters_to_json(actor_target_.parameters());
  j["critic1_target"] = nn::parameters_to_json(critic1_target_.parameters());
  j["critic2_target"] = nn::parameters_to_json(critic2_target_.parameters());
  j["actor_opt"] = actor_opt_.state();
  j["critic1_opt"] = critic1_opt_.state();
  j["critic2_opt"] = critic2_opt_.state();
  return j;
}

void TwinCriticAgent::load_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "edgeslice-agent") throw std::runtime_error("not an agent checkpoint");
  if (j.at("state_dim").get<int>() != state_dim_ || j.at("action_dim").get<int>() != action_dim_) {
    throw std::runtime_error("agent checkpoint dimensions differ");
  }
  train_steps_ = j.at("train_steps").get<long>();
  nn::parameters_from_json(actor_.parameters(), j.at("actor"));
  nn::parameters_from_json(critic1_.parameters(), j.at("critic1"));
  nn::parameters_from_json(critic2_.parameters(), j.at("critic2"));
  nn::parameters_from_json(actor_target_.parameters(), j.at("actor_target"));
  nn::parameters_from_json(critic1_target_.parameters(), j.at("critic1_target"));
  nn::parameters_from_json(critic2_target_.parameters(), j.at("critic2_target"));
  actor_opt_.load_state(j.at("actor_opt"));
  critic1_opt_.load_state(j.at("critic1_opt"));
  critic2_opt_.load_state(j.at("critic2_opt"));
}

void TwinCriticAgent::save(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << checkpoint().dump();
}

std::unique_ptr<TwinCriticAgent> TwinCriticAgent::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  const auto j = nlohmann::json::parse(in);
  if (j.value("format", "") != "edgeslice-agent") throw std::runtime_error("not an agent checkpoint");
  auto agent = std::make_unique<TwinCriticAgent>(
      j.at("state_dim").get<int>(), j.at("action_dim").get<int>(), j.at("config").get<AgentConfig>(),
      agent_kind_from_string(j.at("kind").get<std::string>()), j.at("observation_scale").get<std::vector<double>>(),
      j.at("seed").get<std::uint64_t>());
  agent->load_checkpoint(j);
  return agent;
}

HybridResult hybrid_policy_eval(TwinCriticAgent& agent, const PeerSnapshot& peer, const Matrix& states) {
  // The printed selection rule reads "pi(s) if xi(s) > 0, else peer(s)". Since xi > 0 means the
  // peer's value estimate is higher, the peer is chosen here when its advantage is positive.
  const Matrix xi = agent.advantage(peer, states);
  const Matrix own = agent.policy(states);
  const Matrix other = peer_policy(peer, states);
  HybridResult out;
  out.actions = own;
  out.peer_chosen.assign(static_cast<std::size_t>(states.rows()), false);
  std::size_t chosen = 0;
  for (Eigen::Index r = 0; r < states.rows(); ++r) {
    if (xi(r, 0) > 0.0) {
      out.actions.row(r) = other.row(r);
      out.peer_chosen[static_cast<std::size_t>(r)] = true;
      ++chosen;
    }
  }
  out.peer_chosen_fraction = states.rows() > 0 ? static_cast<double>(chosen) / static_cast<double>(states.rows()) : 0.0;
  return out;
}

double final_decile_mean(const std::vector<EpisodeRecord>& curve) {
  if (curve.empty()) throw std::invalid_argument("final_decile_mean: empty curve");
  const std::size_t n = std::max<std::size_t>(1, curve.size() / 10);
  double total = 0.0;
  for (std::size_t i = curve.size() - n; i < curve.size(); ++i) total += curve[i].reward;
  return total / static_cast<double>(n);
}

std::size_t TrainingResult::best_agent() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < curves.size(); ++i) {
    if (final_decile_mean(curves[i]) > final_decile_mean(curves[best])) best = i;
  }
  return best;
}

namespace {

TrainingResult run_training(const env::EnvConfig& env_config, const EpisodeFactory& factory, int episodes,
                            const AgentConfig& config, std::vector<AgentKind> kinds, std::uint64_t seed) {
  if (episodes < 0) throw std::invalid_argument("episodes must be non-negative");
  const bool pair = kinds.size() == 2;
  TrainingResult result;
  std::vector<env::OffloadEnv> envs;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    result.agents.push_back(std::make_unique<TwinCriticAgent>(env_config.state_dim(), env_config.action_dim(), config,
                                                              kinds[i], env_config.observation_scale(),
                                                              seed * 1000003ULL + 7919ULL * (i + 1)));
    envs.emplace_back(env_config);
  }
  result.curves.resize(kinds.size());
  for (int ep = 0; ep < episodes; ++ep) {
    for (std::size_t i = 0; i < kinds.size(); ++i) {
      auto& agent = *result.agents[i];
      auto& environment = envs[i];
      auto setup = factory(static_cast<int>(i), ep);
      environment.reset(std::move(setup.tasks), std::move(setup.plan));
      EpisodeRecord rec{ep, static_cast<int>(i), 0.0, 0.0, 0.0};
      long distill_updates = 0;
      while (!environment.done()) {
        const auto state = environment.current().to_vector();
        const auto action = agent.buffer().size() < static_cast<std::size_t>(agent.config().warmup_steps)
                                ? agent.random_action()
                                : agent.select_action(state, true);
        const auto out = environment.step(env::ActionVector::from_vector(action, env_config.n_max));
        agent.observe({state, action, out.reward, out.next.to_vector(), out.terminal});
        rec.reward += out.reward;
        if (agent.ready()) {
          const auto st = agent.train_step();
          if (st.actor_updated && agent.peer() != nullptr) {
            rec.distill_loss_mean += st.distill_loss;
            rec.peer_chosen_fraction += st.peer_chosen_fraction;
            ++distill_updates;
          }
        }
      }
      if (distill_updates > 0) {
        rec.distill_loss_mean /= static_cast<double>(distill_updates);
        rec.peer_chosen_fraction /= static_cast<double>(distill_updates);
      }
      result.curves[i].push_back(rec);
    }
    if (pair && (ep + 1) % config.distill_period_episodes == 0) {
      auto a = std::make_shared<const PeerSnapshot>(result.agents[0]->snapshot());
      auto b = std::make_shared<const PeerSnapshot>(result.agents[1]->snapshot());
      result.agents[0]->set_peer(b);
      result.agents[1]->set_peer(a);
    }
  }
  return result;
}

}  // namespace

TrainingResult train_pair(const env::EnvConfig& env_config, const EpisodeFactory& factory, int episodes,
                          const AgentConfig& config, std::uint64_t seed) {
  return run_training(env_config, factory, episodes, config, {AgentKind::kDualDistill, AgentKind::kDualDistill}, seed);
}

TrainingResult train_single(const env::EnvConfig& env_config, const EpisodeFactory& factory, int episodes,
                            const AgentConfig& config, AgentKind kind, std::uint64_t seed) {
  return run_training(env_config, factory, episodes, config, {kind}, seed);
}

double run_episode(env::OffloadEnv& environment, const EpisodeSetup& setup, const PolicyFn& policy) {
  environment.reset(setup.tasks, setup.plan);
  double total = 0.0;
  while (!environment.done()) {
    const auto action = policy(environment.current());
    total += environment.step(env::ActionVector::from_vector(action, environment.config().n_max)).reward;
  }
  return total;
}

PolicyFn greedy_policy(TwinCriticAgent& agent) {
  return [&agent](const env::RegionSnapshot& s) { return agent.select_action(s.to_vector(), false); };
}

PolicyFn uniform_random_policy(int action_dim, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng, action_dim](const env::RegionSnapshot&) {
    std::vector<double> a(static_cast<std::size_t>(action_dim));
    for (auto& x : a) x = static_cast<double>((*rng)() >> 11) * 0x1.0p-53;
    return a;
  };
}

void write_reward_curve(const std::vector<std::vector<EpisodeRecord>>& curves, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "episode,agent_id,reward,distill_loss_mean,peer_chosen_fraction\n" << std::setprecision(10);
  for (const auto& curve : curves) {
    for (const auto& r : curve) {
      out << r.episode << ',' << r.agent_id << ',' << r.reward << ',' << r.distill_loss_mean << ','
          << r.peer_chosen_fraction << '\n';
    }
  }
}

}  // namespace edgeslice::agent
