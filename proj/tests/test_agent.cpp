#include "edgeslice/agent/agent.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace edgeslice;
using namespace edgeslice::agent;

namespace {

constexpr int kState = 5;
constexpr int kAction = 3;

AgentConfig tiny_config() {
  AgentConfig c;
  c.hidden_layer_sizes = {6, 5};
  c.batch_size = 8;
  c.warmup_steps = 8;
  c.buffer_capacity = 256;
  c.peer_state_pool = 32;
  return c;
}

std::unique_ptr<TwinCriticAgent> make_agent(AgentConfig c = tiny_config(), AgentKind kind = AgentKind::kDualDistill,
                                            std::uint64_t seed = 1) {
  return std::make_unique<TwinCriticAgent>(kState, kAction, c, kind, std::vector<double>{}, seed);
}

// Zeroes the last layer's weights so the network outputs `bias` everywhere.
void make_constant(nn::Mlp& net, double bias) {
  auto params = net.parameters();
  params[params.size() - 2]->value.setZero();
  params.back()->value.setConstant(bias);
}

Matrix random_states(Eigen::Index rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, kState);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  return m;
}

void fill_buffer(TwinCriticAgent& agent, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < count; ++i) {
    Transition t;
    for (int k = 0; k < kState; ++k) t.state.push_back(u(rng));
    for (int k = 0; k < kAction; ++k) t.action.push_back(u(rng));
    t.reward = u(rng) * 3;
    for (int k = 0; k < kState; ++k) t.next_state.push_back(u(rng));
    t.terminal = i % 7 == 6;
    agent.observe(t);
  }
}

Batch one_row_batch(double reward, bool terminal) {
  Batch b;
  b.states = random_states(1, 3);
  b.actions = Matrix::Constant(1, kAction, 0.5);
  b.rewards = Matrix::Constant(1, 1, reward);
  b.next_states = random_states(1, 4);
  b.terminals = Matrix::Constant(1, 1, terminal ? 1.0 : 0.0);
  return b;
}

std::vector<Matrix> values(const std::vector<nn::Parameter*>& params) {
  std::vector<Matrix> out;
  for (auto* p : params) out.push_back(p->value);
  return out;
}

env::EnvConfig small_env() {
  env::EnvConfig c;
  c.catalogs = {edgeslice::testing::r1_catalog(), edgeslice::testing::r2_catalog()};
  c.task_ranges.assign(2, env::TaskRanges{});
  c.radio = edgeslice::testing::table_radio();
  c.econ = {1.0, 1.0, 2, 2};
  return c;
}

EpisodeFactory small_factory(const env::EnvConfig& cfg) {
  const auto traffic = traffic::synthesize({.seed = 3, .regions = 2, .days = 3, .slots_per_day = 4});
  return [cfg, traffic](int agent_index, int episode) {
    EpisodeSetup s;
    s.tasks = env::sample_day(cfg, traffic, episode % 3, 11 + static_cast<std::uint64_t>(agent_index));
    s.plan = {{core::SliceDecision::from_indices(cfg.catalogs[0], 9, 3),
               core::SliceDecision::from_indices(cfg.catalogs[1], 9, 3)}};
    return s;
  };
}

}  // namespace

TEST(CriticTarget, Example) {
  auto agent = make_agent();
  make_constant(agent->critic1_target(), 5.0);
  make_constant(agent->critic2_target(), 4.0);
  const auto b = one_row_batch(2.0, false);
  EXPECT_NEAR(agent->critic_target(b.rewards, b.next_states, b.terminals)(0, 0), 5.96, 1e-12);
  EXPECT_EQ(agent->critic_target(b.rewards, b.next_states, Matrix::Ones(1, 1))(0, 0), 2.0);
  make_constant(agent->critic2_target(), 5.0);
  EXPECT_NEAR(agent->critic_target(b.rewards, b.next_states, b.terminals)(0, 0), 2.0 + 0.99 * 5.0, 1e-12);
}

TEST(CriticTarget, SingleCriticUsesQ1Only) {
  auto agent = make_agent(tiny_config(), AgentKind::kDdpgSingleCritic);
  make_constant(agent->critic1_target(), 5.0);
  make_constant(agent->critic2_target(), 4.0);
  const auto b = one_row_batch(2.0, false);
  EXPECT_NEAR(agent->critic_target(b.rewards, b.next_states, b.terminals)(0, 0), 2.0 + 0.99 * 5.0, 1e-12);
}

TEST(CriticTarget, MinIsDominatedByMax) {
  auto c = tiny_config();
  c.target_noise_sd = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto agent = make_agent(c, AgentKind::kDualDistill, seed);
    const Matrix s2 = random_states(20, seed + 50);
    const Matrix r = Matrix::Constant(20, 1, 1.0);
    const Matrix y = agent->critic_target(r, s2, Matrix::Zero(20, 1));
    Matrix x(20, kState + kAction);
    x << s2, agent->actor_target().evaluate(s2);
    const Matrix q1 = agent->critic1_target().evaluate(x), q2 = agent->critic2_target().evaluate(x);
    for (Eigen::Index i = 0; i < 20; ++i) {
      EXPECT_NEAR(y(i, 0), 1.0 + 0.99 * std::min(q1(i, 0), q2(i, 0)), 1e-12);
      EXPECT_LE(y(i, 0), 1.0 + 0.99 * std::max(q1(i, 0), q2(i, 0)));
    }
  }
}

TEST(TargetAction, NoiseBoundsAndSpread) {
  auto c = tiny_config();
  c.target_noise_sd = 0.0;
  auto quiet = make_agent(c);
  const Matrix s = random_states(1, 9);
  EXPECT_EQ(quiet->target_action(s), quiet->actor_target().evaluate(s));

  auto agent = make_agent();
  const Matrix base = agent->actor_target().evaluate(s);
  const int n = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(kAction), sq = Eigen::VectorXd::Zero(kAction);
  for (int i = 0; i < n; ++i) {
    const Matrix a = agent->target_action(s);
    for (int k = 0; k < kAction; ++k) {
      const double d = a(0, k) - base(0, k);
      EXPECT_LE(std::abs(d), 0.5 + 1e-12);
      sum(k) += d;
      sq(k) += d * d;
    }
  }
  for (int k = 0; k < kAction; ++k) {
    if (base(0, k) < 0.3 || base(0, k) > 0.7) continue;
    const double mean = sum(k) / n;
    EXPECT_NEAR(std::sqrt(sq(k) / n - mean * mean), 0.2, 0.02);
  }
}

TEST(SelectAction, ExplorationStatistics) {
  auto agent = make_agent();
  const std::vector<double> state{0.1, 0.2, 0.3, 0.4, 0.5};
  const auto det = agent->select_action(state, false);
  EXPECT_EQ(det, agent->select_action(state, false));
  const int n = 10000;
  std::vector<double> sum(kAction, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto a = agent->select_action(state, true);
    for (int k = 0; k < kAction; ++k) sum[static_cast<std::size_t>(k)] += a[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < kAction; ++k) {
    if (det[k] < 0.3 || det[k] > 0.7) continue;
    EXPECT_NEAR(sum[static_cast<std::size_t>(k)] / n, det[k], 3 * 0.1 / std::sqrt(n));
  }
  auto c = tiny_config();
  c.exploration_noise_sd = 0.0;
  auto silent = make_agent(c);
  EXPECT_EQ(silent->select_action(state, true), silent->select_action(state, false));
}

TEST(UpdateCritics, ZeroLossAtFixedPoint) {
  auto agent = make_agent();
  for (auto* net : {&agent->critic1(), &agent->critic2(), &agent->critic1_target(), &agent->critic2_target()}) {
    make_constant(*net, 3.0);
  }
  const auto b = one_row_batch(3.0 * (1 - 0.99), false);
  const auto [l1, l2] = agent->update_critics(b);
  EXPECT_NEAR(l1, 0.0, 1e-20);
  EXPECT_NEAR(l2, 0.0, 1e-20);
}

TEST(UpdateCritics, MonotoneOnFixedBatch) {
  auto c = tiny_config();
  c.target_noise_sd = 0.0;
  c.learning_rate = 1e-4;
  auto agent = make_agent(c);
  fill_buffer(*agent, 32, 2);
  std::mt19937_64 rng(3);
  const auto batch = agent->buffer().sample(16, rng);
  double prev1 = 1e300, prev2 = 1e300;
  for (int i = 0; i < 100; ++i) {
    const auto [l1, l2] = agent->update_critics(batch);
    EXPECT_LE(l1, prev1);
    EXPECT_LE(l2, prev2);
    prev1 = l1;
    prev2 = l2;
  }
  EXPECT_THROW(agent->update_critics(Batch{}), std::invalid_argument);
}

TEST(Gradients, CriticMatchesFiniteDifferences) {
  auto agent = make_agent();
  const Matrix x = Matrix::Random(6, kState + kAction);
  const Matrix y = Matrix::Random(6, 1);
  auto loss = [&](bool backward) {
    nn::Tape tape;
    nn::Var l = nn::mse(agent->critic1().forward(tape, tape.constant(x)), y);
    if (backward) tape.backward(l);
    return l.scalar();
  };
  EXPECT_LT(edgeslice::testing::gradient_check(agent->critic1().parameters(), loss), 1e-4);
}

TEST(Gradients, ActorObjectiveMatchesFiniteDifferences) {
  auto agent = make_agent();
  const Matrix s = random_states(6, 5);
  const Matrix peer_a = Matrix::Constant(6, kAction, 0.3);
  const Matrix w = Matrix::Random(6, 1).array().exp();
  auto loss = [&](bool backward) {
    nn::Tape tape;
    nn::Var sv = tape.constant(s);
    nn::Var a = agent->actor().forward(tape, sv);
    nn::Var q = agent->critic1().forward(tape, nn::concat_cols({sv, a}));
    nn::Var gap = nn::sum_cols(nn::square(nn::sub(a, tape.constant(peer_a))));
    nn::Var l = nn::add(nn::scale(nn::mean(q), -1.0), nn::mean(nn::mul(gap, tape.constant(w))));
    if (backward) tape.backward(l);
    return l.scalar();
  };
  EXPECT_LT(edgeslice::testing::gradient_check(agent->actor_parameters(), loss), 1e-4);
}

TEST(UpdateActor, ConstantCriticGivesZeroGradient) {
  auto agent = make_agent();
  make_constant(agent->critic1(), 2.0);
  nn::Tape tape;
  nn::Var s = tape.constant(random_states(4, 8));
  nn::Var q = agent->critic1().forward(tape, nn::concat_cols({s, agent->actor().forward(tape, s)}));
  for (auto* p : agent->actor_parameters()) p->zero_grad();
  tape.backward(nn::scale(nn::mean(q), -1.0));
  for (auto* p : agent->actor_parameters()) EXPECT_EQ(p->grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(UpdateActor, OffScheduleCallFails) {
  auto agent = make_agent();
  fill_buffer(*agent, 16, 1);
  std::mt19937_64 rng(1);
  const auto batch = agent->buffer().sample(8, rng);
  agent->set_current_step(1);
  EXPECT_THROW(agent->update_actor(batch), core::ContractViolation);
  agent->set_current_step(2);
  EXPECT_NO_THROW(agent->update_actor(batch));
}

TEST(TrainStep, DelayedCadence) {
  auto agent = make_agent();
  fill_buffer(*agent, 64, 4);
  ASSERT_TRUE(agent->ready());
  for (int i = 0; i < 21; ++i) EXPECT_EQ(agent->train_step().actor_updated, i % 2 == 0);
  EXPECT_EQ(agent->actor_update_steps().size(), 11u);
  for (long s : agent->actor_update_steps()) EXPECT_EQ(s % 2, 0);
  EXPECT_EQ(agent->actor_update_steps(), agent->target_update_steps());
}

TEST(Advantage, Examples) {
  auto own = make_agent(tiny_config(), AgentKind::kDualDistill, 1);
  const Matrix s = random_states(5, 6);
  auto self = own->snapshot();
  EXPECT_LT(own->advantage(self, s).cwiseAbs().maxCoeff(), 1e-15);

  auto other = make_agent(tiny_config(), AgentKind::kDualDistill, 2);
  make_constant(other->critic1(), 7.0);
  make_constant(other->critic2(), 7.0);
  make_constant(own->critic1(), 4.0);
  make_constant(own->critic2(), 4.0);
  const auto peer = other->snapshot();
  EXPECT_LT((own->advantage(peer, s).array() - 3.0).abs().maxCoeff(), 1e-12);
  make_constant(own->critic1(), -5.0);
  make_constant(own->critic2(), -5.0);
  EXPECT_EQ(own->advantage(peer, s), Matrix::Constant(5, 1, 5.0));
}

TEST(DistillLoss, Weights) {
  auto own = make_agent(tiny_config(), AgentKind::kDualDistill, 1);
  auto other = make_agent(tiny_config(), AgentKind::kDualDistill, 2);
  const Matrix s = random_states(7, 7);
  EXPECT_EQ(own->distill_loss(own->snapshot(), s), 0.0);

  for (auto* net : {&own->critic1(), &own->critic2(), &other->critic1(), &other->critic2()}) make_constant(*net, 1.0);
  const Matrix gap = own->policy(s) - other->policy(s);
  const double plain = gap.rowwise().squaredNorm().mean();
  EXPECT_NEAR(own->distill_loss(other->snapshot(), s), plain, 1e-12);

  make_constant(own->critic1(), 6.0);
  make_constant(own->critic2(), 6.0);
  EXPECT_NEAR(own->distill_loss(other->snapshot(), s), std::exp(-5.0) * plain, 1e-12);
  EXPECT_NEAR(std::exp(-5.0), 6.74e-3, 1e-5);

  make_constant(own->critic1(), 0.5);
  make_constant(own->critic2(), 0.5);
  EXPECT_GT(own->distill_loss(other->snapshot(), s), plain);

  auto td3 = make_agent(tiny_config(), AgentKind::kTd3NoDistill, 3);
  EXPECT_EQ(td3->distill_loss(other->snapshot(), s), 0.0);
}

TEST(DistillLoss, PeerUnchangedByUpdate) {
  auto own = make_agent(tiny_config(), AgentKind::kDualDistill, 1);
  auto other = make_agent(tiny_config(), AgentKind::kDualDistill, 2);
  fill_buffer(*own, 32, 1);
  fill_buffer(*other, 32, 2);
  auto peer = std::make_shared<const PeerSnapshot>(other->snapshot());
  const auto before = values(other->actor_parameters());
  const auto snap_before = peer_policy(*peer, random_states(3, 1));
  own->set_peer(peer);
  std::mt19937_64 rng(5);
  const auto actor_before = values(own->actor_parameters());
  own->set_current_step(0);
  own->update_actor(own->buffer().sample(8, rng));
  EXPECT_EQ(values(other->actor_parameters()), before);
  EXPECT_EQ(peer_policy(*peer, random_states(3, 1)), snap_before);
  EXPECT_NE(values(own->actor_parameters()), actor_before);
}

TEST(SoftUpdate, Endpoints) {
  auto agent = make_agent();
  fill_buffer(*agent, 16, 1);
  for (int i = 0; i < 4; ++i) agent->train_step();
  const auto target_before = values(agent->critic1_target().parameters());
  agent->soft_update(0.0);
  EXPECT_EQ(values(agent->critic1_target().parameters()), target_before);
  agent->soft_update(1.0);
  EXPECT_EQ(values(agent->critic1_target().parameters()), values(agent->critic1().parameters()));
  EXPECT_EQ(values(agent->actor_target().parameters()), values(agent->actor_parameters()));
}

TEST(Hybrid, PicksHigherValuePolicy) {
  auto own = make_agent(tiny_config(), AgentKind::kDualDistill, 1);
  auto other = make_agent(tiny_config(), AgentKind::kDualDistill, 2);
  const Matrix s = random_states(6, 2);
  auto self = own->snapshot();
  const auto same = hybrid_policy_eval(*own, self, s);
  EXPECT_EQ(same.actions, own->policy(s));
  EXPECT_EQ(same.peer_chosen_fraction, 0.0);

  make_constant(other->critic1(), 7.0);
  make_constant(other->critic2(), 7.0);
  make_constant(own->critic1(), 4.0);
  make_constant(own->critic2(), 4.0);
  auto better = hybrid_policy_eval(*own, other->snapshot(), s);
  EXPECT_EQ(better.actions, other->policy(s));
  EXPECT_EQ(better.peer_chosen_fraction, 1.0);

  make_constant(own->critic1(), 7.0);
  make_constant(own->critic2(), 7.0);
  EXPECT_EQ(hybrid_policy_eval(*own, other->snapshot(), s).actions, own->policy(s));

  make_constant(own->critic1(), 9.0);
  make_constant(own->critic2(), 9.0);
  EXPECT_EQ(hybrid_policy_eval(*own, other->snapshot(), s).actions, own->policy(s));
}

TEST(Replay, WrapsAtCapacity) {
  ReplayBuffer b(4, 1, 1);
  for (int i = 0; i < 6; ++i) b.add({{double(i)}, {0.5}, double(i), {double(i)}, false});
  EXPECT_EQ(b.size(), 4u);
  std::mt19937_64 rng(1);
  const auto batch = b.sample(200, rng);
  EXPECT_GE(batch.rewards.minCoeff(), 2.0);
  EXPECT_THROW(ReplayBuffer(4, 1, 1).sample(1, rng), std::invalid_argument);
}

TEST(Checkpoint, RoundTrip) {
  auto agent = make_agent();
  fill_buffer(*agent, 32, 3);
  for (int i = 0; i < 6; ++i) agent->train_step();
  const auto file = std::filesystem::temp_directory_path() / "edgeslice_tests" / "agent.json";
  agent->save(file);
  auto loaded = TwinCriticAgent::load(file);
  const Matrix s = random_states(4, 11);
  EXPECT_EQ(loaded->policy(s), agent->policy(s));
  EXPECT_EQ(loaded->value_estimate(s), agent->value_estimate(s));
  EXPECT_EQ(loaded->train_steps(), 6);
  EXPECT_EQ(loaded->kind(), AgentKind::kDualDistill);
}

TEST(Training, ZeroEpisodes) {
  const auto cfg = small_env();
  const auto r = train_pair(cfg, small_factory(cfg), 0, tiny_config(), 1);
  ASSERT_EQ(r.curves.size(), 2u);
  EXPECT_TRUE(r.curves[0].empty());
  EXPECT_TRUE(r.curves[1].empty());
}

TEST(Training, ReproducibleCurves) {
  const auto cfg = small_env();
  auto c = tiny_config();
  c.warmup_steps = 16;
  for (auto kind : {AgentKind::kTd3NoDistill, AgentKind::kDdpgSingleCritic}) {
    const auto a = train_single(cfg, small_factory(cfg), 6, c, kind, 4);
    const auto b = train_single(cfg, small_factory(cfg), 6, c, kind, 4);
    ASSERT_EQ(a.curves[0].size(), 6u);
    for (std::size_t e = 0; e < 6; ++e) EXPECT_EQ(a.curves[0][e].reward, b.curves[0][e].reward);
  }
  const auto p = train_pair(cfg, small_factory(cfg), 6, c, 4);
  const auto q = train_pair(cfg, small_factory(cfg), 6, c, 4);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t e = 0; e < 6; ++e) {
      EXPECT_EQ(p.curves[i][e].reward, q.curves[i][e].reward);
      EXPECT_EQ(p.curves[i][e].distill_loss_mean, q.curves[i][e].distill_loss_mean);
    }
  }
  EXPECT_GT(p.curves[0].back().distill_loss_mean, 0.0);
  EXPECT_NE(p.agents[0]->peer(), nullptr);
}

TEST(Training, FinalDecileMean) {
  std::vector<EpisodeRecord> curve;
  for (int i = 0; i < 20; ++i) curve.push_back({i, 0, double(i), 0, 0});
  EXPECT_EQ(final_decile_mean(curve), 18.5);
  EXPECT_THROW(final_decile_mean({}), std::invalid_argument);
}

TEST(Config, JsonRoundTripAndValidation) {
  auto c = tiny_config();
  c.discount = 0.5;
  const nlohmann::json j = c;
  const auto back = j.get<AgentConfig>();
  EXPECT_EQ(back.discount, 0.5);
  EXPECT_EQ(back.hidden_layer_sizes, c.hidden_layer_sizes);
  c.discount = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_EQ(agent_kind_from_string(to_string(AgentKind::kDdpgSingleCritic)), AgentKind::kDdpgSingleCritic);
}
