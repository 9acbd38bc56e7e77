#include "edgeslice/kernels/kernels.hpp"
#include "edgeslice/predictor/attention.hpp"
#include "edgeslice/predictor/predictor.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

using namespace edgeslice;
using namespace edgeslice::predictor;
using nn::Matrix;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = n(rng);
  return m;
}

Matrix reference_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  Matrix s = q * k.transpose() / std::sqrt(static_cast<double>(q.cols()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
  return s * v;
}

PredictorConfig tiny_config() {
  PredictorConfig c;
  c.input_window_slots = 8;
  c.horizon_slots = 2;
  c.label_slots = 4;
  c.model_dim = 8;
  c.num_heads = 2;
  c.encoder_layers = 2;
  c.decoder_layers = 1;
  c.top_u_factor = 1.0;
  c.regions = 2;
  c.slots_per_day = 24;
  c.seed = 5;
  return c;
}

traffic::TrafficSeries constant_series(int regions, int length, int value) {
  traffic::TrafficSeries s;
  for (int r = 0; r < regions; ++r) {
    s.region_ids.push_back(r);
    s.counts.emplace_back(length, value);
  }
  return s;
}

}  // namespace

TEST(Attention, ProbSparseEqualsDenseWhenAllQueriesActive) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index L = 2 + trial % 11;
    const Matrix q = random_matrix(L, 4, rng), k = random_matrix(L, 4, rng), v = random_matrix(L, 3, rng);
    nn::Tape tape;
    const Matrix sparse =
        probsparse_attention(tape.constant(q), tape.constant(k), tape.constant(v), static_cast<std::size_t>(L))
            .value();
    EXPECT_LT((sparse - reference_attention(q, k, v)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Attention, SingleQueryReturnsValueRow) {
  nn::Tape tape;
  Matrix v(1, 3);
  v << 1.5, -2.0, 0.25;
  const Matrix out =
      probsparse_attention(tape.constant(Matrix::Random(1, 4)), tape.constant(Matrix::Random(1, 4)), tape.constant(v), 1)
          .value();
  EXPECT_LT((out - v).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, TopUMatchesExhaustiveMeasurement) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix q = random_matrix(8, 4, rng), k = random_matrix(8, 4, rng);
    std::vector<double> m(8);
    for (int i = 0; i < 8; ++i) {
      double mx = -1e300, total = 0.0;
      for (int j = 0; j < 8; ++j) {
        const double s = q.row(i).dot(k.row(j)) / 2.0;
        mx = std::max(mx, s);
        total += s;
      }
      m[i] = mx - total / 8.0;
    }
    // Exhaustive: the best 3-subset by total measurement.
    double best = -1e300;
    std::vector<Eigen::Index> best_set;
    for (int a = 0; a < 8; ++a) {
      for (int b = a + 1; b < 8; ++b) {
        for (int c = b + 1; c < 8; ++c) {
          const double total = m[a] + m[b] + m[c];
          if (total > best) {
            best = total;
            best_set = {a, b, c};
          }
        }
      }
    }
    EXPECT_EQ(select_active_queries(q, k, 3), best_set);
  }
}

TEST(Attention, NonSelectedRowsGetMeanValue) {
  std::mt19937_64 rng(3);
  const Matrix q = random_matrix(6, 4, rng), k = random_matrix(6, 4, rng), v = random_matrix(6, 2, rng);
  nn::Tape tape;
  const Matrix out = probsparse_attention(tape.constant(q), tape.constant(k), tape.constant(v), 2).value();
  const auto active = select_active_queries(q, k, 2);
  const Matrix mean = v.colwise().mean();
  for (Eigen::Index i = 0; i < 6; ++i) {
    if (std::find(active.begin(), active.end(), i) == active.end()) {
      EXPECT_LT((out.row(i) - mean).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Attention, OutputsAreConvexCombinations) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Matrix q = random_matrix(9, 4, rng), k = random_matrix(9, 4, rng), v = random_matrix(9, 3, rng);
    nn::Tape tape;
    const Matrix out = probsparse_attention(tape.constant(q), tape.constant(k), tape.constant(v), 4).value();
    const Matrix lo = v.colwise().minCoeff(), hi = v.colwise().maxCoeff();
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      for (Eigen::Index c = 0; c < out.cols(); ++c) {
        EXPECT_GE(out(i, c), lo(0, c) - 1e-12);
        EXPECT_LE(out(i, c), hi(0, c) + 1e-12);
      }
    }
  }
}

TEST(Attention, RejectsNonPositiveU) {
  nn::Tape tape;
  Var x = tape.constant(Matrix::Random(3, 2));
  EXPECT_THROW(probsparse_attention(x, x, x, 0), std::invalid_argument);
}

TEST(Attention, ActiveQueryCount) {
  EXPECT_EQ(active_query_count(48, 5.0), 20u);
  EXPECT_EQ(active_query_count(8, 5.0), 8u);
  EXPECT_EQ(active_query_count(1, 5.0), 1u);
}

TEST(Encoder, LayerHalvesLength) {
  auto cfg = tiny_config();
  cfg.model_dim = 8;
  TrafficPredictor model(cfg);
  for (auto [in, out] : {std::pair{48, 24}, std::pair{47, 24}}) {
    nn::Tape tape;
    Var x = tape.constant(Matrix::Random(in, 8));
    EXPECT_EQ(model.encoder_layer(tape, 0, x).rows(), out);
    EXPECT_EQ(model.encoder_layer(tape, 0, x).cols(), 8);
  }
  nn::Tape tape;
  Var x = tape.constant(Matrix::Random(48, 8));
  EXPECT_EQ(model.encode(tape, x).rows(), 12);
}

TEST(Predictor, BatchLayout) {
  const auto cfg = tiny_config();
  TrafficPredictor model(cfg);
  const auto s = traffic::synthesize({.seed = 1, .regions = 2, .days = 2, .slots_per_day = 24});
  const auto b = model.make_batch(s, 1, 10, true);
  EXPECT_EQ(b.encoder_input.rows(), 8);
  EXPECT_EQ(b.encoder_input.cols(), cfg.feature_dim());
  EXPECT_EQ(b.decoder_input.rows(), cfg.label_slots + cfg.horizon_slots);
  EXPECT_EQ(b.decoder_input.bottomRows(cfg.horizon_slots).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(b.target.cols(), cfg.horizon_slots);
  EXPECT_DOUBLE_EQ(b.target(0, 0), s.counts[1][10] / cfg.count_scale);
}

TEST(Predictor, GradientCheck) {
  const auto cfg = tiny_config();
  TrafficPredictor model(cfg);
  const auto s = traffic::synthesize({.seed = 3, .regions = 2, .days = 2, .noise_sd = 0.5, .slots_per_day = 24});
  const auto batch = model.make_batch(s, 0, 12, true);
  auto loss = [&](bool backward) {
    nn::Tape tape;
    Var l = nn::mse(model.forward(tape, batch), batch.target);
    if (backward) tape.backward(l);
    return l.scalar();
  };
  EXPECT_LT(edgeslice::testing::gradient_check(model.parameters(), loss), 1e-4);
}

TEST(Predictor, ForecastShapeAndHistoryCheck) {
  PredictorConfig cfg;
  cfg.regions = 3;
  TrafficPredictor model(cfg);
  const auto s = traffic::synthesize({.seed = 1, .regions = 3, .days = 1});
  const auto f = predict(model, s, 60);
  ASSERT_EQ(f.raw.size(), 3u);
  for (const auto& row : f.raw) EXPECT_EQ(row.size(), 6u);
  for (const auto& row : f.counts) {
    for (int c : row) EXPECT_GE(c, 0);
  }
  EXPECT_THROW(predict(model, s, 47), std::invalid_argument);
}

TEST(Predictor, LearnsConstantTraffic) {
  auto cfg = tiny_config();
  cfg.train_epochs = 200;
  cfg.patience = 200;
  cfg.sample_stride = 1;
  const auto s = constant_series(2, 96, 6);
  auto result = train_predictor(s, cfg);
  ASSERT_FALSE(result.curve.train_mse.empty());
  EXPECT_LT(result.curve.train_mse.back(), 0.01);
  const auto f = predict(result.model, s, 60);
  for (const auto& row : f.raw) {
    for (double v : row) EXPECT_NEAR(v, 6.0, 0.5);
  }
}

TEST(Predictor, TrainingIsDeterministic) {
  auto cfg = tiny_config();
  cfg.train_epochs = 3;
  const auto s = traffic::synthesize({.seed = 3, .regions = 2, .days = 4, .slots_per_day = 24});
  const auto a = train_predictor(s, cfg);
  const auto b = train_predictor(s, cfg);
  EXPECT_EQ(a.curve.train_mse, b.curve.train_mse);
  EXPECT_EQ(a.curve.val_mse, b.curve.val_mse);
}

TEST(Predictor, RejectsEmptyDataset) {
  traffic::TrafficSeries empty;
  EXPECT_THROW(train_predictor(empty, tiny_config()), std::invalid_argument);
}

TEST(Predictor, CheckpointRoundTrip) {
  const auto cfg = tiny_config();
  TrafficPredictor model(cfg);
  const auto file = std::filesystem::temp_directory_path() / "edgeslice_tests" / "predictor.json";
  model.save(file);
  auto loaded = TrafficPredictor::load(file);
  const auto s = traffic::synthesize({.seed = 1, .regions = 2, .days = 1, .slots_per_day = 24});
  EXPECT_EQ(predict(model, s, 12).raw, predict(loaded, s, 12).raw);
}

TEST(Naive, Examples) {
  const std::vector<int> h{3, 4, 5, 6, 5, 6, 7};
  EXPECT_EQ(naive_predict(h, NaiveKind::kLastValue, 6), std::vector<double>(6, 7.0));
  const std::vector<int> m{9, 4, 5, 6, 5, 6, 7};  // last 6 average 5.5
  EXPECT_EQ(naive_predict(m, NaiveKind::kMovingAverage, 3), std::vector<double>(3, 5.5));
  const std::vector<int> one{2};
  EXPECT_EQ(naive_predict(one, NaiveKind::kLastValue, 1), std::vector<double>(1, 2.0));
  EXPECT_THROW(naive_predict(one, NaiveKind::kMovingAverage, 1), std::invalid_argument);
}
