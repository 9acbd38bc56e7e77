#pragma once

#include "edgeslice/nn/layers.hpp"
#include "edgeslice/predictor/attention.hpp"
#include "edgeslice/traffic/traffic.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

namespace edgeslice::predictor {

struct PredictorConfig {
  int input_window_slots = 48;  // encoder history length
  int horizon_slots = 6;        // short slots forecast (one long slot)
  int label_slots = 12;         // known slots at the head of the decoder input
  int model_dim = 32;
  int num_heads = 4;
  int encoder_layers = 2;
  int decoder_layers = 1;
  double top_u_factor = 5.0;
  int train_epochs = 25;
  int batch_size = 32;
  double learning_rate = 1e-3;
  int patience = 10;
  double validation_fraction = 0.2;
  int sample_stride = 3;
  double count_scale = 10.0;
  int slots_per_day = 144;
  int regions = 3;
  std::uint64_t seed = 7;

  void validate() const;
  int feature_dim() const { return 3 + regions; }
};

void to_json(nlohmann::json& j, const PredictorConfig& c);
void from_json(const nlohmann::json& j, PredictorConfig& c);

/// One training/inference example for a single region.
struct PredictionBatch {
  Matrix encoder_input;  // L x F
  Matrix decoder_input;  // (label + horizon) x F; trailing horizon rows all zero
  Matrix target;         // 1 x horizon, in scaled units (may be empty at inference)
  int region = 0;
};

class TrafficPredictor {
 public:
  TrafficPredictor() = default;
  explicit TrafficPredictor(const PredictorConfig& config);

  const PredictorConfig& config() const { return config_; }

  /// Scaled forecast (1 x horizon) with gradients recorded on `tape`.
  Var forward(Tape& tape, const PredictionBatch& batch);
  /// Encoder stack output for an encoder input matrix (exposed for shape checks).
  Var encode(Tape& tape, Var embedded);
  Var encoder_layer(Tape& tape, std::size_t layer, Var x);
  Var embed(Tape& tape, const Matrix& features);

  std::vector<nn::Parameter*> parameters();

  /// Builds the example whose forecast starts at slot `target_start` of `series`.
  PredictionBatch make_batch(const traffic::TrafficSeries& series, std::size_t region,
                             std::size_t target_start, bool with_target) const;

  nlohmann::json checkpoint();
  static TrafficPredictor from_checkpoint(const nlohmann::json& j);
  void save(const std::filesystem::path& file);
  static TrafficPredictor load(const std::filesystem::path& file);

 private:
  struct EncoderBlock {
    MultiHeadAttention attention;
    nn::Linear conv;  // kernel-3 taps stacked: 3d -> d
  };
  struct DecoderBlock {
    MultiHeadAttention self_attention;
    MultiHeadAttention cross_attention;
  };

  Matrix positional(Eigen::Index rows) const;

  PredictorConfig config_;
  nn::Linear embedding_;
  std::vector<EncoderBlock> encoder_;
  std::vector<DecoderBlock> decoder_;
  nn::Mlp head_;
};

struct Forecast {
  std::vector<std::vector<double>> raw;  // regions x horizon, count units
  std::vector<std::vector<int>> counts;  // clamped at 0 and rounded
};

/// Forecasts the `horizon_slots` slots starting at `end_slot` from the history before it.
Forecast predict(TrafficPredictor& model, const traffic::TrafficSeries& history, std::size_t end_slot);

struct LossCurve {
  std::vector<double> train_mse;
  std::vector<double> val_mse;
  int best_epoch = -1;
};

void write_loss_curve(const LossCurve& curve, const std::filesystem::path& file);

struct TrainResult {
  TrafficPredictor model;
  LossCurve curve;
};

/// Chronological split: the last `validation_fraction` of slots is used for validation.
/// Minimizes MSE with Adam; returns the best-validation parameters.
TrainResult train_predictor(const traffic::TrafficSeries& dataset, const PredictorConfig& config);

/// MSE in count units over all windows whose target lies in [begin, end).
double evaluate_mse(TrafficPredictor& model, const traffic::TrafficSeries& series, std::size_t begin,
                    std::size_t end, int stride = 1);

enum class NaiveKind { kLastValue, kMovingAverage };

std::vector<double> naive_predict(std::span<const int> history, NaiveKind kind, int horizon, int window = 6);

/// Naive-baseline MSE on exactly the windows evaluate_mse would use.
double naive_mse(const traffic::TrafficSeries& series, const PredictorConfig& config, NaiveKind kind,
                 std::size_t begin, std::size_t end, int stride = 1, int window = 6);

}  // namespace edgeslice::predictor
