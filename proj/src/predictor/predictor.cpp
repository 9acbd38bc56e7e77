#include "edgeslice/predictor/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace edgeslice::predictor {

void PredictorConfig::validate() const {
  if (input_window_slots < 2 || horizon_slots < 1 || label_slots < 1 || model_dim < 1 || num_heads < 1 ||
      encoder_layers < 0 || decoder_layers < 1 || train_epochs < 0 || batch_size < 1 || patience < 1 ||
      sample_stride < 1 || regions < 1 || slots_per_day < 1) {
    throw std::invalid_argument("PredictorConfig: sizes must be positive");
  }
  if (model_dim % num_heads != 0) throw std::invalid_argument("PredictorConfig: model_dim % num_heads != 0");
  if (label_slots > input_window_slots) throw std::invalid_argument("PredictorConfig: label_slots > input window");
  if (!(top_u_factor > 0) || !(learning_rate > 0) || !(count_scale > 0)) {
    throw std::invalid_argument("PredictorConfig: factors must be positive");
  }
  if (!(validation_fraction > 0 && validation_fraction < 1)) {
    throw std::invalid_argument("PredictorConfig: validation_fraction must be in (0, 1)");
  }
}

void to_json(nlohmann::json& j, const PredictorConfig& c) {
  j = nlohmann::json{{"input_window_slots", c.input_window_slots},
                     {"horizon_slots", c.horizon_slots},
                     {"label_slots", c.label_slots},
                     {"model_dim", c.model_dim},
                     {"num_heads", c.num_heads},
                     {"encoder_layers", c.encoder_layers},
                     {"decoder_layers", c.decoder_layers},
                     {"top_u_factor", c.top_u_factor},
                     {"train_epochs", c.train_epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"patience", c.patience},
                     {"validation_fraction", c.validation_fraction},
                     {"sample_stride", c.sample_stride},
                     {"count_scale", c.count_scale},
                     {"slots_per_day", c.slots_per_day},
                     {"regions", c.regions},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PredictorConfig& c) {
  PredictorConfig d;
  c.input_window_slots = j.value("input_window_slots", d.input_window_slots);
  c.horizon_slots = j.value("horizon_slots", d.horizon_slots);
  c.label_slots = j.value("label_slots", d.label_slots);
  c.model_dim = j.value("model_dim", d.model_dim);
  c.num_heads = j.value("num_heads", d.num_heads);
  c.encoder_layers = j.value("encoder_layers", d.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", d.decoder_layers);
  c.top_u_factor = j.value("top_u_factor", d.top_u_factor);
  c.train_epochs = j.value("train_epochs", d.train_epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.patience = j.value("patience", d.patience);
  c.validation_fraction = j.value("validation_fraction", d.validation_fraction);
  c.sample_stride = j.value("sample_stride", d.sample_stride);
  c.count_scale = j.value("count_scale", d.count_scale);
  c.slots_per_day = j.value("slots_per_day", d.slots_per_day);
  c.regions = j.value("regions", d.regions);
  c.seed = j.value("seed", d.seed);
}

TrafficPredictor::TrafficPredictor(const PredictorConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const int d = config_.model_dim;
  embedding_ = nn::Linear("embed", config_.feature_dim(), d, rng);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string name = "enc" + std::to_string(l);
    encoder_.push_back({MultiHeadAttention(name + ".attn", d, config_.num_heads, rng),
                        nn::Linear(name + ".conv", 3 * d, d, rng)});
  }
  for (int l = 0; l < config_.decoder_layers; ++l) {
    const std::string name = "dec" + std::to_string(l);
    decoder_.push_back({MultiHeadAttention(name + ".self", d, config_.num_heads, rng),
                        MultiHeadAttention(name + ".cross", d, config_.num_heads, rng)});
  }
  head_ = nn::Mlp("head", d, {d}, 1, nn::Activation::kRelu, nn::Activation::kIdentity, rng);
}

Matrix TrafficPredictor::positional(Eigen::Index rows) const {
  const int d = config_.model_dim;
  Matrix pe(rows, d);
  for (Eigen::Index pos = 0; pos < rows; ++pos) {
    for (int i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / d);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  }
  return pe;
}

Var TrafficPredictor::embed(Tape& tape, const Matrix& features) {
  Var x = embedding_.forward(tape, tape.constant(features));
  return nn::add(x, tape.constant(positional(features.rows())));
}

Var TrafficPredictor::encoder_layer(Tape& tape, std::size_t layer, Var x) {
  auto& block = encoder_.at(layer);
  Var attended = block.attention.forward(tape, x, x, AttentionMode::kProbSparse, config_.top_u_factor);
  Var h = nn::normalize_rows(nn::add(x, attended));
  // Same-padded kernel-3 convolution: taps at i-1, i, i+1.
  Var taps = nn::concat_cols({nn::shift_rows(h, 1), h, nn::shift_rows(h, -1)});
  Var conv = block.conv.forward(tape, taps);
  return nn::maxpool_rows(nn::elu(conv));
}

Var TrafficPredictor::encode(Tape& tape, Var embedded) {
  Var x = embedded;
  for (std::size_t l = 0; l < encoder_.size(); ++l) x = encoder_layer(tape, l, x);
  return x;
}

Var TrafficPredictor::forward(Tape& tape, const PredictionBatch& batch) {
  Var memory = encode(tape, embed(tape, batch.encoder_input));
  Var y = embed(tape, batch.decoder_input);
  for (auto& block : decoder_) {
    y = nn::normalize_rows(
        nn::add(y, block.self_attention.forward(tape, y, y, AttentionMode::kCausal, config_.top_u_factor)));
    y = nn::normalize_rows(
        nn::add(y, block.cross_attention.forward(tape, y, memory, AttentionMode::kDense, config_.top_u_factor)));
  }
  Var tail = nn::slice_rows(y, y.rows() - config_.horizon_slots, config_.horizon_slots);
  return nn::transpose(head_.forward(tape, tail));
}

std::vector<nn::Parameter*> TrafficPredictor::parameters() {
  std::vector<nn::Parameter*> out = embedding_.parameters();
  auto append = [&out](std::vector<nn::Parameter*> ps) { out.insert(out.end(), ps.begin(), ps.end()); };
  for (auto& b : encoder_) {
    append(b.attention.parameters());
    append(b.conv.parameters());
  }
  for (auto& b : decoder_) {
    append(b.self_attention.parameters());
    append(b.cross_attention.parameters());
  }
  append(head_.parameters());
  return out;
}

PredictionBatch TrafficPredictor::make_batch(const traffic::TrafficSeries& series, std::size_t region,
                                             std::size_t target_start, bool with_target) const {
  const auto L = static_cast<std::size_t>(config_.input_window_slots);
  const auto T = static_cast<std::size_t>(config_.horizon_slots);
  const auto label = static_cast<std::size_t>(config_.label_slots);
  if (region >= series.regions() || static_cast<int>(region) >= config_.regions) {
    throw std::out_of_range("make_batch: region out of range");
  }
  if (target_start < L || target_start > series.length()) {
    throw std::invalid_argument("make_batch: insufficient history for the input window");
  }
  if (with_target && target_start + T > series.length()) throw std::invalid_argument("make_batch: no target");
  const int F = config_.feature_dim();
  auto fill = [&](Matrix& m, Eigen::Index row, std::size_t slot) {
    const double phase =
        2.0 * std::numbers::pi * static_cast<double>(slot % static_cast<std::size_t>(config_.slots_per_day)) /
        config_.slots_per_day;
    m(row, 0) = series.counts[region][slot] / config_.count_scale;
    m(row, 1) = std::sin(phase);
    m(row, 2) = std::cos(phase);
    m(row, 3 + static_cast<Eigen::Index>(region)) = 1.0;
  };
  PredictionBatch b;
  b.region = static_cast<int>(region);
  b.encoder_input = Matrix::Zero(static_cast<Eigen::Index>(L), F);
  for (std::size_t k = 0; k < L; ++k) fill(b.encoder_input, static_cast<Eigen::Index>(k), target_start - L + k);
  b.decoder_input = Matrix::Zero(static_cast<Eigen::Index>(label + T), F);
  for (std::size_t k = 0; k < label; ++k) {
    fill(b.decoder_input, static_cast<Eigen::Index>(k), target_start - label + k);
  }
  if (with_target) {
    b.target.resize(1, static_cast<Eigen::Index>(T));
    for (std::size_t k = 0; k < T; ++k) {
      b.target(0, static_cast<Eigen::Index>(k)) = series.counts[region][target_start + k] / config_.count_scale;
    }
  }
  return b;
}

nlohmann::json TrafficPredictor::checkpoint() {
  nlohmann::json j;
  j["format"] = "edgeslice-predictor";
  j["version"] = 1;
  j["config"] = config_;
  j["parameters"] = nn::parameters_to_json(parameters());
  return j;
}

TrafficPredictor TrafficPredictor::from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "edgeslice-predictor") throw std::runtime_error("not a predictor checkpoint");
  TrafficPredictor model(j.at("config").get<PredictorConfig>());
  nn::parameters_from_json(model.parameters(), j.at("parameters"));
  return model;
}

void TrafficPredictor::save(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << checkpoint().dump();
}

TrafficPredictor TrafficPredictor::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  return from_checkpoint(nlohmann::json::parse(in));
}

Forecast predict(TrafficPredictor& model, const traffic::TrafficSeries& history, std::size_t end_slot) {
  const auto& cfg = model.config();
  if (end_slot < static_cast<std::size_t>(cfg.input_window_slots) || end_slot > history.length()) {
    throw std::invalid_argument("predict: insufficient history");
  }
  Forecast f;
  for (std::size_t r = 0; r < history.regions(); ++r) {
    Tape tape;
    const auto batch = model.make_batch(history, r, end_slot, false);
    const Matrix y = model.forward(tape, batch).value() * cfg.count_scale;
    std::vector<double> raw(y.data(), y.data() + y.size());
    std::vector<int> counts(raw.size());
    std::transform(raw.begin(), raw.end(), counts.begin(),
                   [](double v) { return static_cast<int>(std::round(std::max(0.0, v))); });
    f.raw.push_back(std::move(raw));
    f.counts.push_back(std::move(counts));
  }
  return f;
}

void write_loss_curve(const LossCurve& curve, const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "epoch,train_mse,val_mse\n" << std::setprecision(10);
  for (std::size_t e = 0; e < curve.train_mse.size(); ++e) {
    out << e + 1 << ',' << curve.train_mse[e] << ',' << curve.val_mse[e] << '\n';
  }
}

namespace {

struct WindowRef {
  std::size_t region;
  std::size_t start;
};

std::vector<WindowRef> windows(const traffic::TrafficSeries& s, const PredictorConfig& c, std::size_t begin,
                               std::size_t end, int stride) {
  std::vector<WindowRef> out;
  const auto L = static_cast<std::size_t>(c.input_window_slots);
  const auto T = static_cast<std::size_t>(c.horizon_slots);
  const std::size_t first = std::max(begin, L);
  for (std::size_t r = 0; r < s.regions(); ++r) {
    for (std::size_t t = first; t + T <= end; t += static_cast<std::size_t>(stride)) out.push_back({r, t});
  }
  return out;
}

std::vector<nn::Matrix> snapshot(const std::vector<nn::Parameter*>& ps) {
  std::vector<nn::Matrix> out;
  for (auto* p : ps) out.push_back(p->value);
  return out;
}

}  // namespace

double evaluate_mse(TrafficPredictor& model, const traffic::TrafficSeries& series, std::size_t begin,
                    std::size_t end, int stride) {
  const auto refs = windows(series, model.config(), begin, end, stride);
  if (refs.empty()) throw std::invalid_argument("evaluate_mse: no evaluation windows");
  const double scale2 = model.config().count_scale * model.config().count_scale;
  double total = 0.0;
  for (const auto& w : refs) {
    Tape tape;
    const auto b = model.make_batch(series, w.region, w.start, true);
    total += (model.forward(tape, b).value() - b.target).squaredNorm() / static_cast<double>(b.target.size());
  }
  return total / static_cast<double>(refs.size()) * scale2;
}

TrainResult train_predictor(const traffic::TrafficSeries& dataset, const PredictorConfig& config) {
  config.validate();
  dataset.validate();
  if (dataset.length() == 0 || dataset.regions() == 0) throw std::invalid_argument("train_predictor: empty dataset");
  if (static_cast<int>(dataset.regions()) != config.regions) {
    throw std::invalid_argument("train_predictor: dataset region count does not match config");
  }
  const std::size_t n = dataset.length();
  const auto split = static_cast<std::size_t>(std::floor(n * (1.0 - config.validation_fraction)));
  auto train_refs = windows(dataset, config, 0, split, config.sample_stride);
  const auto val_refs = windows(dataset, config, split, n, config.sample_stride);
  if (train_refs.empty() || val_refs.empty()) {
    throw std::invalid_argument("train_predictor: dataset too short for the configured windows");
  }

  TrainResult result{TrafficPredictor(config), {}};
  auto& model = result.model;
  auto params = model.parameters();
  nn::Adam adam(params, {.learning_rate = config.learning_rate, .grad_clip_norm = 5.0});
  std::mt19937_64 rng(config.seed ^ 0x5eed5eedULL);
  const double scale2 = config.count_scale * config.count_scale;

  auto validation_mse = [&] {
    double total = 0.0;
    for (const auto& w : val_refs) {
      Tape tape;
      const auto b = model.make_batch(dataset, w.region, w.start, true);
      total += (model.forward(tape, b).value() - b.target).squaredNorm() / static_cast<double>(b.target.size());
    }
    return total / static_cast<double>(val_refs.size()) * scale2;
  };

  double best = std::numeric_limits<double>::infinity();
  auto best_params = snapshot(params);
  int since_best = 0;
  for (int epoch = 0; epoch < config.train_epochs; ++epoch) {
    std::shuffle(train_refs.begin(), train_refs.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_refs.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(train_refs.size(), start + static_cast<std::size_t>(config.batch_size));
      adam.zero_grad();
      for (std::size_t i = start; i < stop; ++i) {
        Tape tape;
        const auto b = model.make_batch(dataset, train_refs[i].region, train_refs[i].start, true);
        Var loss = nn::scale(nn::mse(model.forward(tape, b), b.target), 1.0 / static_cast<double>(stop - start));
        epoch_loss += loss.scalar() * static_cast<double>(stop - start);
        tape.backward(loss);
      }
      adam.step();
    }
    const double val = validation_mse();
    result.curve.train_mse.push_back(epoch_loss / static_cast<double>(train_refs.size()) * scale2);
    result.curve.val_mse.push_back(val);
    if (val < best) {
      best = val;
      best_params = snapshot(params);
      result.curve.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
  return result;
}

std::vector<double> naive_predict(std::span<const int> history, NaiveKind kind, int horizon, int window) {
  if (history.empty()) throw std::invalid_argument("naive_predict: empty history");
  if (horizon < 1) throw std::invalid_argument("naive_predict: horizon must be positive");
  double value = history.back();
  if (kind == NaiveKind::kMovingAverage) {
    if (window < 1 || static_cast<std::size_t>(window) > history.size()) {
      throw std::invalid_argument("naive_predict: window exceeds history");
    }
    const auto tail = history.last(static_cast<std::size_t>(window));
    value = std::accumulate(tail.begin(), tail.end(), 0.0) / window;
  }
  return std::vector<double>(static_cast<std::size_t>(horizon), value);
}

double naive_mse(const traffic::TrafficSeries& series, const PredictorConfig& config, NaiveKind kind,
                 std::size_t begin, std::size_t end, int stride, int window) {
  const auto refs = windows(series, config, begin, end, stride);
  if (refs.empty()) throw std::invalid_argument("naive_mse: no evaluation windows");
  double total = 0.0;
  for (const auto& w : refs) {
    const auto& row = series.counts[w.region];
    const std::span<const int> hist(row.data(), w.start);
    const auto f = naive_predict(hist, kind, config.horizon_slots, window);
    double sq = 0.0;
    for (int k = 0; k < config.horizon_slots; ++k) {
      const double e = f[static_cast<std::size_t>(k)] - row[w.start + static_cast<std::size_t>(k)];
      sq += e * e;
    }
    total += sq / config.horizon_slots;
  }
  return total / static_cast<double>(refs.size());
}

}  // namespace edgeslice::predictor
