#include "edgeslice/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace edgeslice::nn {

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kElu:
      return elu(x);
    case Activation::kTanh:
      return tanh(x);
    case Activation::kSigmoid:
      return sigmoid(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

Matrix activate(const Matrix& x, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return x.cwiseMax(0.0);
    case Activation::kElu:
      return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
    case Activation::kTanh:
      return x.array().tanh().matrix();
    case Activation::kSigmoid:
      return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    case Activation::kIdentity:
      return x;
  }
  throw std::logic_error("unknown activation");
}

Linear::Linear(std::string name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  // Uniform fan-in initialization.
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  Matrix b(1, out);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
  weight_ = Parameter(name + ".weight", std::move(w));
  bias_ = Parameter(name + ".bias", std::move(b));
}

Var Linear::forward(Tape& tape, Var x) {
  return add_row(matmul(x, tape.parameter(weight_)), tape.parameter(bias_));
}

Mlp::Mlp(std::string name, Eigen::Index in, const std::vector<int>& hidden, Eigen::Index out,
         Activation hidden_act, Activation out_act, std::mt19937_64& rng)
    : hidden_act_(hidden_act), out_act_(out_act) {
  Eigen::Index width = in;
  for (std::size_t k = 0; k < hidden.size(); ++k) {
    layers_.emplace_back(name + ".l" + std::to_string(k), width, hidden[k], rng);
    width = hidden[k];
  }
  layers_.emplace_back(name + ".out", width, out, rng);
}

Var Mlp::forward(Tape& tape, Var x) {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    x = layers_[k].forward(tape, x);
    x = activate(x, k + 1 < layers_.size() ? hidden_act_ : out_act_);
  }
  return x;
}

Matrix Linear::evaluate(const Matrix& x) const {
  if (x.cols() != weight_.value.rows()) throw std::invalid_argument("Linear: input width mismatch");
  Matrix y = x * weight_.value;
  y.rowwise() += bias_.value.row(0);
  return y;
}

Matrix Mlp::evaluate(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    h = activate(layers_[k].evaluate(h), k + 1 < layers_.size() ? hidden_act_ : out_act_);
  }
  return h;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (auto* p : l.parameters()) out.push_back(p);
  }
  return out;
}

Adam::Adam(std::vector<Parameter*> params, Options options) : params_(std::move(params)), options_(options) {
  for (auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++step_;
  double clip = 1.0;
  if (options_.grad_clip_norm > 0) {
    double sq = 0.0;
    for (auto* p : params_) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > options_.grad_clip_norm) clip = options_.grad_clip_norm / norm;
  }
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix g = params_[i]->grad * clip;
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
    params_[i]->value.array() -=
        options_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + options_.epsilon);
  }
}

nlohmann::json Adam::state() const {
  nlohmann::json j;
  j["step"] = step_;
  j["m"] = nlohmann::json::array();
  j["v"] = nlohmann::json::array();
  for (std::size_t i = 0; i < m_.size(); ++i) {
    j["m"].push_back(to_json(m_[i]));
    j["v"].push_back(to_json(v_[i]));
  }
  return j;
}

void Adam::load_state(const nlohmann::json& j) {
  step_ = j.at("step").get<long>();
  if (j.at("m").size() != m_.size()) throw std::runtime_error("Adam::load_state: parameter count mismatch");
  for (std::size_t i = 0; i < m_.size(); ++i) {
    m_[i] = matrix_from_json(j.at("m")[i]);
    v_[i] = matrix_from_json(j.at("v")[i]);
  }
}

nlohmann::json to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = std::vector<double>(m.data(), m.data() + m.size());
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw std::runtime_error("matrix_from_json: size mismatch");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

nlohmann::json parameters_to_json(const std::vector<Parameter*>& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto* p : params) j[p->name] = to_json(p->value);
  return j;
}

void parameters_from_json(const std::vector<Parameter*>& params, const nlohmann::json& j) {
  for (auto* p : params) {
    Matrix m = matrix_from_json(j.at(p->name));
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
      throw std::runtime_error("parameters_from_json: shape mismatch for " + p->name);
    }
    p->value = std::move(m);
    p->zero_grad();
  }
}

void copy_parameters(const std::vector<Parameter*>& from, const std::vector<Parameter*>& to) {
  if (from.size() != to.size()) throw std::invalid_argument("copy_parameters: structure mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) to[i]->value = from[i]->value;
}

void soft_update(const std::vector<Parameter*>& from, const std::vector<Parameter*>& to, double tau) {
  if (from.size() != to.size()) throw std::invalid_argument("soft_update: structure mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    to[i]->value = tau * from[i]->value + (1.0 - tau) * to[i]->value;
  }
}

std::size_t parameter_count(const std::vector<Parameter*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

}  // namespace edgeslice::nn
