#pragma once

#include "edgeslice/nn/tape.hpp"

#include <nlohmann/json.hpp>

#include <random>
#include <string>
#include <vector>

namespace edgeslice::nn {

enum class Activation { kRelu, kElu, kTanh, kSigmoid, kIdentity };

Var activate(Var x, Activation act);
/// Same activation applied to a plain matrix (no gradient recording).
Matrix activate(const Matrix& x, Activation act);

/// y = x W + b, W is in x out.
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng);

  Var forward(Tape& tape, Var x);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }
  Eigen::Index in() const { return weight_.value.rows(); }
  Eigen::Index out() const { return weight_.value.cols(); }
  Matrix evaluate(const Matrix& x) const;

 private:
  Parameter weight_;
  Parameter bias_;
};

/// Fully connected stack with a hidden activation and an output activation.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, Eigen::Index in, const std::vector<int>& hidden, Eigen::Index out,
      Activation hidden_act, Activation out_act, std::mt19937_64& rng);

  Var forward(Tape& tape, Var x);
  /// Forward pass without recording gradients.
  Matrix evaluate(const Matrix& x) const;
  std::vector<Parameter*> parameters();
  Eigen::Index in() const { return layers_.front().in(); }
  Eigen::Index out() const { return layers_.back().out(); }

 private:
  std::vector<Linear> layers_;
  Activation hidden_act_ = Activation::kRelu;
  Activation out_act_ = Activation::kIdentity;
};

class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double grad_clip_norm = 0.0;  // 0 disables
  };

  Adam() = default;
  Adam(std::vector<Parameter*> params, Options options);

  void zero_grad();
  void step();
  long steps() const { return step_; }

  nlohmann::json state() const;
  void load_state(const nlohmann::json& j);

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  Options options_;
  long step_ = 0;
};

// Serialization helpers. Doubles are written with round-trip precision.
nlohmann::json to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json parameters_to_json(const std::vector<Parameter*>& params);
void parameters_from_json(const std::vector<Parameter*>& params, const nlohmann::json& j);

/// Copies values between structurally identical parameter lists.
void copy_parameters(const std::vector<Parameter*>& from, const std::vector<Parameter*>& to);
/// to <- tau * from + (1 - tau) * to
void soft_update(const std::vector<Parameter*>& from, const std::vector<Parameter*>& to, double tau);

std::size_t parameter_count(const std::vector<Parameter*>& params);

}  // namespace edgeslice::nn
