#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records the forward computation as a list of nodes in evaluation
// order; backward() walks that list in reverse. Parameters live outside the
// tape and receive accumulated gradients, so one parameter set can be used by
// many tapes (one per sample, per batch, ...).

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace edgeslice::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& p);

  /// Records an op. `backward` receives the output gradient and must accumulate
  /// into inputs through accumulate().
  Var record(Matrix value, bool needs_grad, std::function<void(Tape&, const Matrix&)> backward);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient of the last backward() root w.r.t. v (zero matrix if untouched).
  Matrix grad(Var v) const;
  void accumulate(Var v, const Matrix& g);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to all parameters.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    bool has_grad = false;
    Parameter* param = nullptr;
    std::function<void(Tape&, const Matrix&)> backward;
  };
  std::vector<Node> nodes_;
};

// Linear algebra
Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

// Elementwise
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var minimum(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var square(Var a);
Var exp(Var a);
Var relu(Var a);
Var elu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);

// Broadcasting: `row` is 1 x cols, `col` is rows x 1
Var add_row(Var a, Var row);
Var mul_row(Var a, Var row);
Var mul_col(Var a, Var col);
Var broadcast_rows(Var row, Eigen::Index rows);

// Reductions
Var sum(Var a);
Var mean(Var a);
/// Row-wise sum -> rows x 1
Var sum_cols(Var a);
/// Column means over rows -> 1 x cols
Var mean_rows(Var a);

// Structure
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
Var gather_rows(Var a, const std::vector<Eigen::Index>& rows);
/// Copy of `base` with row rows[k] replaced by row k of `selected`.
Var merge_rows(Var base, Var selected, const std::vector<Eigen::Index>& rows);
/// out[i] = a[i - offset] (zero outside range); used to build convolution taps.
Var shift_rows(Var a, Eigen::Index offset);

// Sequence ops
/// Row-wise softmax. With `causal`, entry (i, j) is masked when j > i + causal_offset.
Var softmax_rows(Var a, bool causal = false, Eigen::Index causal_offset = 0);
/// Max pooling along rows: kernel 3, stride 2, padding 1 -> ceil(rows / 2) rows.
Var maxpool_rows(Var a);
/// Normalizes every row to zero mean, unit variance (eps inside the sqrt).
Var normalize_rows(Var a, double eps = 1e-5);

/// Mean squared error against a constant target.
Var mse(Var prediction, const Matrix& target);

}  // namespace edgeslice::nn
