#include "edgeslice/nn/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace edgeslice::nn {

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.needs_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, bool needs_grad, std::function<void(Tape&, const Matrix&)> backward) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.needs_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("backward: variable belongs to another tape");
  const Matrix& rv = nodes_[root.id].value;
  if (rv.rows() != 1 || rv.cols() != 1) throw std::invalid_argument("backward: root must be 1x1");
  accumulate(root, Matrix::Ones(1, 1));
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
    } else if (n.backward) {
      // Copy: backward may push into other nodes but never resizes the vector.
      n.backward(*this, n.grad);
    }
  }
}

namespace {

Tape& tape_of(Var a) { return *a.tape; }

bool any_grad(Var a) { return a.tape->needs_grad(a); }
bool any_grad(Var a, Var b) { return a.tape->needs_grad(a) || b.tape->needs_grad(b); }

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

template <typename F, typename G>
Var unary(Var a, F forward, G derivative) {
  const Matrix& x = a.value();
  Matrix y = x.unaryExpr(forward);
  return tape_of(a).record(y, any_grad(a), [a, derivative](Tape& t, const Matrix& g) {
    const Matrix& xv = t.value(a);
    t.accumulate(a, g.cwiseProduct(xv.unaryExpr(derivative)));
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  Matrix y = a.value() * b.value();
  return tape_of(a).record(std::move(y), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
  Matrix y = a.value() * b.value().transpose();
  return tape_of(a).record(std::move(y), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * t.value(b));
    if (t.needs_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
  });
}

Var transpose(Var a) {
  Matrix y = a.value().transpose();
  return tape_of(a).record(std::move(y), any_grad(a),
                           [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  Matrix y = a.value() + b.value();
  return tape_of(a).record(std::move(y), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  Matrix y = a.value() - b.value();
  return tape_of(a).record(std::move(y), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, -g);
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a, b, "mul");
  Matrix y = a.value().cwiseProduct(b.value());
  return tape_of(a).record(std::move(y), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var minimum(Var a, Var b) {
  require_same_shape(a, b, "minimum");
  Matrix y = a.value().cwiseMin(b.value());
  return tape_of(a).record(std::move(y), any_grad(a, b), [a, b](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    const Matrix& bv = t.value(b);
    // Ties route the gradient to `a`.
    Matrix ga = Matrix::Zero(g.rows(), g.cols());
    Matrix gb = Matrix::Zero(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      if (av.data()[i] <= bv.data()[i]) {
        ga.data()[i] = g.data()[i];
      } else {
        gb.data()[i] = g.data()[i];
      }
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

Var scale(Var a, double s) {
  Matrix y = a.value() * s;
  return tape_of(a).record(std::move(y), any_grad(a), [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(Var a, double s) {
  Matrix y = a.value().array() + s;
  return tape_of(a).record(std::move(y), any_grad(a), [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var exp(Var a) {
  Matrix y = a.value().array().exp();
  return tape_of(a).record(y, any_grad(a), [a, y](Tape& t, const Matrix& g) { t.accumulate(a, g.cwiseProduct(y)); });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var elu(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x : std::expm1(x); }, [](double x) { return x > 0 ? 1.0 : std::exp(x); });
}

Var tanh(Var a) {
  Matrix y = a.value().array().tanh();
  return tape_of(a).record(y, any_grad(a), [a, y](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var sigmoid(Var a) {
  Matrix y = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return tape_of(a).record(y, any_grad(a), [a, y](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("add_row: bad row shape");
  Matrix y = a.value().rowwise() + row.value().row(0);
  return tape_of(a).record(std::move(y), any_grad(a, row), [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var mul_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw std::invalid_argument("mul_row: bad row shape");
  Matrix y = a.value().array().rowwise() * row.value().row(0).array();
  return tape_of(a).record(std::move(y), any_grad(a, row), [a, row](Tape& t, const Matrix& g) {
    const Matrix& rv = t.value(row);
    if (t.needs_grad(a)) t.accumulate(a, (g.array().rowwise() * rv.row(0).array()).matrix());
    if (t.needs_grad(row)) t.accumulate(row, g.cwiseProduct(t.value(a)).colwise().sum());
  });
}

Var mul_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw std::invalid_argument("mul_col: bad column shape");
  Matrix y = a.value().array().colwise() * col.value().col(0).array();
  return tape_of(a).record(std::move(y), any_grad(a, col), [a, col](Tape& t, const Matrix& g) {
    const Matrix& cv = t.value(col);
    if (t.needs_grad(a)) t.accumulate(a, (g.array().colwise() * cv.col(0).array()).matrix());
    if (t.needs_grad(col)) t.accumulate(col, g.cwiseProduct(t.value(a)).rowwise().sum());
  });
}

Var broadcast_rows(Var row, Eigen::Index rows) {
  if (row.rows() != 1) throw std::invalid_argument("broadcast_rows: input must be a row");
  Matrix y = row.value().replicate(rows, 1);
  return tape_of(row).record(std::move(y), any_grad(row),
                             [row](Tape& t, const Matrix& g) { t.accumulate(row, g.colwise().sum()); });
}

Var sum(Var a) {
  Matrix y(1, 1);
  y(0, 0) = a.value().sum();
  return tape_of(a).record(std::move(y), any_grad(a), [a](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    t.accumulate(a, Matrix::Constant(av.rows(), av.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sum_cols(Var a) {
  Matrix y = a.value().rowwise().sum();
  return tape_of(a).record(std::move(y), any_grad(a), [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.col(0).replicate(1, t.value(a).cols()));
  });
}

Var mean_rows(Var a) {
  const double n = static_cast<double>(a.rows());
  Matrix y = a.value().colwise().mean();
  return tape_of(a).record(std::move(y), any_grad(a), [a, n](Tape& t, const Matrix& g) {
    t.accumulate(a, (g / n).replicate(t.value(a).rows(), 1));
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool grad = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
    grad = grad || any_grad(p);
  }
  Matrix y(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return tape_of(parts.front()).record(std::move(y), grad, [parts](Tape& t, const Matrix& g) {
    Eigen::Index col = 0;
    for (const auto& p : parts) {
      const Eigen::Index w = t.value(p).cols();
      if (t.needs_grad(p)) t.accumulate(p, g.middleCols(col, w));
      col += w;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  bool grad = false;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
    grad = grad || any_grad(p);
  }
  Matrix y(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    y.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return tape_of(parts.front()).record(std::move(y), grad, [parts](Tape& t, const Matrix& g) {
    Eigen::Index row = 0;
    for (const auto& p : parts) {
      const Eigen::Index h = t.value(p).rows();
      if (t.needs_grad(p)) t.accumulate(p, g.middleRows(row, h));
      row += h;
    }
  });
}

Var slice_rows(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) throw std::out_of_range("slice_rows");
  Matrix y = a.value().middleRows(begin, count);
  return tape_of(a).record(std::move(y), any_grad(a), [a, begin, count](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    Matrix ga = Matrix::Zero(av.rows(), av.cols());
    ga.middleRows(begin, count) = g;
    t.accumulate(a, ga);
  });
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) throw std::out_of_range("slice_cols");
  Matrix y = a.value().middleCols(begin, count);
  return tape_of(a).record(std::move(y), any_grad(a), [a, begin, count](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    Matrix ga = Matrix::Zero(av.rows(), av.cols());
    ga.middleCols(begin, count) = g;
    t.accumulate(a, ga);
  });
}

Var gather_rows(Var a, const std::vector<Eigen::Index>& rows) {
  Matrix y(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= a.rows()) throw std::out_of_range("gather_rows");
    y.row(static_cast<Eigen::Index>(k)) = a.value().row(rows[k]);
  }
  return tape_of(a).record(std::move(y), any_grad(a), [a, rows](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    Matrix ga = Matrix::Zero(av.rows(), av.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) ga.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
    t.accumulate(a, ga);
  });
}

Var merge_rows(Var base, Var selected, const std::vector<Eigen::Index>& rows) {
  if (selected.rows() != static_cast<Eigen::Index>(rows.size()) || selected.cols() != base.cols()) {
    throw std::invalid_argument("merge_rows: shape mismatch");
  }
  Matrix y = base.value();
  std::vector<bool> replaced(static_cast<std::size_t>(base.rows()), false);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= base.rows() || replaced[rows[k]]) throw std::invalid_argument("merge_rows: bad index");
    replaced[rows[k]] = true;
    y.row(rows[k]) = selected.value().row(static_cast<Eigen::Index>(k));
  }
  return tape_of(base).record(std::move(y), any_grad(base, selected),
                              [base, selected, rows, replaced](Tape& t, const Matrix& g) {
                                if (t.needs_grad(base)) {
                                  Matrix gb = g;
                                  for (auto r : rows) gb.row(r).setZero();
                                  t.accumulate(base, gb);
                                }
                                if (t.needs_grad(selected)) {
                                  Matrix gs(static_cast<Eigen::Index>(rows.size()), g.cols());
                                  for (std::size_t k = 0; k < rows.size(); ++k) {
                                    gs.row(static_cast<Eigen::Index>(k)) = g.row(rows[k]);
                                  }
                                  t.accumulate(selected, gs);
                                }
                              });
}

Var shift_rows(Var a, Eigen::Index offset) {
  const Matrix& av = a.value();
  const Eigen::Index n = av.rows();
  Matrix y = Matrix::Zero(n, av.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = i - offset;
    if (src >= 0 && src < n) y.row(i) = av.row(src);
  }
  return tape_of(a).record(std::move(y), any_grad(a), [a, offset](Tape& t, const Matrix& g) {
    const Eigen::Index n2 = g.rows();
    Matrix ga = Matrix::Zero(n2, g.cols());
    for (Eigen::Index i = 0; i < n2; ++i) {
      const Eigen::Index src = i - offset;
      if (src >= 0 && src < n2) ga.row(src) += g.row(i);
    }
    t.accumulate(a, ga);
  });
}

Var softmax_rows(Var a, bool causal, Eigen::Index causal_offset) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index limit = causal ? std::min<Eigen::Index>(x.cols(), i + causal_offset + 1) : x.cols();
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < limit; ++j) mx = std::max(mx, x(i, j));
    double z = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      y(i, j) = j < limit ? std::exp(x(i, j) - mx) : 0.0;
      z += y(i, j);
    }
    y.row(i) /= z;
  }
  return tape_of(a).record(y, any_grad(a), [a, y](Tape& t, const Matrix& g) {
    Matrix ga = y.cwiseProduct(g);
    const Eigen::VectorXd dots = ga.rowwise().sum();
    ga -= (y.array().colwise() * dots.array()).matrix();
    t.accumulate(a, ga);
  });
}

Var maxpool_rows(Var a) {
  const Matrix& x = a.value();
  const Eigen::Index n = x.rows();
  const Eigen::Index out_rows = (n + 1) / 2;
  Matrix y(out_rows, x.cols());
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(out_rows * x.cols()));
  for (Eigen::Index o = 0; o < out_rows; ++o) {
    const Eigen::Index center = 2 * o;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::Index best = center;
      for (Eigen::Index r = center - 1; r <= center + 1; ++r) {
        if (r < 0 || r >= n) continue;
        if (x(r, c) > x(best, c)) best = r;
      }
      y(o, c) = x(best, c);
      argmax[static_cast<std::size_t>(o * x.cols() + c)] = best;
    }
  }
  return tape_of(a).record(std::move(y), any_grad(a), [a, argmax](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(a);
    Matrix ga = Matrix::Zero(av.rows(), av.cols());
    for (Eigen::Index o = 0; o < g.rows(); ++o) {
      for (Eigen::Index c = 0; c < g.cols(); ++c) {
        ga(argmax[static_cast<std::size_t>(o * g.cols() + c)], c) += g(o, c);
      }
    }
    t.accumulate(a, ga);
  });
}

Var normalize_rows(Var a, double eps) {
  const Matrix& x = a.value();
  const double n = static_cast<double>(x.cols());
  Matrix xhat(x.rows(), x.cols());
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().sum() / n;
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mu) * inv_std(i);
  }
  return tape_of(a).record(xhat, any_grad(a), [a, xhat, inv_std, n](Tape& t, const Matrix& g) {
    Matrix ga(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      const double gm = g.row(i).mean();
      const double gx = g.row(i).dot(xhat.row(i)) / n;
      ga.row(i) = inv_std(i) * (g.row(i).array() - gm - xhat.row(i).array() * gx);
    }
    t.accumulate(a, ga);
  });
}

Var mse(Var prediction, const Matrix& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    throw std::invalid_argument("mse: shape mismatch");
  }
  Var diff = sub(prediction, prediction.tape->constant(target));
  return mean(square(diff));
}

}  // namespace edgeslice::nn
