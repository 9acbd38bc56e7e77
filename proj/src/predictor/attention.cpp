#include "edgeslice/predictor/attention.hpp"

#include "edgeslice/kernels/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace edgeslice::predictor {

std::size_t active_query_count(std::size_t length, double factor) {
  if (length == 0) throw std::invalid_argument("active_query_count: empty sequence");
  const double u = std::ceil(factor * std::log(static_cast<double>(length)));
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1.0, u)), 1, length);
}

std::vector<Eigen::Index> select_active_queries(const Matrix& queries, const Matrix& keys, std::size_t u) {
  const auto measure = kernels::parallel::sparsity_measurement(queries, keys);
  return kernels::top_u(measure, u);
}

Var dense_attention(Var queries, Var keys, Var values, bool causal) {
  if (queries.cols() != keys.cols() || keys.rows() != values.rows()) {
    throw std::invalid_argument("dense_attention: shape mismatch");
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  Var scores = nn::scale(nn::matmul_nt(queries, keys), inv_sqrt_d);
  return nn::matmul(nn::softmax_rows(scores, causal), values);
}

Var probsparse_attention(Var queries, Var keys, Var values, std::size_t u) {
  if (u == 0) throw std::invalid_argument("probsparse_attention: u must be positive");
  if (u > static_cast<std::size_t>(queries.rows())) {
    throw std::invalid_argument("probsparse_attention: u exceeds the number of queries");
  }
  const auto active = select_active_queries(queries.value(), keys.value(), u);
  Var fallback = nn::broadcast_rows(nn::mean_rows(values), queries.rows());
  Var attended = dense_attention(nn::gather_rows(queries, active), keys, values);
  return nn::merge_rows(fallback, attended, active);
}

MultiHeadAttention::MultiHeadAttention(std::string name, int model_dim, int heads, std::mt19937_64& rng)
    : heads_(heads), model_dim_(model_dim) {
  if (heads <= 0 || model_dim % heads != 0) {
    throw std::invalid_argument("MultiHeadAttention: model_dim must be divisible by heads");
  }
  wq_ = nn::Linear(name + ".q", model_dim, model_dim, rng);
  wk_ = nn::Linear(name + ".k", model_dim, model_dim, rng);
  wv_ = nn::Linear(name + ".v", model_dim, model_dim, rng);
  wo_ = nn::Linear(name + ".o", model_dim, model_dim, rng);
}

Var MultiHeadAttention::forward(Tape& tape, Var query_source, Var key_source, AttentionMode mode,
                                double top_u_factor) {
  Var q = wq_.forward(tape, query_source);
  Var k = wk_.forward(tape, key_source);
  Var v = wv_.forward(tape, key_source);
  const int head_dim = model_dim_ / heads_;
  std::vector<Var> outputs;
  outputs.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    Var qh = nn::slice_cols(q, h * head_dim, head_dim);
    Var kh = nn::slice_cols(k, h * head_dim, head_dim);
    Var vh = nn::slice_cols(v, h * head_dim, head_dim);
    switch (mode) {
      case AttentionMode::kProbSparse: {
        const auto u = active_query_count(static_cast<std::size_t>(qh.rows()), top_u_factor);
        outputs.push_back(probsparse_attention(qh, kh, vh, u));
        break;
      }
      case AttentionMode::kCausal:
        outputs.push_back(dense_attention(qh, kh, vh, true));
        break;
      case AttentionMode::kDense:
        outputs.push_back(dense_attention(qh, kh, vh, false));
        break;
    }
  }
  return wo_.forward(tape, heads_ == 1 ? outputs.front() : nn::concat_cols(outputs));
}

std::vector<nn::Parameter*> MultiHeadAttention::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto* l : {&wq_, &wk_, &wv_, &wo_}) {
    for (auto* p : l->parameters()) out.push_back(p);
  }
  return out;
}

}  // namespace edgeslice::predictor
