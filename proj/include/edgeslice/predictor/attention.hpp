#pragma once

#include "edgeslice/nn/layers.hpp"
#include "edgeslice/nn/tape.hpp"

#include <random>
#include <vector>

namespace edgeslice::predictor {

using nn::Matrix;
using nn::Tape;
using nn::Var;

/// Number of active queries for a sequence of length L: ceil(factor * ln L), clamped to [1, L].
std::size_t active_query_count(std::size_t length, double factor);

/// Queries that receive full attention: the `u` largest sparsity measurements.
std::vector<Eigen::Index> select_active_queries(const Matrix& queries, const Matrix& keys, std::size_t u);

/// Scaled dot-product attention softmax(Q K^T / sqrt(d)) V, optionally causal.
Var dense_attention(Var queries, Var keys, Var values, bool causal = false);

/// Selected queries get dense attention; the remaining rows get the mean value row.
Var probsparse_attention(Var queries, Var keys, Var values, std::size_t u);

enum class AttentionMode { kProbSparse, kCausal, kDense };

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::string name, int model_dim, int heads, std::mt19937_64& rng);

  Var forward(Tape& tape, Var query_source, Var key_source, AttentionMode mode, double top_u_factor);
  std::vector<nn::Parameter*> parameters();

 private:
  int heads_ = 1;
  int model_dim_ = 0;
  nn::Linear wq_, wk_, wv_, wo_;
};

}  // namespace edgeslice::predictor
