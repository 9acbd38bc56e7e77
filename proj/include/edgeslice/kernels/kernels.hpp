#pragma once

// Data-parallel inner loops. Every kernel has a serial reference in
// `serial::` and an OpenMP version in `parallel::`; the two produce
// bit-identical results because each output element is computed by exactly
// one iteration with the same operation order.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace edgeslice::kernels {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Categorical distribution over tiers together with the cost of each tier.
struct TierLottery {
  std::vector<double> weights;
  std::vector<double> costs;
};

/// Counter-based uniform in [0, 1): a pure function of (seed, stream, index).
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Inverse-CDF draw of one tier given a uniform.
std::size_t draw_tier(std::span<const double> weights, double u);

namespace serial {

/// Per-query sparsity measurement: max_j(q_i . k_j) / sqrt(d) - mean_j(q_i . k_j) / sqrt(d).
std::vector<double> sparsity_measurement(const RowMatrix& queries, const RowMatrix& keys);

/// Total cost of every trial when each lottery is drawn independently.
std::vector<double> rounding_trial_costs(std::span<const TierLottery> lotteries, std::size_t trials,
                                         std::uint64_t seed);

}  // namespace serial

namespace parallel {

std::vector<double> sparsity_measurement(const RowMatrix& queries, const RowMatrix& keys);
std::vector<double> rounding_trial_costs(std::span<const TierLottery> lotteries, std::size_t trials,
                                         std::uint64_t seed);

}  // namespace parallel

/// Indices of the `u` largest entries (ties broken toward the lower index), ascending.
std::vector<Eigen::Index> top_u(std::span<const double> measurement, std::size_t u);

}  // namespace edgeslice::kernels
