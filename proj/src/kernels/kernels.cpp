#include "edgeslice/kernels/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace edgeslice::kernels {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double query_measure(const RowMatrix& queries, const RowMatrix& keys, Eigen::Index i, double inv_sqrt_d) {
  double mx = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (Eigen::Index j = 0; j < keys.rows(); ++j) {
    const double s = queries.row(i).dot(keys.row(j)) * inv_sqrt_d;
    mx = std::max(mx, s);
    total += s;
  }
  return mx - total / static_cast<double>(keys.rows());
}

double trial_cost(std::span<const TierLottery> lotteries, std::uint64_t seed, std::size_t trial) {
  double cost = 0.0;
  for (std::size_t l = 0; l < lotteries.size(); ++l) {
    const double u = counter_uniform(seed, l, trial);
    cost += lotteries[l].costs[draw_tier(lotteries[l].weights, u)];
  }
  return cost;
}

void check_shapes(const RowMatrix& queries, const RowMatrix& keys) {
  if (queries.cols() != keys.cols() || keys.rows() == 0) {
    throw std::invalid_argument("sparsity_measurement: shape mismatch");
  }
}

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t h = splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

std::size_t draw_tier(std::span<const double> weights, double u) {
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    last_positive = k;
    acc += weights[k];
    if (u < acc) return k;
  }
  // u landed in the rounding slack above the cumulative sum.
  return last_positive;
}

namespace serial {

std::vector<double> sparsity_measurement(const RowMatrix& queries, const RowMatrix& keys) {
  check_shapes(queries, keys);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  std::vector<double> out(static_cast<std::size_t>(queries.rows()));
  for (Eigen::Index i = 0; i < queries.rows(); ++i) out[i] = query_measure(queries, keys, i, inv_sqrt_d);
  return out;
}

std::vector<double> rounding_trial_costs(std::span<const TierLottery> lotteries, std::size_t trials,
                                         std::uint64_t seed) {
  std::vector<double> out(trials);
  for (std::size_t t = 0; t < trials; ++t) out[t] = trial_cost(lotteries, seed, t);
  return out;
}

}  // namespace serial

namespace parallel {

std::vector<double> sparsity_measurement(const RowMatrix& queries, const RowMatrix& keys) {
  check_shapes(queries, keys);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
  const Eigen::Index n = queries.rows();
  std::vector<double> out(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static) if (n >= 64)
  for (Eigen::Index i = 0; i < n; ++i) out[i] = query_measure(queries, keys, i, inv_sqrt_d);
  return out;
}

std::vector<double> rounding_trial_costs(std::span<const TierLottery> lotteries, std::size_t trials,
                                         std::uint64_t seed) {
  std::vector<double> out(trials);
  const auto n = static_cast<std::int64_t>(trials);
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < n; ++t) out[t] = trial_cost(lotteries, seed, static_cast<std::size_t>(t));
  return out;
}

}  // namespace parallel

std::vector<Eigen::Index> top_u(std::span<const double> measurement, std::size_t u) {
  if (u == 0 || u > measurement.size()) throw std::invalid_argument("top_u: u out of range");
  std::vector<Eigen::Index> order(measurement.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return measurement[a] > measurement[b]; });
  order.resize(u);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace edgeslice::kernels
