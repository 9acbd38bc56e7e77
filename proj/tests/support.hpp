#pragma once

// Fixtures shared by the unit tests and the acceptance binary.

#include "edgeslice/core/model.hpp"
#include "edgeslice/nn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace edgeslice::testing {

/// Catalog with tiers 1..n and cost `unit_cost * k` for tier k, for both resources.
inline core::SliceCatalog linear_catalog(int region_id, int bandwidth_tiers, double bandwidth_unit_cost, int vm_tiers,
                                         double vm_unit_cost) {
  core::SliceCatalog c;
  c.region_id = region_id;
  for (int k = 1; k <= bandwidth_tiers; ++k) {
    c.bandwidth_tiers_hz.push_back(k * 1e6);
    c.bandwidth_costs.push_back(bandwidth_unit_cost * k);
  }
  for (int k = 1; k <= vm_tiers; ++k) {
    c.vm_tiers.push_back(k);
    c.vm_costs.push_back(vm_unit_cost * k);
  }
  c.vm_freq_hz = 2e9;
  return c;
}

inline core::SliceCatalog r1_catalog() { return linear_catalog(1, 20, 3.0, 16, 2.0); }
inline core::SliceCatalog r2_catalog() { return linear_catalog(2, 25, 2.0, 12, 4.0); }
inline core::SliceCatalog r3_catalog() { return linear_catalog(3, 30, 1.0, 8, 6.0); }

inline core::RadioParams table_radio() { return core::RadioParams::from_decibels(100.0, -60.0, -110.0, 2.0); }

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Largest relative error between the analytic gradient of `loss` and central
/// differences over every entry of every parameter. `loss` must zero gradients,
/// run a fresh tape, and call backward when `backward` is true.
inline double gradient_check(const std::vector<nn::Parameter*>& params,
                             const std::function<double(bool backward)>& loss, double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  loss(true);
  std::vector<nn::Matrix> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& v = params[k]->value;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double saved = v.data()[i];
      v.data()[i] = saved + h;
      const double up = loss(false);
      v.data()[i] = saved - h;
      const double down = loss(false);
      v.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k].data()[i];
      // Absolute floor keeps entries whose true gradient is ~0 from dominating.
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace edgeslice::testing
