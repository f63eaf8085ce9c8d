#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "kpiscan/nn/network.hpp"

namespace kpiscan::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;  // flat index over all parameters
  std::size_t checked = 0;
};

/// Compares the analytic gradient against central differences at n_params
/// parameter coordinates sampled uniformly (with replacement, seeded).
/// Relative error is |a - n| / max(|a|, |n|, 1e-8). The loss is evaluated in
/// train mode with the network's current dropout seed held fixed.
///
/// `analytic`, when given, replaces the network's own gradient (used to
/// confirm that a corrupted gradient is caught).
GradCheckResult finite_diff_check(Network& net, const Tensor& batch, std::span<const int> labels,
                                  double eps, std::size_t n_params, std::uint64_t seed,
                                  const GradientSet* analytic = nullptr);

}  // namespace kpiscan::nn
