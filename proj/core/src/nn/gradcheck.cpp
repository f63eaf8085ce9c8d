#include "kpiscan/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "kpiscan/error.hpp"
#include "kpiscan/rng.hpp"

namespace kpiscan::nn {

GradCheckResult finite_diff_check(Network& net, const Tensor& batch, std::span<const int> labels,
                                  double eps, std::size_t n_params, std::uint64_t seed,
                                  const GradientSet* analytic) {
  GradCheckResult result;
  if (n_params == 0) return result;

  GradientSet own;
  if (!analytic) {
    own = net.loss_and_gradients(batch, labels, Mode::train).gradients;
    analytic = &own;
  }
  auto params = net.parameters();
  if (params.size() != analytic->size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient set does not match the network");
  }
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : params) {
    offsets.push_back(total);
    total += p.tensor->size();
  }
  if (total == 0) return result;

  Rng rng(seed);
  for (std::size_t s = 0; s < n_params; ++s) {
    const std::size_t flat = rng.below(total);
    const std::size_t which =
        static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) -
                                 offsets.begin()) - 1;
    const std::size_t local = flat - offsets[which];
    double& value = (*params[which].tensor)[local];
    const double original = value;

    value = original + eps;
    const double up = net.loss(batch, labels, Mode::train);
    value = original - eps;
    const double down = net.loss(batch, labels, Mode::train);
    value = original;

    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic->grads[which][local];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = flat;
    }
    ++result.checked;
  }
  return result;
}

}  // namespace kpiscan::nn
