// SPDX-License-Identifier: Apache-2.0
//
// Central finite differences, used as the independent oracle for every
// backward rule.

#ifndef DATPRL_GRADCHECK_HPP
#define DATPRL_GRADCHECK_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "datprl/tensor.hpp"

namespace datprl {

/// Per-element (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). `x` is not modified.
Tensor finite_diff_grad(const std::function<double(const Tensor &)> &f, const Tensor &x,
                        double eps = 1e-6);

/// ||a - b|| / max(||a||, ||b||, floor).
double relative_error(std::span<const double> a, std::span<const double> b,
                      double floor = 1e-8);

struct LeafCheck {
  std::string name;
  std::size_t coordinates = 0;
  double rel_error = 0.0;
  double max_abs_error = 0.0;
  double analytic_norm = 0.0;
};

struct GradCheckResult {
  std::vector<LeafCheck> leaves;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

using NamedTensor = std::pair<std::string, Tensor>;

/// Runs backward on `loss_fn()` and compares the gradient of every listed
/// leaf against central differences, perturbing the leaves in place. At most
/// `max_coords` coordinates per leaf are probed, sampled with `seed`.
/// Existing leaf gradients are cleared first.
GradCheckResult check_gradients(const std::function<Tensor()> &loss_fn,
                                const std::vector<NamedTensor> &leaves, double eps = 1e-6,
                                std::size_t max_coords = 24, std::uint64_t seed = 0);

} // namespace datprl

#endif // DATPRL_GRADCHECK_HPP
