// SPDX-License-Identifier: Apache-2.0

#include "datprl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "datprl/rng.hpp"

namespace datprl {

Tensor finite_diff_grad(const std::function<double(const Tensor &)> &f, const Tensor &x,
                        double eps) {
  NoGradGuard guard;
  Tensor probe(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
  std::vector<double> out(x.numel());
  auto v = probe.mutable_data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + eps;
    const double plus = f(probe);
    v[i] = saved - eps;
    const double minus = f(probe);
    v[i] = saved;
    out[i] = (plus - minus) / (2.0 * eps);
  }
  return Tensor(x.shape(), std::move(out));
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

GradCheckResult check_gradients(const std::function<Tensor()> &loss_fn,
                                const std::vector<NamedTensor> &leaves, double eps,
                                std::size_t max_coords, std::uint64_t seed) {
  for (auto [name, leaf] : leaves) leaf.zero_grad();
  {
    Tensor loss = loss_fn();
    backward(loss);
  }
  Rng rng(seed);
  GradCheckResult result;
  for (auto [name, leaf] : leaves) {
    std::vector<std::size_t> coords(leaf.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > max_coords) {
      for (std::size_t i = 0; i < max_coords; ++i)
        std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
      coords.resize(max_coords);
    }
    std::vector<double> analytic, numeric;
    auto grad = leaf.grad();
    auto values = leaf.mutable_data();
    NoGradGuard guard;
    for (auto i : coords) {
      analytic.push_back(grad.empty() ? 0.0 : grad[i]);
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = loss_fn().item();
      values[i] = saved - eps;
      const double minus = loss_fn().item();
      values[i] = saved;
      numeric.push_back((plus - minus) / (2.0 * eps));
    }
    LeafCheck check;
    check.name = name;
    check.coordinates = coords.size();
    check.rel_error = relative_error(analytic, numeric);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      check.max_abs_error = std::max(check.max_abs_error, std::abs(analytic[i] - numeric[i]));
      check.analytic_norm += analytic[i] * analytic[i];
    }
    check.analytic_norm = std::sqrt(check.analytic_norm);
    result.max_rel_error = std::max(result.max_rel_error, check.rel_error);
    result.coordinates += check.coordinates;
    result.leaves.push_back(std::move(check));
  }
  return result;
}

} // namespace datprl
