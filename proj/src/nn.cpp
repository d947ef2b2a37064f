// SPDX-License-Identifier: Apache-2.0

#include "datprl/nn.hpp"

#include <cmath>

namespace datprl {

Tensor normal_tensor(Shape shape, double stddev, Rng &rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto &x : v) x = rng.normal(0.0, stddev);
  return Tensor(std::move(shape), std::move(v), true);
}

Conv2d Conv2d::create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                      Rng &rng, Init init) {
  Conv2d c;
  const double fan_in = static_cast<double>(in * kernel * kernel);
  c.weight = init == Init::zero ? Tensor::zeros({out, in, kernel, kernel}, true)
                                : normal_tensor({out, in, kernel, kernel}, std::sqrt(2.0 / fan_in), rng);
  c.bias = Tensor::zeros({out}, true);
  c.spec = {stride, kernel / 2};
  return c;
}

void Conv2d::collect(const std::string &prefix, std::vector<NamedTensor> &out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

Linear Linear::create(std::size_t in, std::size_t out, Rng &rng, Init init) {
  Linear l;
  l.weight = init == Init::zero
                 ? Tensor::zeros({in, out}, true)
                 : normal_tensor({in, out}, std::sqrt(2.0 / static_cast<double>(in)), rng);
  l.bias = Tensor::zeros({out}, true);
  return l;
}

void Linear::collect(const std::string &prefix, std::vector<NamedTensor> &out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

std::size_t count_scalars(const std::vector<NamedTensor> &params) {
  std::size_t n = 0;
  for (const auto &[name, t] : params) n += t.numel();
  return n;
}

} // namespace datprl
