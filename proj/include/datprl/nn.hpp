// SPDX-License-Identifier: Apache-2.0
//
// Small parameterised layers shared by the projector, fusion and backbone.

#ifndef DATPRL_NN_HPP
#define DATPRL_NN_HPP

#include <string>
#include <vector>

#include "datprl/gradcheck.hpp"
#include "datprl/ops.hpp"
#include "datprl/rng.hpp"

namespace datprl {

/// Trainable leaf with i.i.d. normal(0, stddev) entries.
Tensor normal_tensor(Shape shape, double stddev, Rng &rng);

enum class Init { he, zero };

struct Conv2d {
  Tensor weight; // [out, in, k, k]
  Tensor bias;   // [out]
  Conv2dSpec spec;

  static Conv2d create(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                       Rng &rng, Init init = Init::he);
  Tensor operator()(const Tensor &x) const { return conv2d(x, weight, &bias, spec); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t out_channels() const { return weight.dim(0); }
  void collect(const std::string &prefix, std::vector<NamedTensor> &out) const;
};

struct Linear {
  Tensor weight; // [in, out]
  Tensor bias;   // [out]

  static Linear create(std::size_t in, std::size_t out, Rng &rng, Init init = Init::he);
  Tensor operator()(const Tensor &x) const { return linear(x, weight, &bias); }
  void collect(const std::string &prefix, std::vector<NamedTensor> &out) const;
};

std::size_t count_scalars(const std::vector<NamedTensor> &params);

} // namespace datprl

#endif // DATPRL_NN_HPP
