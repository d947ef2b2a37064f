// SPDX-License-Identifier: Apache-2.0
//
// Bias-corrected Adam and the cosine-annealed learning rate.

#ifndef DATPRL_OPTIM_HPP
#define DATPRL_OPTIM_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "datprl/gradcheck.hpp"

namespace datprl {

struct AdamConfig {
  double lr = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double lr_min = 1e-6;
  double grad_clip = 0.0; // global L2 norm; 0 disables

  void validate() const;
};

/// One update at 1-based step t:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
               std::span<double> v, double lr, double beta1, double beta2, double eps,
               std::uint64_t step);

/// lr_min + (lr_init - lr_min) (1 + cos(pi step / total)) / 2, for 0 <= step <= total.
double lr_schedule(std::uint64_t step, std::uint64_t total_steps, double lr_init,
                   double lr_min = 1e-6);

class Adam {
public:
  Adam(std::vector<NamedTensor> params, AdamConfig config);

  /// Applies one update using the parameters' accumulated gradients.
  /// Parameters without a gradient are treated as having a zero gradient.
  void step(double lr);

  std::uint64_t steps_taken() const { return step_; }
  void set_steps_taken(std::uint64_t s) { step_ = s; }
  const AdamConfig &config() const { return config_; }
  const std::vector<NamedTensor> &params() const { return params_; }
  std::vector<std::vector<double>> &first_moments() { return m_; }
  std::vector<std::vector<double>> &second_moments() { return v_; }
  const std::vector<std::vector<double>> &first_moments() const { return m_; }
  const std::vector<std::vector<double>> &second_moments() const { return v_; }

  /// Global L2 norm of all parameter gradients.
  double grad_norm() const;

private:
  std::vector<NamedTensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t step_ = 0;
};

} // namespace datprl

#endif // DATPRL_OPTIM_HPP
