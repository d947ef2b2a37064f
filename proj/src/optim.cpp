// SPDX-License-Identifier: Apache-2.0

#include "datprl/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace datprl {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("optimizer.lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("optimizer betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("optimizer.eps must be positive");
  if (lr_min < 0.0 || lr_min > lr) throw std::invalid_argument("optimizer.lr_min must lie in [0, lr]");
  if (grad_clip < 0.0) throw std::invalid_argument("optimizer.grad_clip must be non-negative");
}

void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m,
               std::span<double> v, double lr, double beta1, double beta2, double eps,
               std::uint64_t step) {
  if (step < 1) throw std::invalid_argument("adam_step: step must be at least 1");
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size())
    throw std::invalid_argument("adam_step: buffer sizes differ");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

double lr_schedule(std::uint64_t step, std::uint64_t total_steps, double lr_init, double lr_min) {
  if (total_steps == 0 || step > total_steps)
    throw std::out_of_range("lr_schedule: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(total_steps) + "]");
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

Adam::Adam(std::vector<NamedTensor> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  for (const auto &[name, t] : params_) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

double Adam::grad_norm() const {
  double s = 0.0;
  for (const auto &[name, t] : params_)
    for (double g : t.grad()) s += g * g;
  return std::sqrt(s);
}

void Adam::step(double lr) {
  ++step_;
  double scale = 1.0;
  if (config_.grad_clip > 0.0) {
    const double norm = grad_norm();
    if (norm > config_.grad_clip) scale = config_.grad_clip / norm;
  }
  std::vector<double> g;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto &t = params_[p].second;
    g.assign(t.numel(), 0.0);
    auto grad = t.grad();
    for (std::size_t i = 0; i < grad.size(); ++i) g[i] = grad[i] * scale;
    adam_step(t.mutable_data(), g, m_[p], v_[p], lr, config_.beta1, config_.beta2, config_.eps, step_);
  }
}

} // namespace datprl
