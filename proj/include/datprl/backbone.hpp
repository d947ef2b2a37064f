// SPDX-License-Identifier: Apache-2.0
//
// Small U-shaped restoration network with the prompt machinery attached.
//
//   lq -> stem (shallow feature, domain query hook)
//      -> encoder levels, stride-2 conv between levels
//      -> bottleneck output F_mid (task query hook)
//      -> PR_t, PR_d composed from the pools, fused into PR_dt
//      -> gated injection at the bottleneck and after every decoder level
//      -> decoder: nearest 2x upsample + conv, concat skip, 1x1 merge, blocks
//      -> head conv (zero init) predicting a residual: restored = lq + delta
//
// Residual blocks are x + silu(conv3x3(x)).

#ifndef DATPRL_BACKBONE_HPP
#define DATPRL_BACKBONE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "datprl/fusion.hpp"
#include "datprl/prompt_pool.hpp"

namespace datprl {

struct BackboneConfig {
  std::size_t levels = 3;
  std::vector<std::size_t> channels{16, 32, 64};
  std::size_t blocks = 1;
  std::size_t image_channels = 3;

  void validate() const;
  std::size_t size_divisor() const { return std::size_t{1} << (levels - 1); }
};

struct PoolConfig {
  bool enabled = true;
  std::size_t prompts = 8;
  std::size_t topk = 2;
  double temperature = 1.0;
};

struct PromptConfig {
  std::size_t dim = 64;
  std::size_t tokens = 2;
  PoolConfig task{true, 8, 2, 1.0};
  PoolConfig domain{true, 8, 3, 1.0};

  void validate() const;
  bool any_enabled() const { return task.enabled || domain.enabled; }
};

struct FusionConfig {
  bool residual = true;
  double gate_init = 0.0;
};

struct ModelConfig {
  BackboneConfig backbone;
  PromptConfig prompts;
  FusionConfig fusion;

  void validate() const;
  /// Number of gated injection sites (bottleneck + every decoder level).
  std::size_t injection_sites() const { return prompts.any_enabled() ? backbone.levels : 0; }
};

struct ForwardDiagnostics {
  std::optional<PromptSelection> task_selection;
  std::optional<PromptSelection> domain_selection;
  std::vector<double> gate_values;
  double pr_dt_norm = 0.0;
};

struct ForwardResult {
  Tensor restored;
  ForwardDiagnostics diag;
  std::optional<Tensor> task_query;
  std::optional<Tensor> domain_query;
  std::optional<Tensor> pr_task;
  std::optional<Tensor> pr_domain;
  std::optional<Tensor> pr_dt;
};

/// Copies share parameter storage (tensors are handles).
class RestorationModel {
public:
  static RestorationModel create(const ModelConfig &config, std::uint64_t seed);

  /// lq [3, h, w] with h, w divisible by 2^(levels-1).
  ForwardResult forward(const Tensor &lq) const;

  /// Every trainable tensor in a fixed order with stable dotted names.
  std::vector<NamedTensor> parameters() const;
  std::size_t count_parameters() const { return count_scalars(parameters()); }

  const ModelConfig &config() const { return config_; }

  const std::optional<PromptPool> &task_pool() const { return task_pool_; }
  const std::optional<PromptPool> &domain_pool() const { return domain_pool_; }
  const GateSet &gates() const { return gates_; }

private:
  ModelConfig config_;
  Conv2d stem_;
  std::vector<std::vector<Conv2d>> enc_blocks_;
  std::vector<Conv2d> down_;
  std::vector<Conv2d> up_;    // indexed by target level
  std::vector<Conv2d> merge_; // indexed by level
  std::vector<std::vector<Conv2d>> dec_blocks_;
  Conv2d head_;

  std::optional<PromptPool> task_pool_;
  std::optional<PromptPool> domain_pool_;
  std::optional<QueryProjector> task_projector_;
  std::optional<QueryProjector> domain_projector_;
  std::optional<CrossAttention> prompt_fusion_;
  GateSet gates_;
  std::vector<InjectionSite> sites_; // site 0 = bottleneck, then decoder levels deepest first
};

/// Closed-form trainable-scalar count. With c_i the level widths, C the image
/// channels, B blocks per level, L levels, d the prompt dim, T tokens:
///
///   conv(i, o, k)   = o*i*k*k + o
///   backbone        = conv(C, c_0, 3) + conv(c_0, C, 3)
///                   + B * sum_i conv(c_i, c_i, 3)                 (encoder)
///                   + sum_{i<L-1} conv(c_i, c_{i+1}, 3)          (down)
///                   + sum_{i<L-1} [conv(c_{i+1}, c_i, 3) + conv(2c_i, c_i, 1)
///                                  + B * conv(c_i, c_i, 3)]       (decoder)
///   pool(N)         = N*d + N*T*d
///   projector(c)    = 2*conv(c, c, 3) + (c*d + d) + (d*d + d)
///   task pool adds pool(N_t) + projector(c_{L-1}); domain pool adds
///   pool(N_d) + projector(c_0); both pools add the fusion attention 4*d*d;
///   any pool adds, per site s with width w_s, 4*w_s^2 + d*w_s + w_s + 1.
std::size_t parameter_count_formula(const ModelConfig &config);

} // namespace datprl

#endif // DATPRL_BACKBONE_HPP
