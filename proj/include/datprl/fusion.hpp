// SPDX-License-Identifier: Apache-2.0
//
// Cross-attention fusion of the task and domain representations, and adaptive
// gated injection of the fused representation into backbone features.

#ifndef DATPRL_FUSION_HPP
#define DATPRL_FUSION_HPP

#include <vector>

#include "datprl/nn.hpp"

namespace datprl {

/// Single-head scaled dot-product cross-attention without biases.
/// The output projection starts at zero so a freshly built block is inert.
struct CrossAttention {
  Tensor w_q, w_k, w_v, w_o; // [d, d]

  static CrossAttention create(std::size_t dim, Rng &rng, bool zero_output = true);
  std::size_t dim() const { return w_q.dim(0); }
  void collect(const std::string &prefix, std::vector<NamedTensor> &out) const;
};

/// Row-stochastic weights softmax(Q K^T / sqrt(d)), shape [m, n].
Tensor attention_weights(const CrossAttention &attn, const Tensor &queries, const Tensor &context);

/// softmax((queries W_q)(context W_k)^T / sqrt(d)) (context W_v) W_o, shape [m, d].
Tensor attend(const CrossAttention &attn, const Tensor &queries, const Tensor &context);

/// PR_dt = pr_task + attend(pr_task, pr_domain); task tokens query the domain tokens.
Tensor fuse_representations(const CrossAttention &attn, const Tensor &pr_task,
                            const Tensor &pr_domain);

/// One unconstrained scalar per injection layer; alpha_l = sigmoid(raw_l).
struct GateSet {
  Tensor raw; // [L]

  static GateSet create(std::size_t layers, double init = 0.0);
  std::size_t size() const { return raw.numel(); }
  Tensor alpha(std::size_t layer) const;
  std::vector<double> alphas() const;
};

/// Per-site injection parameters: attention at the site's channel width and
/// an affine adapter from the prompt dimension to that width.
struct InjectionSite {
  CrossAttention attn;
  Linear adapter; // [d -> c]

  static InjectionSite create(std::size_t prompt_dim, std::size_t channels, Rng &rng);
  void collect(const std::string &prefix, std::vector<NamedTensor> &out) const;
};

/// feature [c, h, w] becomes h*w tokens; queries alpha*tokens attend over
/// (1 - alpha)*adapter(pr_dt). The result is reshaped back to [c, h, w] and
/// added to `feature` when `residual` is set.
Tensor gated_inject(const CrossAttention &attn, const Tensor &feature, const Tensor &pr_dt,
                    const Tensor &alpha, const Linear &adapter, bool residual = true);

} // namespace datprl

#endif // DATPRL_FUSION_HPP
