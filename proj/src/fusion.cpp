// SPDX-License-Identifier: Apache-2.0

#include "datprl/fusion.hpp"

#include <cmath>

namespace datprl {

CrossAttention CrossAttention::create(std::size_t dim, Rng &rng, bool zero_output) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  CrossAttention a;
  a.w_q = normal_tensor({dim, dim}, sd, rng);
  a.w_k = normal_tensor({dim, dim}, sd, rng);
  a.w_v = normal_tensor({dim, dim}, sd, rng);
  a.w_o = zero_output ? Tensor::zeros({dim, dim}, true) : normal_tensor({dim, dim}, sd, rng);
  return a;
}

void CrossAttention::collect(const std::string &prefix, std::vector<NamedTensor> &out) const {
  out.emplace_back(prefix + ".w_q", w_q);
  out.emplace_back(prefix + ".w_k", w_k);
  out.emplace_back(prefix + ".w_v", w_v);
  out.emplace_back(prefix + ".w_o", w_o);
}

namespace {

void check_tokens(const CrossAttention &attn, const Tensor &t, const char *what) {
  if (t.rank() != 2 || t.dim(1) != attn.dim())
    throw ShapeError(std::string("attend: ") + what + " " + shape_str(t.shape()) +
                     " does not match attention width " + std::to_string(attn.dim()));
}

} // namespace

Tensor attention_weights(const CrossAttention &attn, const Tensor &queries, const Tensor &context) {
  check_tokens(attn, queries, "queries");
  check_tokens(attn, context, "context");
  auto q = matmul(queries, attn.w_q);
  auto k = matmul(context, attn.w_k);
  auto logits = mul(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(attn.dim())));
  return softmax(logits, 1.0);
}

Tensor attend(const CrossAttention &attn, const Tensor &queries, const Tensor &context) {
  auto weights = attention_weights(attn, queries, context);
  auto v = matmul(context, attn.w_v);
  return matmul(matmul(weights, v), attn.w_o);
}

Tensor fuse_representations(const CrossAttention &attn, const Tensor &pr_task,
                            const Tensor &pr_domain) {
  if (pr_task.shape() != pr_domain.shape())
    throw ShapeError("fuse_representations: task " + shape_str(pr_task.shape()) +
                     " vs domain " + shape_str(pr_domain.shape()));
  return add(pr_task, attend(attn, pr_task, pr_domain));
}

GateSet GateSet::create(std::size_t layers, double init) {
  return GateSet{Tensor::full({layers}, init, true)};
}

Tensor GateSet::alpha(std::size_t layer) const { return sigmoid(index_select(raw, {layer})); }

std::vector<double> GateSet::alphas() const {
  std::vector<double> out;
  for (double r : raw.data()) out.push_back(r >= 0 ? 1.0 / (1.0 + std::exp(-r))
                                                   : std::exp(r) / (1.0 + std::exp(r)));
  return out;
}

InjectionSite InjectionSite::create(std::size_t prompt_dim, std::size_t channels, Rng &rng) {
  InjectionSite s;
  s.attn = CrossAttention::create(channels, rng);
  s.adapter = Linear::create(prompt_dim, channels, rng);
  return s;
}

void InjectionSite::collect(const std::string &prefix, std::vector<NamedTensor> &out) const {
  attn.collect(prefix + ".attn", out);
  adapter.collect(prefix + ".adapter", out);
}

Tensor gated_inject(const CrossAttention &attn, const Tensor &feature, const Tensor &pr_dt,
                    const Tensor &alpha, const Linear &adapter, bool residual) {
  if (feature.rank() != 3) throw ShapeError("gated_inject: feature must be [c,h,w], got " + shape_str(feature.shape()));
  const std::size_t c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
  if (adapter.weight.dim(1) != c || pr_dt.rank() != 2 || pr_dt.dim(1) != adapter.weight.dim(0))
    throw ShapeError("gated_inject: adapter " + shape_str(adapter.weight.shape()) +
                     " cannot map prompt " + shape_str(pr_dt.shape()) + " to " +
                     std::to_string(c) + " channels");
  if (alpha.numel() != 1) throw ShapeError("gated_inject: gate must be a scalar");
  auto tokens = transpose(reshape(feature, {c, h * w}));
  auto queries = mul(tokens, alpha);
  auto context = mul(adapter(pr_dt), add(neg(alpha), 1.0));
  auto fused = attend(attn, queries, context);
  auto out = reshape(transpose(fused), {c, h, w});
  return residual ? add(feature, out) : out;
}

} // namespace datprl
