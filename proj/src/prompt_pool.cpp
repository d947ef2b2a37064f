// SPDX-License-Identifier: Apache-2.0

#include "datprl/prompt_pool.hpp"

#include <algorithm>
#include <numeric>

namespace datprl {

namespace {

constexpr double kPromptInitStd = 0.02;

Tensor activate(const Tensor &x, Activation a) {
  return a == Activation::silu ? silu(x) : x;
}

} // namespace

std::string_view to_string(PoolKind kind) {
  return kind == PoolKind::task ? "task" : "domain";
}

void PromptPool::collect(const std::string &prefix, std::vector<NamedTensor> &out) const {
  out.emplace_back(prefix + ".keys", keys);
  out.emplace_back(prefix + ".values", values);
}

PromptPool init_pool(PoolKind kind, std::size_t prompts, std::size_t tokens, std::size_t dim,
                     double temperature, Rng &rng) {
  if (prompts == 0 || tokens == 0 || dim == 0)
    throw std::invalid_argument("init_pool: N, T and d must be at least 1");
  if (!(temperature > 0.0)) throw std::invalid_argument("init_pool: temperature must be positive");
  PromptPool pool;
  pool.kind = kind;
  pool.keys = normal_tensor({prompts, dim}, kPromptInitStd, rng);
  pool.values = normal_tensor({prompts, tokens, dim}, kPromptInitStd, rng);
  pool.temperature = temperature;
  return pool;
}

QueryProjector QueryProjector::create(std::size_t channels, std::size_t dim, Rng &rng) {
  QueryProjector p;
  p.conv1 = Conv2d::create(channels, channels, 3, 1, rng);
  p.conv2 = Conv2d::create(channels, channels, 3, 1, rng);
  p.fc1 = Linear::create(channels, dim, rng);
  p.fc2 = Linear::create(dim, dim, rng);
  return p;
}

void QueryProjector::collect(const std::string &prefix, std::vector<NamedTensor> &out) const {
  conv1.collect(prefix + ".conv1", out);
  conv2.collect(prefix + ".conv2", out);
  fc1.collect(prefix + ".fc1", out);
  fc2.collect(prefix + ".fc2", out);
}

Tensor compute_query(const QueryProjector &projector, const Tensor &features) {
  if (features.rank() != 3 || features.dim(0) != projector.in_channels())
    throw ShapeError("compute_query: projector expects " +
                     std::to_string(projector.in_channels()) + " channels, got features " +
                     shape_str(features.shape()));
  auto h = activate(projector.conv1(features), projector.activation);
  h = projector.conv2(h);
  auto pooled = global_avg_pool(h);
  auto z = activate(projector.fc1(pooled), projector.activation);
  return projector.fc2(z);
}

PromptSelection select_top_k(const PromptPool &pool, const Tensor &query, std::size_t k) {
  const std::size_t n = pool.size();
  if (k < 1 || k > n)
    throw std::out_of_range("select_top_k: k=" + std::to_string(k) + " outside [1, " +
                            std::to_string(n) + "]");
  if (query.numel() != pool.dim())
    throw ShapeError("select_top_k: query " + shape_str(query.shape()) +
                     " does not match key dimension " + std::to_string(pool.dim()));
  PromptSelection sel;
  sel.pool_size = n;
  sel.all_similarities = cosine_rows(pool.keys, query);
  auto sims = sel.all_similarities.data();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  sel.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  sel.similarities = index_select(sel.all_similarities, sel.indices);
  sel.weights = softmax(sel.similarities, pool.temperature);
  sel.full_probs = softmax(sel.all_similarities, 1.0);
  return sel;
}

Tensor compose(const PromptSelection &selection, const PromptPool &pool) {
  const std::size_t n = pool.size();
  if (selection.pool_size != n)
    throw std::out_of_range("compose: selection was made against a pool of " +
                            std::to_string(selection.pool_size) + " prompts, pool has " +
                            std::to_string(n));
  for (auto i : selection.indices)
    if (i >= n)
      throw std::out_of_range("compose: stale selection index " + std::to_string(i) +
                              " for pool of " + std::to_string(n));
  const std::size_t k = selection.indices.size();
  const std::size_t t = pool.tokens(), d = pool.dim();
  auto chosen = reshape(index_select(pool.values, selection.indices), {k, t * d});
  auto blended = matmul(reshape(selection.weights, {1, k}), chosen);
  return reshape(blended, {t, d});
}

} // namespace datprl
