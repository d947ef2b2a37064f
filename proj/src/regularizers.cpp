// SPDX-License-Identifier: Apache-2.0

#include "datprl/regularizers.hpp"

#include <cmath>
#include <numeric>

namespace datprl {

void RegularizerConfig::validate() const {
  if (!(tau_div >= -1.0 && tau_div <= 1.0))
    throw std::invalid_argument("tau_div must lie in [-1, 1]");
  if (!(tau_con > 0.0)) throw std::invalid_argument("tau_con must be positive");
}

Tensor diversity_loss(const Tensor &values, double tau_div, bool *warning) {
  if (values.rank() < 2) throw ShapeError("diversity_loss: values must be [N, ...], got " + shape_str(values.shape()));
  const std::size_t n = values.dim(0);
  if (warning) *warning = n < 2;
  if (n < 2) return Tensor::scalar(0.0);
  auto flat = l2_normalize_rows(reshape(values, {n, values.numel() / n}));
  auto sim = matmul(flat, transpose(flat));
  std::vector<double> mask(n * n, 1.0);
  for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 0.0;
  auto hinge = max_scalar(add(sim, -tau_div), 0.0);
  auto masked = mul(hinge, Tensor({n, n}, std::move(mask)));
  return mul(sum(masked), 1.0 / static_cast<double>(n * (n - 1)));
}

Tensor balance_loss(const Tensor &probs) {
  double total = 0.0;
  for (double p : probs.data()) {
    if (p < 0.0) throw std::invalid_argument("balance_loss: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("balance_loss: probabilities sum to " + std::to_string(total));
  // log N - H(p) = log N + sum p log p
  return add(sum(xlogx(probs)), std::log(static_cast<double>(probs.numel())));
}

Tensor contrastive_from_similarities(const Tensor &positive, const Tensor &negative,
                                     double tau_con) {
  if (!(tau_con > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be positive");
  const std::size_t p = positive.numel();
  Tensor total;
  for (std::size_t i = 0; i < p; ++i) {
    auto logits = mul(concat({index_select(positive, {i}), negative}, 0), 1.0 / tau_con);
    auto term = sub(logsumexp(logits), index_select(logits, {0}));
    total = i == 0 ? term : add(total, term);
  }
  return mul(total, 1.0 / static_cast<double>(p));
}

Tensor contrastive_loss(const Tensor &query, const Tensor &positive_keys,
                        const Tensor &negative_keys, double tau_con) {
  if (positive_keys.rank() != 2 || positive_keys.dim(0) == 0)
    throw std::invalid_argument("contrastive_loss: need at least one positive key");
  if (negative_keys.rank() != 2 || negative_keys.dim(0) == 0)
    throw std::invalid_argument("contrastive_loss: need at least one negative key");
  return contrastive_from_similarities(cosine_rows(positive_keys, query),
                                       cosine_rows(negative_keys, query), tau_con);
}

Tensor contrastive_loss(const PromptSelection &selection, double tau_con) {
  const std::size_t n = selection.pool_size;
  std::vector<bool> chosen(n, false);
  for (auto i : selection.indices) chosen.at(i) = true;
  std::vector<std::size_t> negatives;
  for (std::size_t i = 0; i < n; ++i)
    if (!chosen[i]) negatives.push_back(i);
  if (selection.indices.empty())
    throw std::invalid_argument("contrastive_loss: need at least one positive key");
  if (negatives.empty())
    throw std::invalid_argument("contrastive_loss: every key is selected, no negatives");
  return contrastive_from_similarities(
      index_select(selection.all_similarities, selection.indices),
      index_select(selection.all_similarities, negatives), tau_con);
}

Tensor pool_tokens(const Tensor &rep, AlignPooling pooling) {
  if (rep.rank() != 2) throw ShapeError("pool_tokens: expected [T, d], got " + shape_str(rep.shape()));
  if (pooling == AlignPooling::first_token) return reshape(index_select(rep, {0}), {rep.dim(1)});
  return mean(rep, 0);
}

Tensor alignment_loss(const std::vector<Tensor> &domain_reps,
                      const std::vector<Tensor> &text_features, AlignPooling pooling) {
  if (domain_reps.size() != text_features.size() || domain_reps.empty())
    throw std::invalid_argument("alignment_loss: batch sizes differ (" +
                                std::to_string(domain_reps.size()) + " vs " +
                                std::to_string(text_features.size()) + ")");
  Tensor total;
  for (std::size_t b = 0; b < domain_reps.size(); ++b) {
    auto pooled = pool_tokens(domain_reps[b], pooling);
    if (pooled.numel() != text_features[b].numel())
      throw ShapeError("alignment_loss: representation dim " + std::to_string(pooled.numel()) +
                       " vs text feature " + shape_str(text_features[b].shape()));
    auto term = add(neg(cosine_similarity(pooled, text_features[b])), 1.0);
    total = b == 0 ? term : add(total, term);
  }
  return mul(total, 1.0 / static_cast<double>(domain_reps.size()));
}

} // namespace datprl
