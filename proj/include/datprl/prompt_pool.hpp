// SPDX-License-Identifier: Apache-2.0
//
// Learnable key/value prompt pools with query-retrieval-composition.
//
// A pool holds N prompts, each a key K_j in R^d and a value V_j in R^{T x d}.
// An input-derived query q selects the k prompts with the highest cosine
// similarity s_j = cos(q, K_j); the selected values are blended with
//
//     alpha_j = exp(s_j / temperature) / sum_{l in top-k} exp(s_l / temperature)
//     PR      = sum_{j in top-k} alpha_j V_j
//
// Selection itself is discrete. Gradients reach the query and the keys
// through s_j and the values through PR.

#ifndef DATPRL_PROMPT_POOL_HPP
#define DATPRL_PROMPT_POOL_HPP

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "datprl/nn.hpp"

namespace datprl {

enum class PoolKind { task, domain };

std::string_view to_string(PoolKind kind);

struct PromptPool {
  PoolKind kind = PoolKind::task;
  Tensor keys;   // [N, d]
  Tensor values; // [N, T, d]
  double temperature = 1.0;

  std::size_t size() const { return keys.dim(0); }
  std::size_t tokens() const { return values.dim(1); }
  std::size_t dim() const { return keys.dim(1); }

  void collect(const std::string &prefix, std::vector<NamedTensor> &out) const;
};

/// Keys and values drawn i.i.d. from normal(0, 0.02).
PromptPool init_pool(PoolKind kind, std::size_t prompts, std::size_t tokens, std::size_t dim,
                     double temperature, Rng &rng);

enum class Activation { silu, identity };

/// conv3x3 -> act -> conv3x3 -> global average pool -> linear -> act -> linear.
struct QueryProjector {
  Conv2d conv1;
  Conv2d conv2;
  Linear fc1;
  Linear fc2;
  Activation activation = Activation::silu;

  static QueryProjector create(std::size_t channels, std::size_t dim, Rng &rng);
  std::size_t in_channels() const { return conv1.in_channels(); }
  std::size_t out_dim() const { return fc2.weight.dim(1); }
  void collect(const std::string &prefix, std::vector<NamedTensor> &out) const;
};

/// features [c, h, w] -> query [d].
Tensor compute_query(const QueryProjector &projector, const Tensor &features);

struct PromptSelection {
  std::vector<std::size_t> indices; // top-k, descending similarity
  Tensor similarities;              // [k]
  Tensor weights;                   // [k], composition weights alpha
  Tensor full_probs;                // [N], softmax of all similarities at temperature 1
  Tensor all_similarities;          // [N]
  std::size_t pool_size = 0;
};

/// Ties are broken towards the lower prompt index.
PromptSelection select_top_k(const PromptPool &pool, const Tensor &query, std::size_t k);

/// Instance-level prompt representation [T, d].
Tensor compose(const PromptSelection &selection, const PromptPool &pool);

} // namespace datprl

#endif // DATPRL_PROMPT_POOL_HPP
