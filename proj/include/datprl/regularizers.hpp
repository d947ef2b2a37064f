// SPDX-License-Identifier: Apache-2.0
//
// Auxiliary objectives on the prompt pools:
//   diversity   - mean hinge max(0, S_ij - tau_div) over off-diagonal pairs of
//                 the cosine matrix of flattened values;
//   balance     - log N - H(p) of the full-pool selection probabilities;
//   contrastive - InfoNCE between the query and selected (positive) vs
//                 unselected (negative) keys, averaged over positives;
//   alignment   - batch mean of 1 - cos(pooled domain representation, text
//                 feature).

#ifndef DATPRL_REGULARIZERS_HPP
#define DATPRL_REGULARIZERS_HPP

#include <vector>

#include "datprl/prompt_pool.hpp"

namespace datprl {

struct RegularizerConfig {
  double tau_div = 0.1;
  double tau_con = 0.1;

  void validate() const;
};

/// values [N, T, d]. With N < 2 the loss is 0 and *warning is set.
Tensor diversity_loss(const Tensor &values, double tau_div, bool *warning = nullptr);

/// probs [N] must be non-negative and sum to 1 within 1e-9.
Tensor balance_loss(const Tensor &probs);

/// Cosine-similarity InfoNCE. positive_keys [P, d], negative_keys [M, d].
Tensor contrastive_loss(const Tensor &query, const Tensor &positive_keys,
                        const Tensor &negative_keys, double tau_con);

/// Same objective driven by a selection: positives are the selected keys,
/// negatives every other key of the pool. Reuses the selection's similarities.
Tensor contrastive_loss(const PromptSelection &selection, double tau_con);

/// Contrastive objective from precomputed similarities [P] and [M].
Tensor contrastive_from_similarities(const Tensor &positive, const Tensor &negative,
                                     double tau_con);

enum class AlignPooling { mean, first_token };

/// domain_reps: B tensors [T, d]; text_features: B tensors [d].
Tensor alignment_loss(const std::vector<Tensor> &domain_reps,
                      const std::vector<Tensor> &text_features,
                      AlignPooling pooling = AlignPooling::mean);

/// [T, d] -> [d] by the given pooling.
Tensor pool_tokens(const Tensor &rep, AlignPooling pooling);

} // namespace datprl

#endif // DATPRL_REGULARIZERS_HPP
