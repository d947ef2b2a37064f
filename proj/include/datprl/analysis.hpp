// SPDX-License-Identifier: Apache-2.0
//
// Post-training studies exported as CSV: prompt selection histograms per
// (domain, task) dataset, pairwise prompt-value similarity, gate values,
// per-sample prompt-representation similarity within each task, and the
// cosine between pooled domain representations and every domain anchor.

#ifndef DATPRL_ANALYSIS_HPP
#define DATPRL_ANALYSIS_HPP

#include <filesystem>
#include <vector>

#include "datprl/trainer.hpp"

namespace datprl {

using Matrix = std::vector<std::vector<double>>;

struct SelectionHistogram {
  DomainId domain = DomainId::natural;
  TaskId task = TaskId::noise;
  std::size_t samples = 0;
  std::vector<std::size_t> counts;
};

struct TaskPrSimilarity {
  TaskId task = TaskId::noise;
  std::vector<DomainId> sample_domains;
  Matrix cosine;
};

struct Analytics {
  std::vector<SelectionHistogram> task_selection;
  std::vector<SelectionHistogram> domain_selection;
  Matrix task_value_similarity;
  Matrix domain_value_similarity;
  std::vector<double> gates;
  std::vector<TaskPrSimilarity> pr_similarity;
  std::vector<DomainId> domains;
  /// anchor_cosine[i][j]: mean cosine of pooled PR_d over samples of domain
  /// i against the anchor of domain j.
  Matrix anchor_cosine;
};

/// Cosine matrix of the flattened pool values [N, T, d].
Matrix value_similarity(const Tensor &values);

/// 0.5 * sum |p - q| of the normalized count vectors.
double total_variation(const std::vector<std::size_t> &a, const std::vector<std::size_t> &b);

/// Domain-pool histogram of one domain, summed over its tasks.
std::vector<std::size_t> domain_histogram(const Analytics &a, DomainId domain);

/// Largest total-variation distance between the domain-pool histograms of
/// any two domains.
double max_domain_tv(const Analytics &a);

/// True when, for every domain, the pooled PR_d is on average closer to its
/// own anchor than to every other anchor.
bool anchors_separated(const Analytics &a);

Analytics analyze(const RestorationModel &model, const SynthConfig &synth, const TextOracle &oracle,
                  const EvalConfig &eval, AlignPooling pooling = AlignPooling::mean);

/// Writes task_selection.csv, domain_selection.csv, task_value_similarity.csv,
/// domain_value_similarity.csv, gates.csv, pr_similarity.csv and
/// anchor_cosine.csv into `dir`. Files for absent pools are omitted.
void write_analytics(const Analytics &a, const std::filesystem::path &dir);

} // namespace datprl

#endif // DATPRL_ANALYSIS_HPP
