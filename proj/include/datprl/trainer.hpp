// SPDX-License-Identifier: Apache-2.0
//
// Total objective, training loop, evaluation and checkpoint plumbing.
//
//   L = lp*L_pix + lf*L_fft + la*L_align
//     + ld*(L_div^task + L_div^dom) + lb*(L_bal^task + L_bal^dom)
//     + lc*(L_con^task + L_con^dom)
//
// Over a batch, L_pix, L_fft, L_align and L_con are sample means, L_div is a
// function of the pool alone, and L_bal is taken on the batch-mean selection
// distribution of each pool.

#ifndef DATPRL_TRAINER_HPP
#define DATPRL_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "datprl/backbone.hpp"
#include "datprl/checkpoint.hpp"
#include "datprl/optim.hpp"
#include "datprl/regularizers.hpp"
#include "datprl/synth.hpp"

namespace datprl {

struct LossWeights {
  double pix = 1.0;
  double fft = 0.1;
  double align = 1.0;
  double div = 0.1;
  double bal = 0.1;
  double con = 0.1;

  void validate() const;
};

struct ReconstructionLosses {
  Tensor pix;
  Tensor fft;
};

/// l_pix = mean |r - h|; l_fft = mean(|Re D| + |Im D|), D = dft2(r) - dft2(h).
ReconstructionLosses reconstruction_losses(const Tensor &restored, const Tensor &hq);

struct LossTerm {
  std::string name;
  double weight = 0.0;
  Tensor value;

  double contribution() const { return weight * value.item(); }
};

struct TotalLoss {
  Tensor total;
  std::vector<LossTerm> terms;

  /// Sum of weighted contributions in term order.
  double term_sum() const;
  const LossTerm *find(const std::string &name) const;
};

/// Objective for a batch given its forward results (same order as samples).
TotalLoss total_loss(const RestorationModel &model, const std::vector<ForwardResult> &outputs,
                     const std::vector<SyntheticSample> &samples, const LossWeights &weights,
                     const RegularizerConfig &reg, AlignPooling pooling = AlignPooling::mean);

struct EvalConfig {
  std::size_t samples_per_cell = 8;
  std::size_t image_size = 64;
  std::uint64_t seed = 1234;
};

struct TrainConfig {
  std::uint64_t steps = 2000;
  std::size_t batch_size = 12;
  std::uint64_t seed = 1;
  ModelConfig model;
  SynthConfig synth;
  LossWeights weights;
  RegularizerConfig reg;
  AlignPooling align_pooling = AlignPooling::mean;
  AdamConfig adam;
  std::uint64_t eval_every = 0; // 0: only at the end of a run
  EvalConfig eval;
  bool gradient_check = true;

  void validate() const;
};

struct CellMetrics {
  DomainId domain = DomainId::natural;
  TaskId task = TaskId::noise;
  double psnr = 0.0;
  double ssim = 0.0;
  double psnr_lq = 0.0;
  double ssim_lq = 0.0;
  std::size_t n = 0;
};

struct EvalReport {
  std::vector<CellMetrics> cells; // domain-major

  double mean_psnr() const;
  double mean_psnr_lq() const;
  /// Mean over every cell of `task`.
  double task_psnr(TaskId task) const;
  double task_psnr_lq(TaskId task) const;
};

/// Evaluates on the seeded evaluation set without touching model state.
EvalReport evaluate(const RestorationModel &model, const SynthConfig &synth,
                    const TextOracle &oracle, const EvalConfig &eval);

/// CSV with header domain,task,psnr_db,ssim,n.
std::string metrics_csv(const EvalReport &report);

struct StepRecord {
  std::uint64_t step = 0;
  double lr = 0.0;
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms; // weighted contributions
  std::vector<std::pair<std::string, double>> raw;   // unweighted values
  std::vector<double> gates;
  std::vector<std::size_t> task_histogram;
  std::vector<std::size_t> domain_histogram;
  double grad_norm = 0.0;
};

struct IntegrityCheck {
  std::string module;
  std::string parameter;
  double rel_error = 0.0;
  bool passed = false;
};

struct IntegrityReport {
  std::vector<IntegrityCheck> checks;
  double tolerance = 1e-4;
  bool passed() const;
};

/// Owns model, optimizer and data stream. A trainer restored from a
/// checkpoint continues the exact sequence the original would have produced.
class Trainer {
public:
  explicit Trainer(TrainConfig config);
  /// `config_text` is stored verbatim in checkpoints.
  Trainer(TrainConfig config, std::string config_text);

  /// Restores parameters, moments, step counter and data stream.
  void restore(const Checkpoint &ckpt);
  Checkpoint checkpoint() const;

  /// One optimization step; throws with step context on any failure.
  StepRecord step();
  std::uint64_t steps_done() const { return optimizer_.steps_taken(); }
  bool finished() const { return steps_done() >= config_.steps; }

  /// Finite-difference check of one random parameter per module against the
  /// total loss of a small batch drawn from a side stream.
  IntegrityReport check_integrity(std::uint64_t seed, double tolerance = 1e-4) const;

  EvalReport evaluate() const;

  const TrainConfig &config() const { return config_; }
  const RestorationModel &model() const { return model_; }
  const TextOracle &oracle() const { return oracle_; }
  const Rng &data_rng() const { return rng_; }

private:
  TrainConfig config_;
  std::string config_text_;
  RestorationModel model_;
  TextOracle oracle_;
  Adam optimizer_;
  Rng rng_;
};

/// Module of a dotted parameter name: first component, or the first two for
/// pools.* and projector.*.
std::string parameter_module(const std::string &name);

/// JSON-lines renderings of history records.
std::string step_json(const StepRecord &record);
std::string eval_json(std::uint64_t step, const EvalReport &report);
std::string integrity_json(const IntegrityReport &report);

} // namespace datprl

#endif // DATPRL_TRAINER_HPP
