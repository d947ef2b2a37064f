// SPDX-License-Identifier: Apache-2.0
//
// Run-directory drivers behind the command-line tool:
//
//   <dir>/config.resolved   canonical configuration
//   <dir>/history.jsonl     one JSON object per line (step, eval, gradcheck)
//   <dir>/checkpoint.bin    final state
//   <dir>/metrics.csv       final evaluation
//   <dir>/analytics/*.csv   written by analyze

#ifndef DATPRL_RUN_HPP
#define DATPRL_RUN_HPP

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>

#include "datprl/analysis.hpp"
#include "datprl/config.hpp"

namespace datprl {

struct RunOutcome {
  std::filesystem::path dir;
  std::uint64_t steps = 0;
  std::optional<IntegrityReport> integrity;
  EvalReport final_eval;
};

/// Output directory of a configuration: output.dir, or <root>/run-<seed>.
std::filesystem::path resolve_run_dir(const RunConfig &config);

/// Trains to config.train.steps. With `resume`, continues from that state and
/// appends to an existing history. `log` receives one progress line per
/// `log_every` steps (0 disables).
RunOutcome run_training(const RunConfig &config, const std::optional<Checkpoint> &resume = std::nullopt,
                        std::ostream *log = nullptr, std::uint64_t log_every = 100);

/// Configuration stored in a checkpoint with `overrides` applied on top.
RunConfig checkpoint_config(const Checkpoint &ckpt, const std::vector<std::string> &overrides);

/// Model rebuilt from a checkpoint; throws CheckpointError on table mismatch.
RestorationModel restore_model(const Checkpoint &ckpt, const RunConfig &config);

EvalReport evaluate_checkpoint(const Checkpoint &ckpt, const RunConfig &config);
Analytics analyze_checkpoint(const Checkpoint &ckpt, const RunConfig &config);

void write_text(const std::filesystem::path &path, const std::string &text);

} // namespace datprl

#endif // DATPRL_RUN_HPP
