// SPDX-License-Identifier: Apache-2.0

#include "datprl/run.hpp"

#include <cstdio>
#include <fstream>

namespace datprl {

void write_text(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::filesystem::path resolve_run_dir(const RunConfig &config) {
  if (!config.output_dir.empty()) return config.output_dir;
  return default_output_root() / ("run-" + std::to_string(config.train.seed));
}

RunOutcome run_training(const RunConfig &config, const std::optional<Checkpoint> &resume, std::ostream *log,
                        std::uint64_t log_every) {
  RunOutcome outcome;
  outcome.dir = resolve_run_dir(config);
  std::filesystem::create_directories(outcome.dir);
  const auto text = canonical_text(config);
  write_text(outcome.dir / "config.resolved", text);

  Trainer trainer(config.train, text);
  if (resume) trainer.restore(*resume);

  const auto history_path = outcome.dir / "history.jsonl";
  std::ofstream history(history_path, resume ? std::ios::app : std::ios::trunc);
  if (!history) throw std::runtime_error("cannot write " + history_path.string());

  if (config.train.gradient_check && !resume) {
    outcome.integrity = trainer.check_integrity(config.train.seed + 17);
    history << integrity_json(*outcome.integrity) << "\n";
    if (log)
      *log << "gradient integrity: " << (outcome.integrity->passed() ? "ok" : "FAILED") << "\n";
  }
  while (!trainer.finished()) {
    const auto rec = trainer.step();
    history << step_json(rec) << "\n";
    if (log && log_every && (rec.step % log_every == 0 || rec.step == 1)) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "step %llu  loss %.6f  lr %.3g", static_cast<unsigned long long>(rec.step),
                    rec.total, rec.lr);
      *log << buf << "\n";
    }
    if (config.train.eval_every && rec.step % config.train.eval_every == 0 && !trainer.finished())
      history << eval_json(rec.step, trainer.evaluate()) << "\n";
  }
  outcome.steps = trainer.steps_done();
  outcome.final_eval = trainer.evaluate();
  history << eval_json(outcome.steps, outcome.final_eval) << "\n";
  if (!history) throw std::runtime_error("failed writing " + history_path.string());
  save_checkpoint(trainer.checkpoint(), outcome.dir / "checkpoint.bin");
  write_text(outcome.dir / "metrics.csv", metrics_csv(outcome.final_eval));
  return outcome;
}

RunConfig checkpoint_config(const Checkpoint &ckpt, const std::vector<std::string> &overrides) {
  auto config = parse_run_config(ckpt.config_text, "<checkpoint config>");
  for (const auto &o : overrides) apply_override(config, o);
  config.train.validate();
  return config;
}

RestorationModel restore_model(const Checkpoint &ckpt, const RunConfig &config) {
  auto model = RestorationModel::create(config.train.model, config.train.seed);
  restore_parameters(ckpt.params, model.parameters());
  return model;
}

EvalReport evaluate_checkpoint(const Checkpoint &ckpt, const RunConfig &config) {
  const auto model = restore_model(ckpt, config);
  const auto oracle = TextOracle::create(config.train.model.prompts.dim, config.train.synth.text_seed);
  return evaluate(model, config.train.synth, oracle, config.train.eval);
}

Analytics analyze_checkpoint(const Checkpoint &ckpt, const RunConfig &config) {
  const auto model = restore_model(ckpt, config);
  const auto oracle = TextOracle::create(config.train.model.prompts.dim, config.train.synth.text_seed);
  return analyze(model, config.train.synth, oracle, config.train.eval, config.train.align_pooling);
}

} // namespace datprl
