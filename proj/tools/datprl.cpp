// SPDX-License-Identifier: Apache-2.0
//
// datprl train | eval | analyze | gradcheck | config
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
// 3 verification failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "datprl/analysis.hpp"
#include "datprl/config.hpp"
#include "datprl/gradient_suite.hpp"
#include "datprl/run.hpp"

namespace fs = std::filesystem;
using namespace datprl;

namespace {

constexpr int kOk = 0, kUsage = 1, kRuntime = 2, kVerify = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

RunConfig config_from(const std::string &path, const std::vector<std::string> &overrides) {
  RunConfig config;
  if (!path.empty()) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    config = load_run_config(path);
  }
  for (const auto &o : overrides) apply_override(config, o);
  try {
    config.train.validate();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  return config;
}

Checkpoint read_checkpoint(const std::string &path) {
  if (!fs::exists(path)) throw UsageError("checkpoint not found: " + path);
  return load_checkpoint(path);
}

int cmd_train(const std::string &config_path, const std::vector<std::string> &overrides,
              const std::string &resume_path, bool quiet) {
  std::optional<Checkpoint> resume;
  RunConfig config;
  if (!resume_path.empty()) {
    resume = read_checkpoint(resume_path);
    config = config_path.empty() ? checkpoint_config(*resume, overrides) : config_from(config_path, overrides);
  } else {
    config = config_from(config_path, overrides);
  }
  const auto outcome = run_training(config, resume, quiet ? nullptr : &std::cout);
  std::cout << "run directory: " << outcome.dir.string() << "\n" << metrics_csv(outcome.final_eval);
  if (outcome.integrity && !outcome.integrity->passed()) {
    std::cerr << "gradient integrity check failed\n";
    return kVerify;
  }
  return kOk;
}

int cmd_eval(const std::string &ckpt_path, const std::vector<std::string> &overrides, std::string out_path) {
  const auto ckpt = read_checkpoint(ckpt_path);
  const auto config = checkpoint_config(ckpt, overrides);
  const auto csv = metrics_csv(evaluate_checkpoint(ckpt, config));
  if (out_path.empty()) out_path = (fs::path(ckpt_path).parent_path() / "metrics.csv").string();
  write_text(out_path, csv);
  std::cout << csv;
  return kOk;
}

int cmd_analyze(const std::string &ckpt_path, const std::vector<std::string> &overrides, std::string out_dir) {
  const auto ckpt = read_checkpoint(ckpt_path);
  const auto config = checkpoint_config(ckpt, overrides);
  const auto a = analyze_checkpoint(ckpt, config);
  if (out_dir.empty()) out_dir = (fs::path(ckpt_path).parent_path() / "analytics").string();
  write_analytics(a, out_dir);
  std::cout << "analytics written to " << out_dir << "\n";
  if (!a.domain_selection.empty()) {
    std::printf("max domain-pool TV distance: %.4f\n", max_domain_tv(a));
    std::printf("domain representations closest to own anchor: %s\n", anchors_separated(a) ? "yes" : "no");
  }
  return kOk;
}

int cmd_gradcheck(const SuiteOptions &options) {
  const auto report = run_gradient_suite(options);
  std::cout << format_report(report);
  return report.passed() ? kOk : kVerify;
}

int cmd_config(const std::string &config_path, const std::vector<std::string> &overrides, bool docs) {
  if (docs) {
    for (const auto &k : documented_keys())
      std::cout << k.key << " = " << k.default_value << "    # " << k.description << "\n";
    return kOk;
  }
  std::cout << canonical_text(config_from(config_path, overrides));
  return kOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Domain-aware task prompt learning for multi-domain image restoration"};
  app.require_subcommand(1);

  std::string config_path, resume_path, ckpt_path, out_path;
  std::vector<std::string> overrides;
  bool quiet = false, docs = false;
  SuiteOptions suite;

  auto *train = app.add_subcommand("train", "train a model and write a run directory");
  train->add_option("--config", config_path, "configuration file");
  train->add_option("--set", overrides, "override section.key=value")->allow_extra_args(false);
  train->add_option("--resume", resume_path, "continue from a checkpoint");
  train->add_flag("--quiet", quiet, "no progress lines");

  auto *eval = app.add_subcommand("eval", "evaluate a checkpoint per (domain, task)");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval->add_option("--set", overrides, "override section.key=value")->allow_extra_args(false);
  eval->add_option("--out", out_path, "CSV path (default: metrics.csv next to the checkpoint)");

  auto *analyze = app.add_subcommand("analyze", "export selection, similarity and gate analytics");
  analyze->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  analyze->add_option("--set", overrides, "override section.key=value")->allow_extra_args(false);
  analyze->add_option("--out", out_path, "output directory (default: analytics/ next to the checkpoint)");

  auto *grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad->add_option("--seed", suite.seed, "base seed");
  grad->add_option("--seeds", suite.seeds, "instances per component");
  grad->add_option("--tol", suite.loss_tolerance, "tolerance for losses and module paths");
  grad->add_option("--tol-end-to-end", suite.end_to_end_tolerance, "tolerance through the backbone");
  grad->add_option("--only", suite.only, "restrict to components");
  grad->add_option("--inject-fault", suite.inject_fault, "corrupt one component's backward pass");

  auto *cfg = app.add_subcommand("config", "print the resolved configuration");
  cfg->add_option("--config", config_path, "configuration file");
  cfg->add_option("--set", overrides, "override section.key=value")->allow_extra_args(false);
  cfg->add_flag("--keys", docs, "list every key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(config_path, overrides, resume_path, quiet);
    if (*eval) return cmd_eval(ckpt_path, overrides, out_path);
    if (*analyze) return cmd_analyze(ckpt_path, overrides, out_path);
    if (*grad) return cmd_gradcheck(suite);
    if (*cfg) return cmd_config(config_path, overrides, docs);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const UsageError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CheckpointError &e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::invalid_argument &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception &e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
