// SPDX-License-Identifier: Apache-2.0

#include "datprl/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace datprl {

namespace {

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string &s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw std::invalid_argument("empty list element");
    out.push_back(item);
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

std::uint64_t to_u64(const std::string &s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("expected an unsigned integer");
  return v;
}

double to_f64(const std::string &s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw std::invalid_argument("expected a finite number");
  return v;
}

bool to_bool(const std::string &s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("expected true or false");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

template <class T, class F>
std::string join(const std::vector<T> &xs, F f) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + f(xs[i]);
  return out;
}

struct Key {
  std::string name;
  std::string description;
  std::function<void(RunConfig &, const std::string &)> set;
  std::function<std::string(const RunConfig &)> get;
};

#define DATPRL_U64(NAME, FIELD, DESC)                                                               \
  Key{NAME, DESC, [](RunConfig &c, const std::string &v) { c.FIELD = static_cast<decltype(c.FIELD)>(to_u64(v)); }, \
      [](const RunConfig &c) { return fmt(static_cast<std::uint64_t>(c.FIELD)); }}
#define DATPRL_F64(NAME, FIELD, DESC)                                                               \
  Key{NAME, DESC, [](RunConfig &c, const std::string &v) { c.FIELD = to_f64(v); },                 \
      [](const RunConfig &c) { return fmt(c.FIELD); }}
#define DATPRL_BOOL(NAME, FIELD, DESC)                                                              \
  Key{NAME, DESC, [](RunConfig &c, const std::string &v) { c.FIELD = to_bool(v); },                \
      [](const RunConfig &c) { return fmt(c.FIELD); }}

const std::vector<Key> &keys() {
  static const std::vector<Key> table = {
      Key{"data.domains", "comma-separated domains (natural, medical, remote)",
          [](RunConfig &c, const std::string &v) {
            c.train.synth.domains.clear();
            for (const auto &s : split_list(v)) c.train.synth.domains.push_back(parse_domain(s));
          },
          [](const RunConfig &c) {
            return join(c.train.synth.domains, [](DomainId d) { return std::string(to_string(d)); });
          }},
      Key{"data.tasks", "comma-separated tasks (noise, blur, streak, downsample, mask, haze)",
          [](RunConfig &c, const std::string &v) {
            c.train.synth.tasks.clear();
            for (const auto &s : split_list(v)) c.train.synth.tasks.push_back(parse_task(s));
          },
          [](const RunConfig &c) {
            return join(c.train.synth.tasks, [](TaskId t) { return std::string(to_string(t)); });
          }},
      DATPRL_U64("data.image_size", train.synth.image_size, "training crop size in pixels"),
      DATPRL_F64("data.text_jitter", train.synth.text_jitter, "per-sample text feature jitter"),
      DATPRL_U64("data.text_seed", train.synth.text_seed, "seed of the text-feature oracle"),
      DATPRL_F64("data.noise_sigma", train.synth.params.noise_sigma, "Gaussian noise std"),
      DATPRL_F64("data.blur_sigma", train.synth.params.blur_sigma, "Gaussian blur std in pixels"),
      DATPRL_U64("data.streak_count", train.synth.params.streak_count, "streaks per 32x32 area"),
      DATPRL_F64("data.streak_opacity", train.synth.params.streak_opacity, "streak blending opacity"),
      DATPRL_F64("data.streak_value", train.synth.params.streak_value, "streak intensity"),
      DATPRL_U64("data.scale", train.synth.params.scale, "downsampling factor"),
      DATPRL_F64("data.mask_density", train.synth.params.mask_density, "fraction of masked patches"),
      DATPRL_U64("data.mask_patch", train.synth.params.mask_patch, "masked patch size in pixels"),
      DATPRL_F64("data.haze_t_min", train.synth.params.haze_t_min, "minimum haze transmission"),
      DATPRL_F64("data.haze_t_max", train.synth.params.haze_t_max, "maximum haze transmission"),
      DATPRL_F64("data.airlight", train.synth.params.airlight, "haze airlight"),
      DATPRL_U64("pools.dim", train.model.prompts.dim, "prompt dimension d"),
      DATPRL_U64("pools.tokens", train.model.prompts.tokens, "tokens per prompt value T"),
      DATPRL_BOOL("pools.task.enabled", train.model.prompts.task.enabled, "use the task pool"),
      DATPRL_U64("pools.task.N", train.model.prompts.task.prompts, "task pool size"),
      DATPRL_U64("pools.task.topk", train.model.prompts.task.topk, "task prompts selected"),
      DATPRL_F64("pools.task.temperature", train.model.prompts.task.temperature, "task composition temperature"),
      DATPRL_BOOL("pools.domain.enabled", train.model.prompts.domain.enabled, "use the domain pool"),
      DATPRL_U64("pools.domain.N", train.model.prompts.domain.prompts, "domain pool size"),
      DATPRL_U64("pools.domain.topk", train.model.prompts.domain.topk, "domain prompts selected"),
      DATPRL_F64("pools.domain.temperature", train.model.prompts.domain.temperature,
                 "domain composition temperature"),
      DATPRL_U64("backbone.levels", train.model.backbone.levels, "resolution levels"),
      Key{"backbone.channels", "comma-separated width per level",
          [](RunConfig &c, const std::string &v) {
            c.train.model.backbone.channels.clear();
            for (const auto &s : split_list(v)) c.train.model.backbone.channels.push_back(to_u64(s));
          },
          [](const RunConfig &c) {
            return join(c.train.model.backbone.channels, [](std::size_t x) { return std::to_string(x); });
          }},
      DATPRL_U64("backbone.blocks", train.model.backbone.blocks, "residual blocks per level"),
      DATPRL_BOOL("fusion.residual", train.model.fusion.residual, "add the gated injection to the feature"),
      DATPRL_F64("fusion.gate_init", train.model.fusion.gate_init, "initial gate logit"),
      DATPRL_F64("loss.lambda_pix", train.weights.pix, "pixel L1 weight"),
      DATPRL_F64("loss.lambda_fft", train.weights.fft, "Fourier L1 weight"),
      DATPRL_F64("loss.lambda_align", train.weights.align, "alignment weight"),
      DATPRL_F64("loss.lambda_div", train.weights.div, "diversity weight"),
      DATPRL_F64("loss.lambda_bal", train.weights.bal, "balance weight"),
      DATPRL_F64("loss.lambda_con", train.weights.con, "contrastive weight"),
      DATPRL_F64("loss.tau_div", train.reg.tau_div, "diversity similarity threshold"),
      DATPRL_F64("loss.tau_con", train.reg.tau_con, "contrastive temperature"),
      Key{"loss.align_pooling", "mean or first_token",
          [](RunConfig &c, const std::string &v) {
            if (v == "mean") c.train.align_pooling = AlignPooling::mean;
            else if (v == "first_token") c.train.align_pooling = AlignPooling::first_token;
            else throw std::invalid_argument("expected mean or first_token");
          },
          [](const RunConfig &c) {
            return std::string(c.train.align_pooling == AlignPooling::mean ? "mean" : "first_token");
          }},
      DATPRL_F64("optimizer.lr", train.adam.lr, "initial learning rate"),
      DATPRL_F64("optimizer.beta1", train.adam.beta1, "Adam beta1"),
      DATPRL_F64("optimizer.beta2", train.adam.beta2, "Adam beta2"),
      DATPRL_F64("optimizer.eps", train.adam.eps, "Adam epsilon"),
      DATPRL_F64("optimizer.lr_min", train.adam.lr_min, "final cosine learning rate"),
      DATPRL_F64("optimizer.grad_clip", train.adam.grad_clip, "global gradient norm clip, 0 disables"),
      DATPRL_U64("trainer.steps", train.steps, "optimization steps"),
      DATPRL_U64("trainer.batch_size", train.batch_size, "samples per step, domain balanced"),
      DATPRL_U64("trainer.seed", train.seed, "model and data seed"),
      DATPRL_U64("trainer.eval_every", train.eval_every, "evaluation cadence in steps, 0 for end only"),
      DATPRL_BOOL("trainer.gradient_check", train.gradient_check, "finite-difference check at the start"),
      DATPRL_U64("eval.samples_per_cell", train.eval.samples_per_cell, "eval images per (domain, task)"),
      DATPRL_U64("eval.image_size", train.eval.image_size, "eval image size"),
      DATPRL_U64("eval.seed", train.eval.seed, "eval set seed"),
      Key{"output.dir", "run directory, empty for <output root>/run-<seed>",
          [](RunConfig &c, const std::string &v) { c.output_dir = v; },
          [](const RunConfig &c) { return c.output_dir; }},
  };
  return table;
}

#undef DATPRL_U64
#undef DATPRL_F64
#undef DATPRL_BOOL

const Key &find_key(const std::string &name) {
  for (const auto &k : keys())
    if (k.name == name) return k;
  throw ConfigError("unknown key '" + name + "'");
}

} // namespace

std::vector<KeyDoc> documented_keys() {
  const RunConfig defaults;
  std::vector<KeyDoc> out;
  for (const auto &k : keys()) out.push_back({k.name, k.get(defaults), k.description});
  return out;
}

void set_value(RunConfig &config, const std::string &key, const std::string &value) {
  const auto &k = find_key(key);
  try {
    k.set(config, value);
  } catch (const std::invalid_argument &e) {
    throw ConfigError("invalid value '" + value + "' for " + key + ": " + e.what());
  }
}

std::string get_value(const RunConfig &config, const std::string &key) { return find_key(key).get(config); }

RunConfig parse_run_config(const std::string &text, const std::string &origin) {
  RunConfig config;
  std::istringstream in(text);
  std::string line, section;
  std::set<std::string> seen;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const auto where = origin + ":" + std::to_string(lineno) + ": ";
    const auto hash = line.find('#');
    line = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + "empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value, got '" + line + "'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    const auto full = section.empty() ? key : section + "." + key;
    if (!seen.insert(full).second) throw ConfigError(where + "duplicate key '" + full + "'");
    try {
      set_value(config, full, value);
    } catch (const ConfigError &e) {
      throw ConfigError(where + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

void apply_override(RunConfig &config, const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not section.key=value");
  set_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string canonical_text(const RunConfig &config) {
  std::string out, section;
  for (const auto &k : keys()) {
    const auto dot = k.name.find('.');
    const auto sec = k.name.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(config) + "\n";
  }
  return out;
}

std::filesystem::path default_output_root() {
  if (const char *env = std::getenv("DATPRL_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

} // namespace datprl
