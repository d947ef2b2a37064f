// SPDX-License-Identifier: Apache-2.0

#include "datprl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "datprl/metrics.hpp"
#include "datprl/ops.hpp"

namespace datprl {

void LossWeights::validate() const {
  for (double w : {pix, fft, align, div, bal, con})
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("loss weights must be finite and >= 0");
}

ReconstructionLosses reconstruction_losses(const Tensor &restored, const Tensor &hq) {
  if (restored.shape() != hq.shape())
    throw ShapeError("reconstruction_losses: restored " + shape_str(restored.shape()) + " vs hq " +
                     shape_str(hq.shape()));
  auto diff = restored - hq;
  auto spec = dft2(diff);
  auto pix = mean(abs(diff));
  auto fft = mean(abs(spec.real) + abs(spec.imag));
  return {pix, fft};
}

double TotalLoss::term_sum() const {
  double s = 0.0;
  for (const auto &t : terms) s += t.contribution();
  return s;
}

const LossTerm *TotalLoss::find(const std::string &name) const {
  for (const auto &t : terms)
    if (t.name == name) return &t;
  return nullptr;
}

namespace {

Tensor batch_mean(const std::vector<Tensor> &xs) {
  Tensor acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = acc + xs[i];
  return acc * (1.0 / static_cast<double>(xs.size()));
}

Tensor mean_probs(const std::vector<ForwardResult> &outputs, bool task) {
  std::vector<Tensor> probs;
  for (const auto &o : outputs) {
    const auto &sel = task ? o.diag.task_selection : o.diag.domain_selection;
    probs.push_back(sel->full_probs);
  }
  return batch_mean(probs);
}

} // namespace

TotalLoss total_loss(const RestorationModel &model, const std::vector<ForwardResult> &outputs,
                     const std::vector<SyntheticSample> &samples, const LossWeights &weights,
                     const RegularizerConfig &reg, AlignPooling pooling) {
  if (outputs.empty() || outputs.size() != samples.size())
    throw std::invalid_argument("total_loss: " + std::to_string(outputs.size()) + " outputs for " +
                                std::to_string(samples.size()) + " samples");
  TotalLoss out;
  std::vector<Tensor> pix, fft;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    auto r = reconstruction_losses(outputs[i].restored, samples[i].hq);
    pix.push_back(r.pix);
    fft.push_back(r.fft);
  }
  out.terms.push_back({"pix", weights.pix, batch_mean(pix)});
  out.terms.push_back({"fft", weights.fft, batch_mean(fft)});

  const auto &prompts = model.config().prompts;
  if (prompts.domain.enabled) {
    std::vector<Tensor> reps, texts;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      reps.push_back(*outputs[i].pr_domain);
      texts.push_back(samples[i].text_feature);
    }
    out.terms.push_back({"align", weights.align, alignment_loss(reps, texts, pooling)});
  }

  struct PoolTerms {
    const char *suffix;
    bool task;
    const std::optional<PromptPool> *pool;
  };
  for (const PoolTerms p : {PoolTerms{"task", true, &model.task_pool()},
                            PoolTerms{"domain", false, &model.domain_pool()}}) {
    if (!p.pool->has_value()) continue;
    out.terms.push_back({std::string("div_") + p.suffix, weights.div,
                         diversity_loss((*p.pool)->values, reg.tau_div)});
  }
  for (const PoolTerms p : {PoolTerms{"task", true, &model.task_pool()},
                            PoolTerms{"domain", false, &model.domain_pool()}}) {
    if (!p.pool->has_value()) continue;
    out.terms.push_back({std::string("bal_") + p.suffix, weights.bal, balance_loss(mean_probs(outputs, p.task))});
  }
  for (const PoolTerms p : {PoolTerms{"task", true, &model.task_pool()},
                            PoolTerms{"domain", false, &model.domain_pool()}}) {
    if (!p.pool->has_value()) continue;
    std::vector<Tensor> con;
    for (const auto &o : outputs) {
      const auto &sel = p.task ? o.diag.task_selection : o.diag.domain_selection;
      con.push_back(contrastive_loss(*sel, reg.tau_con));
    }
    out.terms.push_back({std::string("con_") + p.suffix, weights.con, batch_mean(con)});
  }

  Tensor total = out.terms.front().value * out.terms.front().weight;
  for (std::size_t i = 1; i < out.terms.size(); ++i)
    total = total + out.terms[i].value * out.terms[i].weight;
  out.total = total;
  return out;
}

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("trainer.steps must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("trainer.batch_size must be at least 1");
  if (eval.samples_per_cell < 1) throw std::invalid_argument("eval.samples_per_cell must be at least 1");
  model.validate();
  synth.validate();
  weights.validate();
  reg.validate();
  adam.validate();
  if (synth.image_size % model.backbone.size_divisor() != 0)
    throw std::invalid_argument("data.image_size must be divisible by " +
                                std::to_string(model.backbone.size_divisor()));
  if (eval.image_size % model.backbone.size_divisor() != 0)
    throw std::invalid_argument("eval.image_size must be divisible by " +
                                std::to_string(model.backbone.size_divisor()));
}

double EvalReport::mean_psnr() const {
  double s = 0.0;
  for (const auto &c : cells) s += c.psnr;
  return cells.empty() ? 0.0 : s / static_cast<double>(cells.size());
}

double EvalReport::mean_psnr_lq() const {
  double s = 0.0;
  for (const auto &c : cells) s += c.psnr_lq;
  return cells.empty() ? 0.0 : s / static_cast<double>(cells.size());
}

double EvalReport::task_psnr(TaskId task) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto &c : cells)
    if (c.task == task) s += c.psnr, ++n;
  return n ? s / static_cast<double>(n) : 0.0;
}

double EvalReport::task_psnr_lq(TaskId task) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto &c : cells)
    if (c.task == task) s += c.psnr_lq, ++n;
  return n ? s / static_cast<double>(n) : 0.0;
}

EvalReport evaluate(const RestorationModel &model, const SynthConfig &synth, const TextOracle &oracle,
                    const EvalConfig &eval) {
  NoGradGuard guard;
  const auto set = evaluation_set(synth, oracle, eval.samples_per_cell, eval.image_size, eval.seed);
  EvalReport report;
  for (auto d : synth.domains)
    for (auto t : synth.tasks) report.cells.push_back({d, t, 0.0, 0.0, 0.0, 0.0, 0});
  for (const auto &s : set) {
    auto restored = model.forward(s.lq).restored;
    std::vector<double> clamped(restored.data().begin(), restored.data().end());
    for (auto &v : clamped) v = std::clamp(v, 0.0, 1.0);
    const Tensor out(restored.shape(), std::move(clamped));
    auto it = std::find_if(report.cells.begin(), report.cells.end(),
                           [&](const CellMetrics &c) { return c.domain == s.domain && c.task == s.task; });
    it->psnr += psnr(out, s.hq);
    it->ssim += ssim(out, s.hq);
    it->psnr_lq += psnr(s.lq, s.hq);
    it->ssim_lq += ssim(s.lq, s.hq);
    ++it->n;
  }
  for (auto &c : report.cells) {
    const double n = static_cast<double>(c.n);
    c.psnr /= n;
    c.ssim /= n;
    c.psnr_lq /= n;
    c.ssim_lq /= n;
  }
  return report;
}

std::string metrics_csv(const EvalReport &report) {
  std::string out = "domain,task,psnr_db,ssim,n\n";
  char buf[160];
  for (const auto &c : report.cells) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f,%zu\n", std::string(to_string(c.domain)).c_str(),
                  std::string(to_string(c.task)).c_str(), c.psnr, c.ssim, c.n);
    out += buf;
  }
  return out;
}

bool IntegrityReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const IntegrityCheck &c) { return c.passed; });
}

std::string parameter_module(const std::string &name) {
  const auto dot = name.find('.');
  const auto head = name.substr(0, dot);
  if ((head == "pools" || head == "projector") && dot != std::string::npos) {
    const auto dot2 = name.find('.', dot + 1);
    return name.substr(0, dot2);
  }
  return head;
}

Trainer::Trainer(TrainConfig config) : Trainer(std::move(config), std::string{}) {}

Trainer::Trainer(TrainConfig config, std::string config_text)
    : config_((config.validate(), std::move(config))), config_text_(std::move(config_text)),
      model_(RestorationModel::create(config_.model, config_.seed)),
      oracle_(TextOracle::create(config_.model.prompts.dim, config_.synth.text_seed)),
      optimizer_(model_.parameters(), config_.adam), rng_(config_.seed ^ 0xD1B54A32D192ED03ULL) {}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = config_text_;
  c.step = optimizer_.steps_taken();
  c.rng_state = rng_.serialize();
  c.params = snapshot(model_.parameters());
  c.first_moments = optimizer_.first_moments();
  c.second_moments = optimizer_.second_moments();
  return c;
}

void Trainer::restore(const Checkpoint &ckpt) {
  const auto params = model_.parameters();
  restore_parameters(ckpt.params, params);
  if (ckpt.first_moments.empty()) {
    for (auto &m : optimizer_.first_moments()) std::fill(m.begin(), m.end(), 0.0);
    for (auto &v : optimizer_.second_moments()) std::fill(v.begin(), v.end(), 0.0);
  } else {
    optimizer_.first_moments() = ckpt.first_moments;
    optimizer_.second_moments() = ckpt.second_moments;
  }
  optimizer_.set_steps_taken(ckpt.step);
  rng_ = ckpt.rng_state.empty() ? rng_ : Rng::deserialize(ckpt.rng_state);
}

StepRecord Trainer::step() {
  if (finished())
    throw std::logic_error("training already finished at step " + std::to_string(steps_done()));
  const std::uint64_t t = steps_done() + 1;
  try {
    const auto samples = balanced_batch(config_.synth, oracle_, config_.batch_size, rng_);
    std::vector<ForwardResult> outputs;
    outputs.reserve(samples.size());
    for (const auto &s : samples) outputs.push_back(model_.forward(s.lq));
    auto loss = total_loss(model_, outputs, samples, config_.weights, config_.reg, config_.align_pooling);

    for (const auto &[name, p] : optimizer_.params()) {
      Tensor h = p;
      h.zero_grad();
    }
    backward(loss.total);

    StepRecord rec;
    rec.step = t;
    rec.lr = lr_schedule(t, config_.steps, config_.adam.lr, config_.adam.lr_min);
    rec.total = loss.total.item();
    for (const auto &term : loss.terms) {
      rec.terms.emplace_back(term.name, term.contribution());
      rec.raw.emplace_back(term.name, term.value.item());
    }
    rec.gates = model_.gates().alphas();
    if (const auto &pool = model_.task_pool()) rec.task_histogram.assign(pool->keys.dim(0), 0);
    if (const auto &pool = model_.domain_pool()) rec.domain_histogram.assign(pool->keys.dim(0), 0);
    for (const auto &o : outputs) {
      if (o.diag.task_selection)
        for (auto i : o.diag.task_selection->indices) ++rec.task_histogram[i];
      if (o.diag.domain_selection)
        for (auto i : o.diag.domain_selection->indices) ++rec.domain_histogram[i];
    }
    rec.grad_norm = optimizer_.grad_norm();
    if (!std::isfinite(rec.grad_norm)) throw std::runtime_error("non-finite gradient norm");
    optimizer_.step(rec.lr);
    return rec;
  } catch (const std::exception &e) {
    throw std::runtime_error("step " + std::to_string(t) + ": " + e.what());
  }
}

IntegrityReport Trainer::check_integrity(std::uint64_t seed, double tolerance) const {
  IntegrityReport report;
  report.tolerance = tolerance;
  Rng rng(seed);
  const auto samples = balanced_batch(config_.synth, oracle_, config_.synth.domains.size(), rng);
  auto loss_fn = [&] {
    std::vector<ForwardResult> outputs;
    for (const auto &s : samples) outputs.push_back(model_.forward(s.lq));
    return total_loss(model_, outputs, samples, config_.weights, config_.reg, config_.align_pooling).total;
  };
  std::map<std::string, std::vector<NamedTensor>> modules;
  for (const auto &p : model_.parameters()) modules[parameter_module(p.first)].push_back(p);
  for (const auto &[module, params] : modules) {
    const auto &pick = params[rng.index(params.size())];
    auto res = check_gradients(loss_fn, {pick}, 1e-6, 6, rng.next_u64());
    const double err = res.max_rel_error;
    report.checks.push_back({module, pick.first, err, err <= tolerance});
  }
  for (const auto &[name, p] : model_.parameters()) {
    Tensor h = p;
    h.zero_grad();
  }
  return report;
}

EvalReport Trainer::evaluate() const { return datprl::evaluate(model_, config_.synth, oracle_, config_.eval); }

namespace {

nlohmann::ordered_json pairs_json(const std::vector<std::pair<std::string, double>> &kv) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto &[k, v] : kv) j[k] = v;
  return j;
}

} // namespace

std::string step_json(const StepRecord &r) {
  nlohmann::ordered_json j;
  j["type"] = "step";
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["total"] = r.total;
  j["terms"] = pairs_json(r.terms);
  j["raw"] = pairs_json(r.raw);
  j["gates"] = r.gates;
  j["task_histogram"] = r.task_histogram;
  j["domain_histogram"] = r.domain_histogram;
  j["grad_norm"] = r.grad_norm;
  return j.dump();
}

std::string eval_json(std::uint64_t step, const EvalReport &report) {
  nlohmann::ordered_json j;
  j["type"] = "eval";
  j["step"] = step;
  j["mean_psnr"] = report.mean_psnr();
  j["mean_psnr_lq"] = report.mean_psnr_lq();
  auto cells = nlohmann::ordered_json::array();
  for (const auto &c : report.cells)
    cells.push_back({{"domain", to_string(c.domain)},
                     {"task", to_string(c.task)},
                     {"psnr", c.psnr},
                     {"ssim", c.ssim},
                     {"psnr_lq", c.psnr_lq},
                     {"ssim_lq", c.ssim_lq},
                     {"n", c.n}});
  j["cells"] = cells;
  return j.dump();
}

std::string integrity_json(const IntegrityReport &report) {
  nlohmann::ordered_json j;
  j["type"] = "gradcheck";
  j["tolerance"] = report.tolerance;
  j["passed"] = report.passed();
  auto checks = nlohmann::ordered_json::array();
  for (const auto &c : report.checks)
    checks.push_back({{"module", c.module}, {"parameter", c.parameter}, {"rel_error", c.rel_error},
                      {"passed", c.passed}});
  j["checks"] = checks;
  return j.dump();
}

} // namespace datprl
