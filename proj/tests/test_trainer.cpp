// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <gtest/gtest.h>

#include <cmath>

#include "datprl/ops.hpp"
#include "datprl/trainer.hpp"
#include "test_util.hpp"
#include "tiny_config.hpp"

using namespace datprl;
using datprl::testing::naive_dft;
using datprl::testing::random_tensor;
using datprl::testing::tiny_train_config;

namespace {

std::vector<std::vector<double>> param_values(const RestorationModel &m) {
  std::vector<std::vector<double>> out;
  for (const auto &[n, t] : m.parameters()) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

struct Batch {
  RestorationModel model;
  std::vector<SyntheticSample> samples;
  std::vector<ForwardResult> outputs;
};

Batch forward_batch(const TrainConfig &cfg) {
  Batch b{RestorationModel::create(cfg.model, cfg.seed), {}, {}};
  // Unit-scale prompts so selections and cosines are far from degenerate.
  for (auto &[name, t] : b.model.parameters())
    if (name.rfind("pools.", 0) == 0) {
      Rng rng(std::hash<std::string>{}(name));
      for (double &v : t.mutable_data()) v = rng.normal();
    }
  const auto oracle = TextOracle::create(cfg.model.prompts.dim, cfg.synth.text_seed);
  Rng rng(5);
  b.samples = balanced_batch(cfg.synth, oracle, 6, rng);
  for (const auto &s : b.samples) b.outputs.push_back(b.model.forward(s.lq));
  return b;
}

} // namespace

TEST(ReconstructionLosses, IdentityIsZero) {
  Rng rng(1);
  const auto h = random_tensor({3, 8, 8}, rng);
  const auto r = reconstruction_losses(h, h);
  EXPECT_EQ(r.pix.item(), 0.0);
  EXPECT_EQ(r.fft.item(), 0.0);
}

TEST(ReconstructionLosses, ConstantOffsetAgainstDftOracle) {
  Rng rng(2);
  const auto h = random_tensor({3, 8, 8}, rng);
  const auto r = reconstruction_losses(h + 0.1, h);
  EXPECT_NEAR(r.pix.item(), 0.1, 1e-15);
  const auto diff = (h + 0.1) - h;
  double acc = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> re, im;
    naive_dft(diff, re, im, c * 64);
    for (std::size_t i = 0; i < 64; ++i) acc += std::abs(re[i]) + std::abs(im[i]);
  }
  EXPECT_NEAR(r.fft.item(), acc / 192.0, 1e-9);
}

TEST(ReconstructionLosses, RandomPairAgainstDftOracle) {
  Rng rng(3);
  const auto a = random_tensor({3, 4, 6}, rng), b = random_tensor({3, 4, 6}, rng);
  const auto r = reconstruction_losses(a, b);
  double pix = 0.0, acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) pix += std::abs(a.at(i) - b.at(i));
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> ra, ia, rb, ib;
    naive_dft(a, ra, ia, c * 24);
    naive_dft(b, rb, ib, c * 24);
    for (std::size_t i = 0; i < 24; ++i) acc += std::abs(ra[i] - rb[i]) + std::abs(ia[i] - ib[i]);
  }
  EXPECT_NEAR(r.pix.item(), pix / 72.0, 1e-14);
  EXPECT_NEAR(r.fft.item(), acc / 72.0, 1e-9);
}

TEST(ReconstructionLosses, PixelShuffleChangesOnlyFrequencyTerm) {
  Rng rng(4);
  const auto h = random_tensor({1, 8, 8}, rng);
  const auto r = random_tensor({1, 8, 8}, rng);
  std::vector<std::size_t> perm(64);
  for (std::size_t i = 0; i < 64; ++i) perm[i] = (i * 29 + 3) % 64;
  std::vector<double> hp(64), rp(64);
  for (std::size_t i = 0; i < 64; ++i) {
    hp[perm[i]] = h.at(i);
    rp[perm[i]] = r.at(i);
  }
  const auto a = reconstruction_losses(r, h);
  const auto b = reconstruction_losses(Tensor({1, 8, 8}, rp), Tensor({1, 8, 8}, hp));
  EXPECT_NEAR(a.pix.item(), b.pix.item(), 1e-14);
  EXPECT_GT(std::abs(a.fft.item() - b.fft.item()), 1e-3);
}

TEST(TotalLoss, PixelOnlyIdentityIsZero) {
  auto cfg = tiny_train_config();
  auto b = forward_batch(cfg);
  for (std::size_t i = 0; i < b.outputs.size(); ++i) b.outputs[i].restored = b.samples[i].hq;
  LossWeights w{1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  const auto loss = total_loss(b.model, b.outputs, b.samples, w, cfg.reg);
  EXPECT_EQ(loss.total.item(), 0.0);
}

TEST(TotalLoss, TermNamesFollowPools) {
  auto cfg = tiny_train_config();
  const auto both = forward_batch(cfg);
  std::vector<std::string> names;
  for (const auto &t : total_loss(both.model, both.outputs, both.samples, cfg.weights, cfg.reg).terms)
    names.push_back(t.name);
  EXPECT_EQ(names, (std::vector<std::string>{"pix", "fft", "align", "div_task", "div_domain", "bal_task",
                                             "bal_domain", "con_task", "con_domain"}));
  cfg.model.prompts.domain.enabled = false;
  const auto task_only = forward_batch(cfg);
  names.clear();
  for (const auto &t : total_loss(task_only.model, task_only.outputs, task_only.samples, cfg.weights, cfg.reg).terms)
    names.push_back(t.name);
  EXPECT_EQ(names, (std::vector<std::string>{"pix", "fft", "div_task", "bal_task", "con_task"}));
}

TEST(TotalLoss, BreakdownSumsToTotal) {
  auto cfg = tiny_train_config();
  const auto b = forward_batch(cfg);
  const auto loss = total_loss(b.model, b.outputs, b.samples, cfg.weights, cfg.reg);
  EXPECT_NEAR(loss.term_sum(), loss.total.item(), 1e-12);
}

TEST(TotalLoss, MatchesTermByTermReevaluation) {
  auto cfg = tiny_train_config();
  const auto b = forward_batch(cfg);
  const auto loss = total_loss(b.model, b.outputs, b.samples, cfg.weights, cfg.reg);
  const double n = static_cast<double>(b.samples.size());
  double pix = 0.0, fft = 0.0, con_t = 0.0, con_d = 0.0;
  std::vector<Tensor> reps, texts;
  std::vector<double> pt(5, 0.0), pd(4, 0.0);
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    const auto r = reconstruction_losses(b.outputs[i].restored, b.samples[i].hq);
    pix += r.pix.item() / n;
    fft += r.fft.item() / n;
    reps.push_back(*b.outputs[i].pr_domain);
    texts.push_back(b.samples[i].text_feature);
    con_t += contrastive_loss(*b.outputs[i].diag.task_selection, cfg.reg.tau_con).item() / n;
    con_d += contrastive_loss(*b.outputs[i].diag.domain_selection, cfg.reg.tau_con).item() / n;
    for (std::size_t j = 0; j < 5; ++j) pt[j] += b.outputs[i].diag.task_selection->full_probs.at(j) / n;
    for (std::size_t j = 0; j < 4; ++j) pd[j] += b.outputs[i].diag.domain_selection->full_probs.at(j) / n;
  }
  const auto &w = cfg.weights;
  const double expect =
      w.pix * pix + w.fft * fft + w.align * alignment_loss(reps, texts).item() +
      w.div * (diversity_loss(b.model.task_pool()->values, cfg.reg.tau_div).item() +
               diversity_loss(b.model.domain_pool()->values, cfg.reg.tau_div).item()) +
      w.bal * (balance_loss(Tensor::vector(pt)).item() + balance_loss(Tensor::vector(pd)).item()) +
      w.con * (con_t + con_d);
  EXPECT_NEAR(loss.total.item(), expect, 1e-12);
  EXPECT_NEAR(loss.find("pix")->value.item(), pix, 1e-14);
  EXPECT_EQ(loss.find("nonexistent"), nullptr);
}

TEST(TotalLoss, RejectsMismatchedBatch) {
  auto cfg = tiny_train_config();
  auto b = forward_batch(cfg);
  b.samples.pop_back();
  EXPECT_THROW(total_loss(b.model, b.outputs, b.samples, cfg.weights, cfg.reg), std::invalid_argument);
}

TEST(Trainer, StepRecordsAreConsistent) {
  const auto cfg = tiny_train_config(4);
  Trainer t(cfg);
  for (std::uint64_t s = 1; s <= 4; ++s) {
    const auto rec = t.step();
    EXPECT_EQ(rec.step, s);
    EXPECT_DOUBLE_EQ(rec.lr, lr_schedule(s, 4, cfg.adam.lr, cfg.adam.lr_min));
    double sum = 0.0;
    for (const auto &[name, v] : rec.terms) sum += v;
    EXPECT_NEAR(sum, rec.total, 1e-12);
    EXPECT_EQ(rec.gates.size(), 2u);
    EXPECT_EQ(rec.task_histogram.size(), 5u);
    std::size_t picks = 0;
    for (auto c : rec.task_histogram) picks += c;
    EXPECT_EQ(picks, cfg.batch_size * 2);
    EXPECT_TRUE(std::isfinite(rec.grad_norm));
  }
  EXPECT_TRUE(t.finished());
  EXPECT_THROW(t.step(), std::logic_error);
}

TEST(Trainer, DeterministicGivenSeed) {
  Trainer a(tiny_train_config()), b(tiny_train_config());
  for (int i = 0; i < 3; ++i) EXPECT_EQ(a.step().total, b.step().total);
  EXPECT_EQ(param_values(a.model()), param_values(b.model()));
}

TEST(Trainer, ResumeIsBitExact) {
  const auto cfg = tiny_train_config(8);
  Trainer full(cfg, "text");
  std::vector<double> expect;
  for (int i = 0; i < 8; ++i) expect.push_back(full.step().total);

  Trainer first(cfg, "text");
  for (int i = 0; i < 3; ++i) EXPECT_EQ(first.step().total, expect[i]);
  const auto bytes = encode_checkpoint(first.checkpoint());

  Trainer resumed(cfg, "text");
  resumed.restore(decode_checkpoint(bytes));
  EXPECT_EQ(resumed.steps_done(), 3u);
  for (int i = 3; i < 8; ++i) EXPECT_EQ(resumed.step().total, expect[i]) << i;
  EXPECT_EQ(param_values(resumed.model()), param_values(full.model()));
}

TEST(Trainer, RestoreWithoutStepsKeepsParameters) {
  const auto cfg = tiny_train_config(2);
  Trainer a(cfg);
  a.step();
  a.step();
  const auto ckpt = a.checkpoint();
  Trainer b(cfg);
  b.restore(ckpt);
  EXPECT_TRUE(b.finished());
  EXPECT_EQ(param_values(b.model()), param_values(a.model()));
  EXPECT_EQ(b.checkpoint(), ckpt);
}

TEST(Trainer, EvaluationHasNoSideEffects) {
  Trainer t(tiny_train_config());
  t.step();
  const auto before = param_values(t.model());
  const auto rng_before = t.data_rng();
  const auto ckpt = t.checkpoint();
  const auto e1 = t.evaluate();
  const auto e2 = t.evaluate();
  EXPECT_EQ(param_values(t.model()), before);
  EXPECT_TRUE(t.data_rng() == rng_before);
  EXPECT_EQ(t.checkpoint(), ckpt);
  EXPECT_EQ(metrics_csv(e1), metrics_csv(e2));
}

TEST(Trainer, IntegrityCheckPasses) {
  Trainer t(tiny_train_config());
  const auto report = t.check_integrity(3);
  EXPECT_TRUE(report.passed());
  std::vector<std::string> modules;
  for (const auto &c : report.checks) {
    modules.push_back(c.module);
    EXPECT_EQ(parameter_module(c.parameter), c.module);
  }
  for (const char *m : {"backbone", "pools.task", "pools.domain", "projector.task", "projector.domain", "fusion"})
    EXPECT_NE(std::ranges::find(modules, m), modules.end()) << m;
}

TEST(Trainer, RejectsInvalidConfig) {
  auto cfg = tiny_train_config();
  cfg.synth.image_size = 9;
  EXPECT_THROW(Trainer{cfg}, std::invalid_argument);
}

TEST(Evaluate, ReportShapeAndCsv) {
  const auto cfg = tiny_train_config();
  const auto model = RestorationModel::create(cfg.model, 1);
  const auto oracle = TextOracle::create(cfg.model.prompts.dim, cfg.synth.text_seed);
  const auto report = evaluate(model, cfg.synth, oracle, cfg.eval);
  ASSERT_EQ(report.cells.size(), 6u);
  // Untrained model is the identity: output and degraded input score the same.
  for (const auto &c : report.cells) {
    EXPECT_DOUBLE_EQ(c.psnr, c.psnr_lq);
    EXPECT_EQ(c.n, 1u);
  }
  EXPECT_DOUBLE_EQ(report.task_psnr(TaskId::haze), report.task_psnr_lq(TaskId::haze));
  const auto csv = metrics_csv(report);
  EXPECT_EQ(csv.rfind("domain,task,psnr_db,ssim,n\n", 0), 0u);
  EXPECT_EQ(std::ranges::count(csv, '\n'), 7);
}

TEST(ParameterModule, Names) {
  EXPECT_EQ(parameter_module("backbone.enc0.block0.weight"), "backbone");
  EXPECT_EQ(parameter_module("pools.task.keys"), "pools.task");
  EXPECT_EQ(parameter_module("projector.domain.fc1.bias"), "projector.domain");
  EXPECT_EQ(parameter_module("fusion.site1.attn.w_q"), "fusion");
}

TEST(History, JsonRecords) {
  Trainer t(tiny_train_config());
  const auto line = step_json(t.step());
  EXPECT_EQ(line.find('\n'), std::string::npos);
  for (const char *key : {"\"step\":1", "\"total\"", "\"lr\"", "\"gates\"", "\"pix\""})
    EXPECT_NE(line.find(key), std::string::npos) << key << " in " << line;
}
