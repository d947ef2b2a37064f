// SPDX-License-Identifier: Apache-2.0

#include "datprl/gradient_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "datprl/backbone.hpp"
#include "datprl/gradcheck.hpp"
#include "datprl/ops.hpp"
#include "datprl/regularizers.hpp"
#include "datprl/trainer.hpp"

namespace datprl {

namespace {

struct Instance {
  std::function<Tensor()> loss;
  std::vector<NamedTensor> leaves;
};

Tensor leaf(Shape shape, Rng &rng, double sd = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto &x : v) x = rng.normal(0.0, sd);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor fixed(Shape shape, Rng &rng, double sd = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto &x : v) x = rng.normal(0.0, sd);
  return Tensor(std::move(shape), std::move(v));
}

// Scalarizes a tensor output with fixed random weights.
Tensor project(const Tensor &out, const Tensor &weights) { return sum(out * weights); }

// Identity forward whose backward scales the incoming gradient by 1.5.
Tensor corrupted_identity(const Tensor &x) {
  std::vector<double> v(x.data().begin(), x.data().end());
  return detail::make_result(x.shape(), std::move(v), "corrupted_identity", {x}, [](detail::Node &self) {
    auto g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 1.5 * self.grad[i];
  });
}

// Minimum gap between consecutive sorted similarities around position k.
double selection_margin(const PromptSelection &sel) {
  std::vector<double> s(sel.all_similarities.data().begin(), sel.all_similarities.data().end());
  std::sort(s.begin(), s.end(), std::greater<>());
  const std::size_t k = sel.indices.size();
  return k < s.size() ? s[k - 1] - s[k] : 1.0;
}

std::vector<NamedTensor> make_leaves(const std::vector<NamedTensor> &params) {
  std::vector<NamedTensor> out;
  for (const auto &p : params) out.push_back(p);
  return out;
}

Instance l_pix(Rng &rng) {
  auto restored = leaf({3, 8, 8}, rng, 0.3);
  std::vector<double> h(restored.data().begin(), restored.data().end());
  for (auto &v : h) {
    double d = rng.normal(0.0, 0.2);
    while (std::abs(d) < 1e-2) d = rng.normal(0.0, 0.2);
    v += d;
  }
  Tensor hq({3, 8, 8}, std::move(h));
  return {[=] { return reconstruction_losses(restored, hq).pix; }, {{"restored", restored}}};
}

Instance l_fft(Rng &rng) {
  for (;;) {
    auto restored = leaf({3, 8, 8}, rng, 0.3);
    auto hq = fixed({3, 8, 8}, rng, 0.3);
    NoGradGuard g;
    auto spec = dft2(restored - hq);
    bool ok = true;
    for (const auto *part : {&spec.real, &spec.imag})
      for (double v : part->data())
        if (std::abs(v) > 1e-9 && std::abs(v) < 1e-3) ok = false;
    if (ok) return {[=] { return reconstruction_losses(restored, hq).fft; }, {{"restored", restored}}};
  }
}

Instance l_align(Rng &rng) {
  std::vector<Tensor> reps, texts;
  std::vector<NamedTensor> leaves;
  for (std::size_t b = 0; b < 3; ++b) {
    reps.push_back(leaf({2, 8}, rng));
    texts.push_back(fixed({8}, rng));
    leaves.push_back({"rep" + std::to_string(b), reps.back()});
  }
  const auto pooling = rng.index(2) ? AlignPooling::mean : AlignPooling::first_token;
  return {[=] { return alignment_loss(reps, texts, pooling); }, leaves};
}

Instance l_div(Rng &rng) {
  for (;;) {
    auto base = fixed({1, 2, 4}, rng);
    std::vector<double> v;
    for (std::size_t i = 0; i < 5; ++i)
      for (double b : base.data()) v.push_back(b * rng.uniform(0.0, 1.0) + rng.normal(0.0, 0.8));
    Tensor values({5, 2, 4}, std::move(v), true);
    NoGradGuard g;
    auto flat = l2_normalize_rows(reshape(values, {5, 8}));
    auto s = matmul(flat, transpose(flat));
    bool ok = true, active = false;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        if (i == j) continue;
        const double sij = s.at(i * 5 + j);
        if (std::abs(sij - 0.1) < 1e-3) ok = false;
        if (sij > 0.1) active = true;
      }
    if (ok && active) return {[=] { return diversity_loss(values, 0.1); }, {{"values", values}}};
  }
}

Instance l_bal(Rng &rng) {
  auto logits = leaf({6}, rng);
  return {[=] { return balance_loss(softmax(logits)); }, {{"logits", logits}}};
}

Instance l_con(Rng &rng) {
  auto q = leaf({8}, rng), pos = leaf({2, 8}, rng), neg = leaf({4, 8}, rng);
  const double tau = rng.uniform(0.1, 1.0);
  return {[=] { return contrastive_loss(q, pos, neg, tau); }, {{"query", q}, {"positive", pos}, {"negative", neg}}};
}

Instance projector(Rng &rng) {
  auto proj = QueryProjector::create(4, 8, rng);
  auto features = leaf({4, 8, 8}, rng);
  auto w = fixed({8}, rng);
  std::vector<NamedTensor> leaves{{"features", features}};
  proj.collect("projector", leaves);
  return {[=] { return project(compute_query(proj, features), w); }, leaves};
}

Instance pcm(Rng &rng) {
  for (;;) {
    auto pool = init_pool(PoolKind::task, 6, 2, 8, rng.uniform(0.5, 2.0), rng);
    for (auto *t : {&pool.keys, &pool.values})
      for (auto &v : t->mutable_data()) v = rng.normal();
    auto query = leaf({8}, rng);
    const std::size_t k = 1 + rng.index(3);
    NoGradGuard g;
    if (selection_margin(select_top_k(pool, query, k)) < 1e-3) continue;
    auto w = fixed({2, 8}, rng);
    std::vector<NamedTensor> leaves{{"query", query}};
    pool.collect("pool", leaves);
    return {[=] { return project(compose(select_top_k(pool, query, k), pool), w); }, leaves};
  }
}

Instance cross_attention(Rng &rng) {
  auto attn = CrossAttention::create(8, rng, false);
  auto pr_t = leaf({2, 8}, rng), pr_d = leaf({2, 8}, rng);
  auto w = fixed({2, 8}, rng);
  std::vector<NamedTensor> leaves{{"pr_task", pr_t}, {"pr_domain", pr_d}};
  attn.collect("attn", leaves);
  return {[=] { return project(fuse_representations(attn, pr_t, pr_d), w); }, leaves};
}

Instance agf(Rng &rng) {
  auto site = InjectionSite::create(8, 4, rng);
  for (auto &v : site.attn.w_o.mutable_data()) v = rng.normal(0.0, 0.5);
  auto gates = GateSet::create(1, rng.normal());
  auto feature = leaf({4, 4, 4}, rng), pr = leaf({2, 8}, rng);
  auto w = fixed({4, 4, 4}, rng);
  const bool residual = rng.index(2) == 1;
  std::vector<NamedTensor> leaves{{"feature", feature}, {"pr_dt", pr}, {"gates", gates.raw}};
  site.collect("site", leaves);
  return {[=] { return project(gated_inject(site.attn, feature, pr, gates.alpha(0), site.adapter, residual), w); },
          leaves};
}

Instance backbone(Rng &rng) {
  ModelConfig mc;
  mc.backbone.levels = 2;
  mc.backbone.channels = {4, 8};
  mc.prompts.dim = 8;
  mc.prompts.task = {true, 5, 2, 1.0};
  mc.prompts.domain = {true, 5, 3, 1.0};
  mc.fusion.gate_init = 0.3;
  SynthConfig sc;
  sc.image_size = 8;
  for (;;) {
    auto model = RestorationModel::create(mc, rng.next_u64());
    for (const auto &[name, p] : model.parameters()) {
      Tensor t = p;
      auto d = t.mutable_data();
      if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; }))
        for (auto &v : d) v = rng.normal(0.0, 0.1);
      if (name.starts_with("pools."))
        for (auto &v : d) v = rng.normal();
    }
    const auto oracle = TextOracle::create(mc.prompts.dim, rng.next_u64());
    std::vector<SyntheticSample> samples;
    for (auto d : sc.domains) samples.push_back(make_sample(sc, oracle, d, sc.tasks[rng.index(2)], 8, rng));
    bool ok = true;
    {
      NoGradGuard g;
      for (const auto &s : samples) {
        const auto r = model.forward(s.lq);
        if (selection_margin(*r.diag.task_selection) < 1e-4 || selection_margin(*r.diag.domain_selection) < 1e-4)
          ok = false;
        auto diff = r.restored - s.hq;
        for (double v : diff.data())
          if (std::abs(v) < 1e-4) ok = false;
      }
    }
    if (!ok) continue;
    const LossWeights weights;
    const RegularizerConfig reg;
    auto loss = [=] {
      std::vector<ForwardResult> outs;
      for (const auto &s : samples) outs.push_back(model.forward(s.lq));
      return total_loss(model, outs, samples, weights, reg).total;
    };
    return {loss, make_leaves(model.parameters())};
  }
}

struct Component {
  std::string name;
  bool end_to_end;
  std::function<Instance(Rng &)> make;
  std::size_t coords;
};

const std::vector<Component> &components() {
  static const std::vector<Component> list = {
      {"l_pix", false, l_pix, 24},          {"l_fft", false, l_fft, 24},
      {"l_align", false, l_align, 16},      {"l_div", false, l_div, 24},
      {"l_bal", false, l_bal, 6},           {"l_con", false, l_con, 12},
      {"projector", false, projector, 6},   {"pcm", false, pcm, 8},
      {"cross_attention", false, cross_attention, 8}, {"agf", false, agf, 6},
      {"backbone", true, backbone, 3},
  };
  return list;
}

} // namespace

const std::vector<std::string> &suite_components() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto &c : components()) n.push_back(c.name);
    return n;
  }();
  return names;
}

bool SuiteReport::passed() const {
  return std::all_of(components.begin(), components.end(), [](const ComponentReport &c) { return c.passed; });
}

std::vector<std::string> SuiteReport::failing() const {
  std::vector<std::string> out;
  for (const auto &c : components)
    if (!c.passed) out.push_back(c.name);
  return out;
}

SuiteReport run_gradient_suite(const SuiteOptions &options) {
  const auto &names = suite_components();
  for (const auto &o : options.only)
    if (std::find(names.begin(), names.end(), o) == names.end())
      throw std::invalid_argument("unknown gradient-suite component '" + o + "'");
  if (!options.inject_fault.empty() &&
      std::find(names.begin(), names.end(), options.inject_fault) == names.end())
    throw std::invalid_argument("unknown gradient-suite component '" + options.inject_fault + "'");

  SuiteReport report;
  for (std::size_t ci = 0; ci < components().size(); ++ci) {
    const auto &c = components()[ci];
    if (!options.only.empty() && std::find(options.only.begin(), options.only.end(), c.name) == options.only.end())
      continue;
    ComponentReport cr;
    cr.name = c.name;
    cr.tolerance = c.end_to_end ? options.end_to_end_tolerance : options.loss_tolerance;
    for (std::size_t s = 0; s < options.seeds; ++s) {
      const std::uint64_t seed = options.seed * 1000003ULL + ci * 104729ULL + s * 7919ULL;
      Rng rng(seed);
      auto inst = c.make(rng);
      auto loss_fn = inst.loss;
      if (options.inject_fault == c.name) loss_fn = [f = inst.loss] { return corrupted_identity(f()); };
      if (s == 0) {
        const auto tape = Tape::record(loss_fn());
        for (const auto &n : tape.nodes()) ++cr.op_counts[n->op.empty() ? std::string("leaf") : std::string(n->op)];
      }
      const auto res = check_gradients(loss_fn, inst.leaves, options.eps, c.coords, seed ^ 0x5bd1e995ULL);
      cr.coordinates += res.coordinates;
      ++cr.seeds;
      if (s == 0 || res.max_rel_error > cr.max_rel_error) {
        cr.max_rel_error = res.max_rel_error;
        cr.worst_seed = seed;
      }
    }
    cr.passed = cr.max_rel_error <= cr.tolerance;
    report.components.push_back(std::move(cr));
  }
  return report;
}

std::string format_report(const SuiteReport &report) {
  std::string out;
  char buf[256];
  for (const auto &c : report.components) {
    std::size_t ops = 0;
    for (const auto &[op, n] : c.op_counts) ops += n;
    std::snprintf(buf, sizeof buf, "%-16s %s  max_rel_err %.3e  tol %.0e  seeds %zu  coords %zu  nodes %zu\n",
                  c.name.c_str(), c.passed ? "ok  " : "FAIL", c.max_rel_error, c.tolerance, c.seeds, c.coordinates,
                  ops);
    out += buf;
    out += "    ops:";
    for (const auto &[op, n] : c.op_counts) out += " " + op + "=" + std::to_string(n);
    out += "\n";
  }
  out += report.passed() ? "all components passed\n" : "FAILED:";
  if (!report.passed()) {
    for (const auto &f : report.failing()) out += " " + f;
    out += "\n";
  }
  return out;
}

} // namespace datprl
