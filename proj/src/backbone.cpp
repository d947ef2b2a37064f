// SPDX-License-Identifier: Apache-2.0

#include "datprl/backbone.hpp"

#include <cmath>

namespace datprl {

void BackboneConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("backbone.levels must be at least 1");
  if (channels.size() != levels)
    throw std::invalid_argument("backbone.channels lists " + std::to_string(channels.size()) +
                                " widths for " + std::to_string(levels) + " levels");
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (channels[i] == 0) throw std::invalid_argument("backbone.channels must be positive");
    if (i > 0 && channels[i] <= channels[i - 1])
      throw std::invalid_argument("backbone.channels must be strictly increasing");
  }
  if (image_channels == 0) throw std::invalid_argument("image channels must be positive");
}

void PromptConfig::validate() const {
  if (dim == 0 || tokens == 0) throw std::invalid_argument("pools.dim and pools.tokens must be positive");
  for (const auto *p : {&task, &domain}) {
    if (!p->enabled) continue;
    const char *name = p == &task ? "task" : "domain";
    if (p->prompts == 0)
      throw std::invalid_argument(std::string("pools.") + name + ".N must be positive");
    if (p->topk < 1 || p->topk > p->prompts)
      throw std::invalid_argument(std::string("pools.") + name + ".topk must lie in [1, N]");
    if (!(p->temperature > 0.0))
      throw std::invalid_argument(std::string("pools.") + name + ".temperature must be positive");
  }
}

void ModelConfig::validate() const {
  backbone.validate();
  prompts.validate();
}

namespace {

Tensor block(const Conv2d &conv, const Tensor &x) { return add(x, silu(conv(x))); }

} // namespace

RestorationModel RestorationModel::create(const ModelConfig &config, std::uint64_t seed) {
  config.validate();
  RestorationModel m;
  m.config_ = config;
  Rng rng(seed);
  const auto &bb = config.backbone;
  const auto &ch = bb.channels;
  const std::size_t L = bb.levels;

  m.stem_ = Conv2d::create(bb.image_channels, ch[0], 3, 1, rng);
  m.enc_blocks_.resize(L);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t b = 0; b < bb.blocks; ++b)
      m.enc_blocks_[i].push_back(Conv2d::create(ch[i], ch[i], 3, 1, rng));
    if (i + 1 < L) m.down_.push_back(Conv2d::create(ch[i], ch[i + 1], 3, 2, rng));
  }
  m.up_.resize(L > 0 ? L - 1 : 0);
  m.merge_.resize(m.up_.size());
  m.dec_blocks_.resize(m.up_.size());
  for (std::size_t i = L - 1; i-- > 0;) {
    m.up_[i] = Conv2d::create(ch[i + 1], ch[i], 3, 1, rng);
    m.merge_[i] = Conv2d::create(2 * ch[i], ch[i], 1, 1, rng);
    for (std::size_t b = 0; b < bb.blocks; ++b)
      m.dec_blocks_[i].push_back(Conv2d::create(ch[i], ch[i], 3, 1, rng));
  }
  m.head_ = Conv2d::create(ch[0], bb.image_channels, 3, 1, rng, Init::zero);

  const auto &pc = config.prompts;
  if (pc.task.enabled) {
    m.task_pool_ = init_pool(PoolKind::task, pc.task.prompts, pc.tokens, pc.dim, pc.task.temperature, rng);
    m.task_projector_ = QueryProjector::create(ch[L - 1], pc.dim, rng);
  }
  if (pc.domain.enabled) {
    m.domain_pool_ = init_pool(PoolKind::domain, pc.domain.prompts, pc.tokens, pc.dim,
                               pc.domain.temperature, rng);
    m.domain_projector_ = QueryProjector::create(ch[0], pc.dim, rng);
  }
  if (pc.task.enabled && pc.domain.enabled) m.prompt_fusion_ = CrossAttention::create(pc.dim, rng);
  const std::size_t sites = config.injection_sites();
  m.gates_ = GateSet::create(sites == 0 ? 1 : sites, config.fusion.gate_init);
  if (sites > 0) {
    m.sites_.push_back(InjectionSite::create(pc.dim, ch[L - 1], rng));
    for (std::size_t i = L - 1; i-- > 0;) m.sites_.push_back(InjectionSite::create(pc.dim, ch[i], rng));
  }
  return m;
}

ForwardResult RestorationModel::forward(const Tensor &lq) const {
  const auto &bb = config_.backbone;
  const std::size_t L = bb.levels;
  if (lq.rank() != 3 || lq.dim(0) != bb.image_channels)
    throw ShapeError("forward: expected [" + std::to_string(bb.image_channels) +
                     ",h,w] input, got " + shape_str(lq.shape()));
  const std::size_t div = bb.size_divisor();
  if (lq.dim(1) % div != 0 || lq.dim(2) % div != 0)
    throw ShapeError("forward: spatial size " + shape_str(lq.shape()) + " not divisible by " +
                     std::to_string(div));

  ForwardResult result;
  auto shallow = silu(stem_(lq));
  std::vector<Tensor> skips;
  Tensor feat = shallow;
  for (std::size_t i = 0; i < L; ++i) {
    for (const auto &conv : enc_blocks_[i]) feat = block(conv, feat);
    if (i + 1 < L) {
      skips.push_back(feat);
      feat = silu(down_[i](feat));
    }
  }

  std::optional<Tensor> pr_dt;
  if (task_pool_) {
    auto q = compute_query(*task_projector_, feat);
    auto sel = select_top_k(*task_pool_, q, config_.prompts.task.topk);
    result.pr_task = compose(sel, *task_pool_);
    result.task_query = q;
    result.diag.task_selection = std::move(sel);
  }
  if (domain_pool_) {
    auto q = compute_query(*domain_projector_, shallow);
    auto sel = select_top_k(*domain_pool_, q, config_.prompts.domain.topk);
    result.pr_domain = compose(sel, *domain_pool_);
    result.domain_query = q;
    result.diag.domain_selection = std::move(sel);
  }
  if (result.pr_task && result.pr_domain)
    pr_dt = fuse_representations(*prompt_fusion_, *result.pr_task, *result.pr_domain);
  else if (result.pr_task)
    pr_dt = result.pr_task;
  else if (result.pr_domain)
    pr_dt = result.pr_domain;

  std::size_t site = 0;
  auto inject = [&](const Tensor &x) {
    if (!pr_dt) return x;
    const auto &s = sites_[site];
    auto out = gated_inject(s.attn, x, *pr_dt, gates_.alpha(site), s.adapter, config_.fusion.residual);
    ++site;
    return out;
  };

  feat = inject(feat);
  for (std::size_t i = L - 1; i-- > 0;) {
    feat = silu(up_[i](upsample_nearest2x(feat)));
    feat = merge_[i](concat({feat, skips[i]}, 0));
    for (const auto &conv : dec_blocks_[i]) feat = block(conv, feat);
    feat = inject(feat);
  }
  result.restored = add(lq, head_(feat));

  if (pr_dt) {
    result.diag.gate_values = gates_.alphas();
    double s = 0.0;
    for (double v : pr_dt->data()) s += v * v;
    result.diag.pr_dt_norm = std::sqrt(s);
    result.pr_dt = pr_dt;
  }
  return result;
}

std::vector<NamedTensor> RestorationModel::parameters() const {
  std::vector<NamedTensor> out;
  const std::size_t L = config_.backbone.levels;
  stem_.collect("backbone.stem", out);
  for (std::size_t i = 0; i < L; ++i) {
    for (std::size_t b = 0; b < enc_blocks_[i].size(); ++b)
      enc_blocks_[i][b].collect("backbone.enc" + std::to_string(i) + ".block" + std::to_string(b), out);
    if (i + 1 < L) down_[i].collect("backbone.down" + std::to_string(i), out);
  }
  for (std::size_t i = L - 1; i-- > 0;) {
    up_[i].collect("backbone.up" + std::to_string(i), out);
    merge_[i].collect("backbone.merge" + std::to_string(i), out);
    for (std::size_t b = 0; b < dec_blocks_[i].size(); ++b)
      dec_blocks_[i][b].collect("backbone.dec" + std::to_string(i) + ".block" + std::to_string(b), out);
  }
  head_.collect("backbone.head", out);
  if (task_pool_) {
    task_pool_->collect("pools.task", out);
    task_projector_->collect("projector.task", out);
  }
  if (domain_pool_) {
    domain_pool_->collect("pools.domain", out);
    domain_projector_->collect("projector.domain", out);
  }
  if (prompt_fusion_) prompt_fusion_->collect("fusion.prompt", out);
  if (!sites_.empty()) {
    out.emplace_back("fusion.gates", gates_.raw);
    for (std::size_t s = 0; s < sites_.size(); ++s) sites_[s].collect("fusion.site" + std::to_string(s), out);
  }
  return out;
}

std::size_t parameter_count_formula(const ModelConfig &config) {
  const auto &bb = config.backbone;
  const auto &c = bb.channels;
  const std::size_t L = bb.levels, B = bb.blocks, C = bb.image_channels;
  auto conv = [](std::size_t i, std::size_t o, std::size_t k) { return o * i * k * k + o; };
  std::size_t n = conv(C, c[0], 3) + conv(c[0], C, 3);
  for (std::size_t i = 0; i < L; ++i) n += B * conv(c[i], c[i], 3);
  for (std::size_t i = 0; i + 1 < L; ++i)
    n += conv(c[i], c[i + 1], 3) + conv(c[i + 1], c[i], 3) + conv(2 * c[i], c[i], 1) +
         B * conv(c[i], c[i], 3);
  const auto &pc = config.prompts;
  const std::size_t d = pc.dim, T = pc.tokens;
  auto pool = [&](std::size_t N) { return N * d + N * T * d; };
  auto projector = [&](std::size_t ch) { return 2 * conv(ch, ch, 3) + (ch * d + d) + (d * d + d); };
  if (pc.task.enabled) n += pool(pc.task.prompts) + projector(c[L - 1]);
  if (pc.domain.enabled) n += pool(pc.domain.prompts) + projector(c[0]);
  if (pc.task.enabled && pc.domain.enabled) n += 4 * d * d;
  if (pc.any_enabled())
    for (std::size_t i = 0; i < L; ++i) n += 4 * c[i] * c[i] + d * c[i] + c[i] + 1;
  return n;
}

} // namespace datprl
