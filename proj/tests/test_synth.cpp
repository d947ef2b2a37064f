// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <map>

#include "datprl/metrics.hpp"
#include "datprl/ops.hpp"
#include "datprl/synth.hpp"

using namespace datprl;

namespace {

const DomainId kDomains[] = {DomainId::natural, DomainId::medical, DomainId::remote};
const TaskId kTasks[] = {TaskId::noise, TaskId::blur, TaskId::streak, TaskId::downsample, TaskId::mask, TaskId::haze};

double norm(const Tensor &t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

} // namespace

TEST(GenerateHq, RangeAndShape) {
  Rng rng(1);
  for (auto d : kDomains) {
    const auto img = generate_hq(d, 32, rng);
    EXPECT_EQ(img.shape(), (Shape{3, 32, 32}));
    for (double v : img.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(GenerateHq, MedicalIsGrayscale) {
  Rng rng(2);
  const auto img = generate_hq(DomainId::medical, 16, rng);
  for (std::size_t i = 0; i < 256; ++i) {
    EXPECT_EQ(img.at(i), img.at(256 + i));
    EXPECT_EQ(img.at(i), img.at(512 + i));
  }
}

TEST(GenerateHq, Deterministic) {
  for (auto d : kDomains) {
    Rng a(5), b(5);
    EXPECT_TRUE(std::ranges::equal(generate_hq(d, 16, a).data(), generate_hq(d, 16, b).data()));
  }
}

TEST(GenerateHq, RejectsBadSize) {
  Rng rng(1);
  EXPECT_THROW(generate_hq(DomainId::natural, 0, rng), std::invalid_argument);
}

TEST(Degrade, ZeroNoiseIsIdentity) {
  Rng rng(3);
  const auto hq = generate_hq(DomainId::natural, 16, rng);
  TaskSpec spec{TaskId::noise, {}};
  spec.params.noise_sigma = 0.0;
  const auto lq = degrade(hq, spec, rng);
  EXPECT_TRUE(std::ranges::equal(lq.data(), hq.data()));
}

TEST(Degrade, BlurKeepsConstant) {
  Rng rng(4);
  const auto hq = Tensor::full({3, 16, 16}, 0.37);
  const auto lq = degrade(hq, TaskSpec{TaskId::blur, {}}, rng);
  for (double v : lq.data()) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(Degrade, HazeEndpoints) {
  Rng rng(5);
  const auto hq = generate_hq(DomainId::remote, 16, rng);
  TaskSpec spec{TaskId::haze, {}};
  spec.params.haze_t_min = spec.params.haze_t_max = 1.0;
  const auto clear = degrade(hq, spec, rng);
  EXPECT_TRUE(std::ranges::equal(clear.data(), hq.data()));
  spec.params.haze_t_min = spec.params.haze_t_max = 0.0;
  const auto hazed = degrade(hq, spec, rng);
  for (double v : hazed.data()) EXPECT_DOUBLE_EQ(v, spec.params.airlight);
}

TEST(Degrade, PreservesShapeAndRange) {
  Rng rng(6);
  for (auto d : kDomains)
    for (auto t : kTasks) {
      const auto hq = generate_hq(d, 32, rng);
      const auto lq = degrade(hq, TaskSpec{t, {}}, rng);
      EXPECT_EQ(lq.shape(), hq.shape());
      for (double v : lq.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
      EXPECT_FALSE(std::ranges::equal(lq.data(), hq.data())) << to_string(d) << "/" << to_string(t);
    }
}

TEST(Degrade, DegradationStrengthBand) {
  Rng rng(7);
  for (auto t : kTasks) {
    double total = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto hq = generate_hq(kDomains[i % 3], 32, rng);
      total += psnr(degrade(hq, TaskSpec{t, {}}, rng), hq);
    }
    const double m = total / 100.0;
    EXPECT_GE(m, 12.0) << to_string(t);
    EXPECT_LE(m, 35.0) << to_string(t);
  }
}

TEST(Degrade, InvalidParams) {
  Rng rng(8);
  TaskSpec spec{TaskId::haze, {}};
  spec.params.haze_t_min = 0.9;
  spec.params.haze_t_max = 0.2;
  EXPECT_THROW(degrade(Tensor::zeros({3, 4, 4}), spec, rng), std::invalid_argument);
}

TEST(TextOracle, AnchorsAreDissimilar) {
  const auto o = TextOracle::create(64, 7);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j)
      EXPECT_LT(cosine_similarity(o.anchor(kDomains[i]), o.anchor(kDomains[j])).item(), 0.3);
}

TEST(TextFeature, UnitNorm) {
  const auto o = TextOracle::create(16, 7);
  Rng rng(9);
  for (int i = 0; i < 50; ++i)
    EXPECT_NEAR(norm(text_feature(o, kDomains[i % 3], kTasks[i % 6], rng, 0.3)), 1.0, 1e-12);
}

TEST(TextFeature, NoJitterNoOffsetIsAnchor) {
  const auto o = TextOracle::create(16, 7);
  Rng rng(10);
  for (auto d : kDomains) {
    const auto f = text_feature(o, d, TaskId::haze, rng, 0.0, false);
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(f.at(i), o.anchor(d).at(i), 1e-15);
  }
}

TEST(TextFeature, ClosestToOwnAnchor) {
  const auto o = TextOracle::create(64, 7);
  Rng rng(11);
  std::size_t own = 0;
  double own_cos = 0.0, other_cos = 0.0;
  const int draws = 1000;
  for (int i = 0; i < draws; ++i) {
    const auto d = kDomains[i % 3];
    const auto f = text_feature(o, d, kTasks[i % 6], rng, 0.1);
    double best = -2.0;
    DomainId arg = d;
    for (auto e : kDomains) {
      const double c = cosine_similarity(f, o.anchor(e)).item();
      if (e == d) own_cos += c;
      else other_cos += c / 2.0;
      if (c > best) best = c, arg = e;
    }
    if (arg == d) ++own;
  }
  EXPECT_GT(own_cos / draws, other_cos / draws);
  EXPECT_GE(static_cast<double>(own) / draws, 0.95);
}

TEST(BalancedBatch, EvenSplit) {
  SynthConfig c;
  const auto o = TextOracle::create(8, 1);
  Rng rng(12);
  const auto batch = balanced_batch(c, o, 12, rng);
  ASSERT_EQ(batch.size(), 12u);
  std::map<DomainId, int> counts;
  std::map<std::pair<DomainId, TaskId>, int> cells;
  for (const auto &s : batch) {
    ++counts[s.domain];
    ++cells[{s.domain, s.task}];
    EXPECT_NEAR(norm(s.text_feature), 1.0, 1e-12);
  }
  for (auto d : kDomains) EXPECT_EQ(counts[d], 4);
  for (const auto &[cell, n] : cells) EXPECT_EQ(n, 2);
}

TEST(BalancedBatch, UnevenSplitDiffersByOne) {
  SynthConfig c;
  const auto o = TextOracle::create(8, 1);
  Rng rng(13);
  std::map<DomainId, int> extra_hits;
  for (int rep = 0; rep < 30; ++rep) {
    std::map<DomainId, int> counts;
    for (const auto &s : balanced_batch(c, o, 7, rng)) ++counts[s.domain];
    std::vector<int> v;
    for (auto d : kDomains) v.push_back(counts[d]);
    std::ranges::sort(v);
    EXPECT_EQ(v, (std::vector<int>{2, 2, 3}));
    for (auto d : kDomains)
      if (counts[d] == 3) ++extra_hits[d];
  }
  EXPECT_EQ(extra_hits.size(), 3u);
}

TEST(BalancedBatch, Deterministic) {
  SynthConfig c;
  const auto o = TextOracle::create(8, 1);
  Rng a(14), b(14);
  const auto x = balanced_batch(c, o, 6, a), y = balanced_batch(c, o, 6, b);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(x[i].domain, y[i].domain);
    EXPECT_EQ(x[i].task, y[i].task);
    EXPECT_TRUE(std::ranges::equal(x[i].lq.data(), y[i].lq.data()));
  }
}

TEST(BalancedBatch, TooSmall) {
  SynthConfig c;
  const auto o = TextOracle::create(8, 1);
  Rng rng(15);
  EXPECT_THROW(balanced_batch(c, o, 2, rng), std::invalid_argument);
}

TEST(EvaluationSet, CellMajorAndSeeded) {
  SynthConfig c;
  const auto o = TextOracle::create(8, 1);
  const auto a = evaluation_set(c, o, 2, 16, 99), b = evaluation_set(c, o, 2, 16, 99);
  ASSERT_EQ(a.size(), 12u);
  EXPECT_EQ(a[0].domain, DomainId::natural);
  EXPECT_EQ(a[2].task, TaskId::haze);
  EXPECT_EQ(a[11].domain, DomainId::remote);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(std::ranges::equal(a[i].lq.data(), b[i].lq.data()));
}

TEST(Names, RoundTrip) {
  for (auto d : kDomains) EXPECT_EQ(parse_domain(to_string(d)), d);
  for (auto t : kTasks) EXPECT_EQ(parse_task(to_string(t)), t);
  EXPECT_THROW(parse_task("sharpen"), std::invalid_argument);
}
