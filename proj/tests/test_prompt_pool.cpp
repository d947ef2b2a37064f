// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "datprl/ops.hpp"
#include "datprl/prompt_pool.hpp"
#include "test_util.hpp"

using namespace datprl;
using datprl::testing::random_tensor;

namespace {

PromptPool pool_from(Tensor keys, Tensor values, double temperature = 1.0) {
  PromptPool p;
  p.keys = std::move(keys);
  p.values = std::move(values);
  p.temperature = temperature;
  return p;
}

// Normalize first, so duplicated and power-of-two scaled rows give bitwise equal cosines.
std::vector<double> oracle_cosines(const Tensor &keys, const Tensor &q) {
  const std::size_t n = keys.dim(0), d = keys.dim(1);
  auto unit = [d](const double *v) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += v[j] * v[j];
    std::vector<double> u(v, v + d);
    for (auto &x : u) x /= std::sqrt(s);
    return u;
  };
  const auto qu = unit(q.data().data());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ku = unit(keys.data().data() + i * d);
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += ku[j] * qu[j];
    out[i] = dot;
  }
  return out;
}

std::vector<std::size_t> brute_force_top_k(const std::vector<double> &sims, std::size_t k) {
  std::vector<std::size_t> all(sims.size());
  std::iota(all.begin(), all.end(), 0);
  std::sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return a < b;
  });
  all.resize(k);
  return all;
}

} // namespace

TEST(InitPool, FullScaleShapes) {
  Rng rng(1);
  const auto p = init_pool(PoolKind::task, 15, 2, 1024, 1.0, rng);
  EXPECT_EQ(p.keys.shape(), (Shape{15, 1024}));
  EXPECT_EQ(p.values.shape(), (Shape{15, 2, 1024}));
}

TEST(InitPool, SmallShapesAndDeterminism) {
  Rng a(9), b(9);
  const auto p = init_pool(PoolKind::domain, 4, 2, 8, 1.0, a);
  const auto q = init_pool(PoolKind::domain, 4, 2, 8, 1.0, b);
  EXPECT_EQ(p.keys.shape(), (Shape{4, 8}));
  EXPECT_EQ(p.values.shape(), (Shape{4, 2, 8}));
  EXPECT_TRUE(std::ranges::equal(p.keys.data(), q.keys.data()));
  EXPECT_TRUE(std::ranges::equal(p.values.data(), q.values.data()));
  EXPECT_TRUE(p.keys.requires_grad());
}

TEST(ComputeQuery, ZeroFeaturesGiveZeroQuery) {
  Rng rng(2);
  const auto proj = QueryProjector::create(4, 6, rng);
  const auto q = compute_query(proj, Tensor::zeros({4, 5, 5}));
  ASSERT_EQ(q.numel(), 6u);
  for (double v : q.data()) EXPECT_EQ(v, 0.0);
}

TEST(ComputeQuery, LinearWithIdentityActivation) {
  Rng rng(3);
  auto proj = QueryProjector::create(3, 5, rng);
  proj.activation = Activation::identity;
  const auto x = random_tensor({3, 4, 4}, rng), y = random_tensor({3, 4, 4}, rng);
  const auto lhs = compute_query(proj, x * 2.0 + y * -0.5);
  const auto qx = compute_query(proj, x), qy = compute_query(proj, y);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(lhs.at(i), 2.0 * qx.at(i) - 0.5 * qy.at(i), 1e-12);
}

TEST(ComputeQuery, RejectsChannelMismatch) {
  Rng rng(3);
  const auto proj = QueryProjector::create(3, 5, rng);
  EXPECT_THROW(compute_query(proj, Tensor::zeros({4, 4, 4})), ShapeError);
}

TEST(SelectTopK, OrthonormalKeys) {
  std::vector<double> eye(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  const auto pool = pool_from(Tensor({4, 4}, eye), Tensor::zeros({4, 1, 4}));
  const auto sel = select_top_k(pool, Tensor::vector({0, 1, 0, 0}), 1);
  ASSERT_EQ(sel.indices.size(), 1u);
  EXPECT_EQ(sel.indices[0], 1u);
  EXPECT_NEAR(sel.similarities.at(0), 1.0, 1e-15);
}

TEST(SelectTopK, TiesBreakByLowerIndex) {
  const auto pool = pool_from(Tensor({3, 2}, {1, 1, 1, 1, 1, 1}), Tensor::zeros({3, 1, 2}));
  const auto sel = select_top_k(pool, Tensor::vector({0.3, -2.0}), 2);
  EXPECT_EQ(sel.indices, (std::vector<std::size_t>{0, 1}));
}

TEST(SelectTopK, MatchesBruteForce) {
  Rng rng(4);
  std::size_t mismatches = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 2 + rng.index(14), d = 1 + rng.index(8), k = 1 + rng.index(n);
    auto keys = random_tensor({n, d}, rng);
    if (rep % 4 == 0) {
      // Duplicate rows and power-of-two scaled copies force exact ties.
      const std::size_t src = rng.index(n), dst = rng.index(n);
      const double scale = rep % 8 == 0 ? 1.0 : 2.0;
      for (std::size_t j = 0; j < d; ++j) keys.mutable_data()[dst * d + j] = keys.at(src * d + j) * scale;
    }
    const auto pool = pool_from(keys, Tensor::zeros({n, 1, d}));
    const auto q = random_tensor({d}, rng);
    const auto sel = select_top_k(pool, q, k);
    const auto expect = brute_force_top_k(oracle_cosines(keys, q), k);
    if (sel.indices != expect) ++mismatches;
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(SelectTopK, RejectsBadK) {
  Rng rng(5);
  const auto pool = init_pool(PoolKind::task, 4, 1, 3, 1.0, rng);
  EXPECT_THROW(select_top_k(pool, Tensor::vector({1, 0, 0}), 0), std::out_of_range);
  EXPECT_THROW(select_top_k(pool, Tensor::vector({1, 0, 0}), 5), std::out_of_range);
}

TEST(SelectTopK, FullProbsIgnoreTemperature) {
  Rng rng(6);
  auto pool = init_pool(PoolKind::task, 5, 1, 4, 0.2, rng);
  const auto q = random_tensor({4}, rng);
  const auto sel = select_top_k(pool, q, 2);
  const auto ref = softmax(sel.all_similarities, 1.0);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(sel.full_probs.at(i), ref.at(i));
}

TEST(Compose, SingleSelectionReturnsValue) {
  Rng rng(7);
  const auto pool = init_pool(PoolKind::task, 5, 2, 3, 1.0, rng);
  const auto sel = select_top_k(pool, random_tensor({3}, rng), 1);
  const auto pr = compose(sel, pool);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(pr.at(i), pool.values.at(sel.indices[0] * 6 + i));
}

TEST(Compose, EqualSimilaritiesGiveMean) {
  Rng rng(8);
  const auto values = random_tensor({3, 2, 2}, rng);
  const auto pool = pool_from(Tensor({3, 2}, {1, 0, 1, 0, 1, 0}), values);
  const auto sel = select_top_k(pool, Tensor::vector({1, 0}), 3);
  const auto pr = compose(sel, pool);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(pr.at(i), (values.at(i) + values.at(4 + i) + values.at(8 + i)) / 3.0, 1e-15);
}

TEST(Compose, KnownWeightsAndWeightedSum) {
  // Keys at angles whose cosines with e1 are 0.9, 0.5, 0.1.
  std::vector<double> keys;
  for (double c : {0.1, 0.9, 0.5}) {
    keys.push_back(c);
    keys.push_back(std::sqrt(1.0 - c * c));
  }
  Rng rng(9);
  const auto values = random_tensor({3, 3, 2}, rng);
  const auto pool = pool_from(Tensor({3, 2}, keys), values);
  const auto sel = select_top_k(pool, Tensor::vector({1, 0}), 3);
  EXPECT_EQ(sel.indices, (std::vector<std::size_t>{1, 2, 0}));
  const double e[3] = {std::exp(0.9), std::exp(0.5), std::exp(0.1)};
  const double z = e[0] + e[1] + e[2];
  const double expect[3] = {0.47179, 0.31624, 0.21199};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(sel.weights.at(i), e[i] / z, 1e-12);
    EXPECT_NEAR(sel.weights.at(i), expect[i], 5e-5);
  }
  const auto pr = compose(sel, pool);
  for (std::size_t j = 0; j < 6; ++j) {
    double ref = 0.0;
    for (std::size_t i = 0; i < 3; ++i) ref += (e[i] / z) * values.at(sel.indices[i] * 6 + j);
    EXPECT_NEAR(pr.at(j), ref, 1e-12);
  }
}

TEST(Compose, WeightsSumToOneAndAreMonotone) {
  Rng rng(10);
  for (int rep = 0; rep < 200; ++rep) {
    const auto pool = init_pool(PoolKind::task, 8, 2, 6, rng.uniform(0.05, 3.0), rng);
    const auto sel = select_top_k(pool, random_tensor({6}, rng), 4);
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      s += sel.weights.at(i);
      if (i > 0 && sel.similarities.at(i - 1) > sel.similarities.at(i))
        EXPECT_GT(sel.weights.at(i - 1), sel.weights.at(i));
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Compose, LowTemperatureSelectsTop) {
  std::vector<double> keys{1.0, 0.0, 0.8, 0.6, 0.6, 0.8};
  const auto pool = pool_from(Tensor({3, 2}, keys), Tensor::zeros({3, 1, 2}), 1e-3);
  const auto sel = select_top_k(pool, Tensor::vector({1, 0}), 3);
  EXPECT_GE(sel.similarities.at(0) - sel.similarities.at(1), 0.1);
  EXPECT_GT(sel.weights.at(0), 1.0 - 1e-6);
}

TEST(Compose, PermutingPoolPermutesIndices) {
  Rng rng(11);
  const auto pool = init_pool(PoolKind::domain, 6, 2, 4, 1.0, rng);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  std::vector<double> k(24), v(48);
  for (std::size_t i = 0; i < 6; ++i) {
    std::copy_n(pool.keys.data().begin() + perm[i] * 4, 4, k.begin() + i * 4);
    std::copy_n(pool.values.data().begin() + perm[i] * 8, 8, v.begin() + i * 8);
  }
  const auto shuffled = pool_from(Tensor({6, 4}, k), Tensor({6, 2, 4}, v));
  const auto q = random_tensor({4}, rng);
  const auto a = select_top_k(pool, q, 3), b = select_top_k(shuffled, q, 3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(perm[b.indices[i]], a.indices[i]);
  const auto pa = compose(a, pool), pb = compose(b, shuffled);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(pa.at(i), pb.at(i), 1e-12);
}

TEST(Compose, UnselectedValuesGetNoGradient) {
  Rng rng(12);
  auto pool = init_pool(PoolKind::task, 6, 2, 4, 1.0, rng);
  const auto sel = select_top_k(pool, random_tensor({4}, rng), 2);
  sum(square(compose(sel, pool))).backward();
  const auto g = pool.values.grad();
  ASSERT_EQ(g.size(), 48u);
  for (std::size_t i = 0; i < 6; ++i) {
    const bool chosen = std::ranges::find(sel.indices, i) != sel.indices.end();
    double norm = 0.0;
    for (std::size_t j = 0; j < 8; ++j) norm += std::abs(g[i * 8 + j]);
    if (chosen) EXPECT_GT(norm, 0.0) << i;
    else EXPECT_EQ(norm, 0.0) << i;
  }
}

TEST(Compose, RejectsStaleSelection) {
  Rng rng(13);
  const auto big = init_pool(PoolKind::task, 6, 1, 4, 1.0, rng);
  const auto small = init_pool(PoolKind::task, 4, 1, 4, 1.0, rng);
  const auto sel = select_top_k(big, random_tensor({4}, rng), 2);
  EXPECT_THROW(compose(sel, small), std::out_of_range);
}
