// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "datprl/analysis.hpp"
#include "tiny_config.hpp"

using namespace datprl;
using datprl::testing::tiny_train_config;

TEST(TotalVariation, Basics) {
  EXPECT_EQ(total_variation({1, 1}, {2, 2}), 0.0);
  EXPECT_DOUBLE_EQ(total_variation({1, 0}, {0, 1}), 1.0);
  EXPECT_DOUBLE_EQ(total_variation({3, 1}, {1, 1}), 0.25);
}

TEST(ValueSimilarity, UnitDiagonalAndSymmetric) {
  Rng rng(1);
  const auto pool = init_pool(PoolKind::task, 5, 2, 4, 1.0, rng);
  const auto m = value_similarity(pool.values);
  ASSERT_EQ(m.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(m[i][i], 1.0, 1e-12);
    for (std::size_t j = 0; j < 5; ++j) EXPECT_DOUBLE_EQ(m[i][j], m[j][i]);
  }
}

TEST(Analyze, HistogramsAndGates) {
  const auto cfg = tiny_train_config();
  const auto model = RestorationModel::create(cfg.model, 2);
  const auto oracle = TextOracle::create(cfg.model.prompts.dim, cfg.synth.text_seed);
  EvalConfig eval = cfg.eval;
  eval.samples_per_cell = 3;
  const auto a = analyze(model, cfg.synth, oracle, eval);
  ASSERT_EQ(a.task_selection.size(), 6u);
  for (const auto &h : a.task_selection) {
    std::size_t total = 0;
    for (auto c : h.counts) total += c;
    EXPECT_EQ(total, h.samples * 2);
    EXPECT_EQ(h.counts.size(), 5u);
  }
  for (const auto &h : a.domain_selection) {
    std::size_t total = 0;
    for (auto c : h.counts) total += c;
    EXPECT_EQ(total, h.samples * 3);
  }
  EXPECT_EQ(a.gates.size(), cfg.model.backbone.levels);
  EXPECT_EQ(a.task_value_similarity.size(), 5u);
  EXPECT_EQ(a.domain_value_similarity.size(), 4u);
  EXPECT_EQ(a.anchor_cosine.size(), 3u);
  for (const auto &p : a.pr_similarity)
    for (std::size_t i = 0; i < p.cosine.size(); ++i) EXPECT_NEAR(p.cosine[i][i], 1.0, 1e-12);
  const double tv = max_domain_tv(a);
  EXPECT_GE(tv, 0.0);
  EXPECT_LE(tv, 1.0);
}

TEST(Analyze, WritesCsvFiles) {
  const auto cfg = tiny_train_config();
  const auto model = RestorationModel::create(cfg.model, 2);
  const auto oracle = TextOracle::create(cfg.model.prompts.dim, cfg.synth.text_seed);
  const auto dir = std::filesystem::temp_directory_path() / "datprl_analysis_test";
  std::filesystem::remove_all(dir);
  write_analytics(analyze(model, cfg.synth, oracle, cfg.eval), dir);
  for (const char *f : {"task_selection.csv", "domain_selection.csv", "task_value_similarity.csv",
                        "domain_value_similarity.csv", "gates.csv", "pr_similarity.csv", "anchor_cosine.csv"}) {
    std::ifstream in(dir / f);
    std::string header;
    EXPECT_TRUE(std::getline(in, header)) << f;
    EXPECT_FALSE(header.empty()) << f;
  }
  std::filesystem::remove_all(dir);
}
