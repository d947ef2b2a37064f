// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "datprl/gradient_suite.hpp"

using namespace datprl;

TEST(GradientSuite, ComponentsListed) {
  const auto &c = suite_components();
  EXPECT_EQ(c.size(), 11u);
  EXPECT_EQ(c.front(), "l_pix");
  EXPECT_EQ(c.back(), "backbone");
}

TEST(GradientSuite, LossesPassOnFewSeeds) {
  SuiteOptions o;
  o.seeds = 3;
  o.only = {"l_pix", "l_fft", "l_align", "l_div", "l_bal", "l_con", "pcm", "cross_attention"};
  const auto r = run_gradient_suite(o);
  ASSERT_EQ(r.components.size(), o.only.size());
  for (const auto &c : r.components) {
    EXPECT_TRUE(c.passed) << c.name << " " << c.max_rel_error;
    EXPECT_EQ(c.seeds, 3u);
    EXPECT_GT(c.coordinates, 0u);
    EXPECT_FALSE(c.op_counts.empty());
  }
  EXPECT_TRUE(r.passed());
}

TEST(GradientSuite, InjectedFaultIsCaught) {
  SuiteOptions o;
  o.seeds = 2;
  o.only = {"agf"};
  o.inject_fault = "agf";
  const auto r = run_gradient_suite(o);
  EXPECT_FALSE(r.passed());
  EXPECT_EQ(r.failing(), std::vector<std::string>{"agf"});
  EXPECT_NE(format_report(r).find("FAIL"), std::string::npos);
}

TEST(GradientSuite, UnknownComponentRejected) {
  SuiteOptions o;
  o.only = {"nonsense"};
  EXPECT_THROW(run_gradient_suite(o), std::invalid_argument);
}
