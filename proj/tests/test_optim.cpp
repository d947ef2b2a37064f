// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "datprl/optim.hpp"

using namespace datprl;

TEST(AdamStep, FirstStepMovesByLr) {
  std::vector<double> p{0.0}, g{1.0}, m{0.0}, v{0.0};
  adam_step(p, g, m, v, 0.1, 0.9, 0.999, 1e-8, 1);
  // m_hat = 1, v_hat = 1.
  EXPECT_NEAR(p[0], -0.1 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(m[0], 0.1, 1e-15);
  EXPECT_NEAR(v[0], 0.001, 1e-15);
}

TEST(AdamStep, ZeroGradientDecaysMoments) {
  std::vector<double> p{1.5}, g{0.0}, m{0.2}, v{0.04};
  adam_step(p, g, m, v, 0.1, 0.9, 0.99, 1e-8, 3);
  EXPECT_NEAR(m[0], 0.18, 1e-15);
  EXPECT_NEAR(v[0], 0.0396, 1e-15);
  std::vector<double> q{1.5}, mz{0.0}, vz{0.0};
  adam_step(q, g, mz, vz, 0.1, 0.9, 0.99, 1e-8, 1);
  EXPECT_EQ(q[0], 1.5);
}

TEST(AdamStep, MatchesHandEvaluation) {
  std::vector<double> p{0.3}, m{0.0}, v{0.0};
  const double b1 = 0.9, b2 = 0.99, lr = 0.01, eps = 1e-8;
  double mr = 0.0, vr = 0.0, pr = 0.3;
  const double grads[] = {0.5, -1.2, 0.05};
  for (std::uint64_t t = 1; t <= 3; ++t) {
    const double gt = grads[t - 1];
    std::vector<double> g{gt};
    adam_step(p, g, m, v, lr, b1, b2, eps, t);
    mr = b1 * mr + (1 - b1) * gt;
    vr = b2 * vr + (1 - b2) * gt * gt;
    pr -= lr * (mr / (1 - std::pow(b1, t))) / (std::sqrt(vr / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(p[0], pr, 1e-15);
  }
}

TEST(AdamStep, RejectsStepZero) {
  std::vector<double> p{0.0}, g{1.0}, m{0.0}, v{0.0};
  EXPECT_THROW(adam_step(p, g, m, v, 0.1, 0.9, 0.99, 1e-8, 0), std::invalid_argument);
}

TEST(Adam, DeterministicAndClipped) {
  auto run = [](double clip) {
    auto x = Tensor::vector({1.0, -2.0}, true);
    AdamConfig c;
    c.lr = 0.05;
    c.grad_clip = clip;
    Adam opt({{"x", x}}, c);
    for (int i = 0; i < 5; ++i) {
      x.zero_grad();
      auto g = x.mutable_grad();
      g[0] = 3.0 * x.at(0);
      g[1] = 40.0;
      opt.step(c.lr);
    }
    EXPECT_EQ(opt.steps_taken(), 5u);
    return std::vector<double>(x.data().begin(), x.data().end());
  };
  EXPECT_EQ(run(0.0), run(0.0));
  const auto clipped = run(1.0);
  EXPECT_TRUE(std::isfinite(clipped[0]));
}

TEST(LrSchedule, Endpoints) {
  EXPECT_DOUBLE_EQ(lr_schedule(0, 100, 4e-4, 1e-6), 4e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(100, 100, 4e-4, 1e-6), 1e-6);
  EXPECT_NEAR(lr_schedule(50, 100, 4e-4, 1e-6), (4e-4 + 1e-6) / 2, 1e-18);
  EXPECT_THROW(lr_schedule(101, 100, 4e-4), std::out_of_range);
}

TEST(LrSchedule, NonIncreasing) {
  double prev = 1.0;
  for (std::uint64_t s = 0; s <= 333; ++s) {
    const double lr = lr_schedule(s, 333, 1e-3, 1e-6);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
}

TEST(AdamConfig, Validation) {
  AdamConfig c;
  EXPECT_NO_THROW(c.validate());
  c.beta1 = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.lr_min = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
