// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "datprl/config.hpp"

using namespace datprl;

namespace {

std::string error_of(const std::string &text) {
  try {
    parse_run_config(text, "test.cfg");
  } catch (const ConfigError &e) {
    return e.what();
  }
  return "";
}

} // namespace

TEST(Config, DefaultsRoundTrip) {
  const RunConfig defaults;
  const auto text = canonical_text(defaults);
  const auto parsed = parse_run_config(text);
  EXPECT_EQ(canonical_text(parsed), text);
}

TEST(Config, ParsesSectionsAndComments) {
  const auto c = parse_run_config(
      "# desk run\n"
      "[trainer]\n"
      "steps = 40   # short\n"
      "seed = 9\n"
      "\n"
      "[backbone]\n"
      "levels = 2\n"
      "channels = 8,16\n"
      "[pools]\n"
      "task.N = 6\n"
      "domain.enabled = false\n"
      "[data]\n"
      "tasks = noise,blur,haze\n"
      "[loss]\n"
      "tau_con = 0.2\n"
      "align_pooling = first_token\n");
  EXPECT_EQ(c.train.steps, 40u);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.train.model.backbone.channels, (std::vector<std::size_t>{8, 16}));
  EXPECT_EQ(c.train.model.prompts.task.prompts, 6u);
  EXPECT_FALSE(c.train.model.prompts.domain.enabled);
  EXPECT_EQ(c.train.synth.tasks, (std::vector<TaskId>{TaskId::noise, TaskId::blur, TaskId::haze}));
  EXPECT_DOUBLE_EQ(c.train.reg.tau_con, 0.2);
  EXPECT_EQ(c.train.align_pooling, AlignPooling::first_token);
}

TEST(Config, UnknownKeyNamesLine) {
  const auto msg = error_of("[trainer]\nsteps = 3\nstpes = 4\n");
  EXPECT_NE(msg.find("test.cfg:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("stpes"), std::string::npos) << msg;
}

TEST(Config, DuplicateKeyRejected) {
  const auto msg = error_of("[trainer]\nsteps = 3\n[trainer]\nsteps = 4\n");
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
  EXPECT_NE(msg.find(":4"), std::string::npos) << msg;
}

TEST(Config, BadValuesRejected) {
  EXPECT_NE(error_of("[trainer]\nsteps = many\n"), "");
  EXPECT_NE(error_of("[trainer]\nsteps = -3\n"), "");
  EXPECT_NE(error_of("[optimizer]\nlr = 1e-3x\n"), "");
  EXPECT_NE(error_of("[pools]\ntask.enabled = maybe\n"), "");
  EXPECT_NE(error_of("[data]\ndomains = natural,ocean\n"), "");
  EXPECT_NE(error_of("[trainer\nsteps = 3\n"), "");
  EXPECT_NE(error_of("steps\n"), "");
}

TEST(Config, Overrides) {
  RunConfig c;
  apply_override(c, "trainer.steps=25");
  apply_override(c, "optimizer.lr = 0.002");
  apply_override(c, "output.dir=/tmp/x");
  EXPECT_EQ(c.train.steps, 25u);
  EXPECT_DOUBLE_EQ(c.train.adam.lr, 0.002);
  EXPECT_EQ(c.output_dir, "/tmp/x");
  EXPECT_EQ(get_value(c, "trainer.steps"), "25");
  EXPECT_THROW(apply_override(c, "trainer.steps"), ConfigError);
  EXPECT_THROW(apply_override(c, "trainer.nope=1"), ConfigError);
}

TEST(Config, DoublesRoundTripExactly) {
  RunConfig c;
  c.train.adam.lr = 0.1 + 0.2;
  c.train.reg.tau_div = 1.0 / 3.0;
  const auto back = parse_run_config(canonical_text(c));
  EXPECT_EQ(back.train.adam.lr, c.train.adam.lr);
  EXPECT_EQ(back.train.reg.tau_div, c.train.reg.tau_div);
}

TEST(Config, EveryKeyDocumentedAndSettable) {
  const auto docs = documented_keys();
  EXPECT_GT(docs.size(), 40u);
  RunConfig c;
  for (const auto &k : docs) {
    EXPECT_FALSE(k.description.empty()) << k.key;
    EXPECT_EQ(get_value(c, k.key), k.default_value) << k.key;
    EXPECT_NO_THROW(set_value(c, k.key, k.default_value)) << k.key;
  }
}

TEST(Config, MissingFile) {
  EXPECT_THROW(load_run_config("/nonexistent/dir/x.cfg"), ConfigError);
}
