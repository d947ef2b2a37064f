// SPDX-License-Identifier: Apache-2.0

#ifndef DATPRL_TINY_CONFIG_HPP
#define DATPRL_TINY_CONFIG_HPP

#include "datprl/trainer.hpp"

namespace datprl::testing {

// Small enough for a step to take a few milliseconds.
inline TrainConfig tiny_train_config(std::uint64_t steps = 6) {
  TrainConfig c;
  c.steps = steps;
  c.batch_size = 3;
  c.seed = 11;
  c.model.backbone.levels = 2;
  c.model.backbone.channels = {4, 8};
  c.model.prompts.dim = 8;
  c.model.prompts.tokens = 2;
  c.model.prompts.task = {true, 5, 2, 1.0};
  c.model.prompts.domain = {true, 4, 3, 1.0};
  c.synth.image_size = 8;
  c.eval.samples_per_cell = 1;
  c.eval.image_size = 8;
  c.adam.lr = 1e-3;
  c.gradient_check = false;
  return c;
}

} // namespace datprl::testing

#endif // DATPRL_TINY_CONFIG_HPP
