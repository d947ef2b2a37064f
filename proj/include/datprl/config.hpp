// SPDX-License-Identifier: Apache-2.0
//
// Plain-text run configuration:
//
//   # comment
//   [trainer]
//   steps = 2000
//   [pools]
//   task.N = 8
//
// A key inside [section] is addressed as section.key; unknown keys, repeated
// keys and malformed values are rejected with the line number.

#ifndef DATPRL_CONFIG_HPP
#define DATPRL_CONFIG_HPP

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "datprl/trainer.hpp"

namespace datprl {

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  TrainConfig train;
  std::string output_dir; // empty: resolved from the output root at run time
};

struct KeyDoc {
  std::string key;
  std::string default_value;
  std::string description;
};

/// Every accepted key with its default, in canonical order.
std::vector<KeyDoc> documented_keys();

RunConfig parse_run_config(const std::string &text, const std::string &origin = "<config>");
RunConfig load_run_config(const std::filesystem::path &path);

/// "section.key=value".
void apply_override(RunConfig &config, const std::string &assignment);
void set_value(RunConfig &config, const std::string &key, const std::string &value);
std::string get_value(const RunConfig &config, const std::string &key);

/// Every key in canonical order with normalized values. Parsing the result
/// gives back an identical configuration.
std::string canonical_text(const RunConfig &config);

/// $DATPRL_OUTPUT_ROOT if set, otherwise "runs".
std::filesystem::path default_output_root();

} // namespace datprl

#endif // DATPRL_CONFIG_HPP
