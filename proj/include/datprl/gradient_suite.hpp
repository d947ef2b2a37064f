// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification of every loss and every differentiable
// forward path on small random instances.

#ifndef DATPRL_GRADIENT_SUITE_HPP
#define DATPRL_GRADIENT_SUITE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace datprl {

struct ComponentReport {
  std::string name;
  double tolerance = 0.0;
  std::size_t seeds = 0;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::uint64_t worst_seed = 0;
  std::map<std::string, std::size_t> op_counts; // graph nodes per op, first seed
  bool passed = false;
};

struct SuiteReport {
  std::vector<ComponentReport> components;
  bool passed() const;
  std::vector<std::string> failing() const;
};

struct SuiteOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 20;
  double eps = 1e-6;
  double loss_tolerance = 1e-5;
  double end_to_end_tolerance = 1e-4;
  /// Empty: run everything.
  std::vector<std::string> only;
  /// Component whose backward pass is deliberately corrupted (test fixture).
  std::string inject_fault;
};

/// l_pix, l_fft, l_align, l_div, l_bal, l_con, projector, pcm,
/// cross_attention, agf, backbone.
const std::vector<std::string> &suite_components();

SuiteReport run_gradient_suite(const SuiteOptions &options);

std::string format_report(const SuiteReport &report);

} // namespace datprl

#endif // DATPRL_GRADIENT_SUITE_HPP
