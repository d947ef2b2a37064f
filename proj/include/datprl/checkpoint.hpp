// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format, all integers and floats little-endian:
//
//   "DTPR"                       magic
//   u32                          format version
//   u64 n, n bytes               resolved configuration text
//   u64                          optimizer step counter
//   u64 n, n bytes               RNG engine state (text form)
//   u64 P                        parameter count, then P times:
//     u32 n, n bytes             name
//     u32 r, r x u64             shape
//     prod(shape) x f64          values
//   u64 M (0 or P)               moment tables, then M times:
//     prod(shape) x f64          first moment
//     prod(shape) x f64          second moment
//   u64                          FNV-1a 64 checksum of every preceding byte

#ifndef DATPRL_CHECKPOINT_HPP
#define DATPRL_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "datprl/gradcheck.hpp"

namespace datprl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;

  bool operator==(const CheckpointTensor &) const = default;
};

struct Checkpoint {
  std::string config_text;
  std::uint64_t step = 0;
  std::string rng_state;
  std::vector<CheckpointTensor> params;
  std::vector<std::vector<double>> first_moments;
  std::vector<std::vector<double>> second_moments;

  bool operator==(const Checkpoint &) const = default;
};

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt);
/// Throws CheckpointError naming the byte offset of the first problem.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path);
Checkpoint load_checkpoint(const std::filesystem::path &path);

/// Snapshot of live tensors as a parameter table.
std::vector<CheckpointTensor> snapshot(const std::vector<NamedTensor> &params);

/// Copies stored values into `params`. The name and shape tables must match
/// exactly; the first offending entry is named in the error.
void restore_parameters(const std::vector<CheckpointTensor> &stored,
                        const std::vector<NamedTensor> &params);

} // namespace datprl

#endif // DATPRL_CHECKPOINT_HPP
