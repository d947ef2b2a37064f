// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic multi-domain, multi-task restoration data and the
// surrogate text-feature oracle used by the alignment loss.

#ifndef DATPRL_SYNTH_HPP
#define DATPRL_SYNTH_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "datprl/rng.hpp"
#include "datprl/tensor.hpp"

namespace datprl {

enum class DomainId { natural = 0, medical = 1, remote = 2 };
enum class TaskId { noise = 0, blur = 1, streak = 2, downsample = 3, mask = 4, haze = 5 };

inline constexpr std::size_t kDomainCount = 3;
inline constexpr std::size_t kTaskCount = 6;

std::string_view to_string(DomainId id);
std::string_view to_string(TaskId id);
DomainId parse_domain(std::string_view name);
TaskId parse_task(std::string_view name);

struct TaskParams {
  double noise_sigma = 0.1;
  double blur_sigma = 1.2;
  std::size_t streak_count = 8; // per 32x32 area
  double streak_opacity = 0.7;
  double streak_value = 0.95;
  std::size_t scale = 2;
  double mask_density = 0.12;
  std::size_t mask_patch = 4;
  double haze_t_min = 0.5;
  double haze_t_max = 0.8;
  double airlight = 0.9;

  void validate() const;
};

struct TaskSpec {
  TaskId id = TaskId::noise;
  TaskParams params;
};

/// Unit-norm domain anchors (pairwise cosine < 0.3, resampled until it holds)
/// and unit task offsets, all from one seeded stream.
class TextOracle {
public:
  static TextOracle create(std::size_t dim, std::uint64_t seed);

  std::size_t dim() const { return dim_; }
  const Tensor &anchor(DomainId d) const { return anchors_[static_cast<std::size_t>(d)]; }
  const Tensor &task_offset(TaskId t) const { return offsets_[static_cast<std::size_t>(t)]; }

  static constexpr double kMaxAnchorCosine = 0.3;
  static constexpr double kTaskOffsetScale = 0.2;

private:
  std::size_t dim_ = 0;
  std::vector<Tensor> anchors_;
  std::vector<Tensor> offsets_;
};

/// normalize(anchor + 0.2 * task_offset + jitter * noise), noise ~ N(0, I/d).
Tensor text_feature(const TextOracle &oracle, DomainId domain, TaskId task, Rng &rng,
                    double jitter, bool with_task_offset = true);

/// HQ image [3, size, size] in [0, 1]. Feature scales are in pixels, so larger
/// images contain more structure rather than magnified structure.
Tensor generate_hq(DomainId domain, std::size_t size, Rng &rng);

/// Shape-preserving degradation, output clamped to [0, 1].
Tensor degrade(const Tensor &hq, const TaskSpec &task, Rng &rng);

struct SyntheticSample {
  Tensor lq;
  Tensor hq;
  DomainId domain = DomainId::natural;
  TaskId task = TaskId::noise;
  Tensor text_feature;
};

struct SynthConfig {
  std::vector<DomainId> domains{DomainId::natural, DomainId::medical, DomainId::remote};
  std::vector<TaskId> tasks{TaskId::noise, TaskId::haze};
  TaskParams params;
  std::size_t image_size = 32;
  double text_jitter = 0.1;
  std::uint64_t text_seed = 7;

  void validate() const;
};

SyntheticSample make_sample(const SynthConfig &config, const TextOracle &oracle, DomainId domain,
                            TaskId task, std::size_t size, Rng &rng);

/// Per-domain counts differ by at most one; the domains receiving the extra
/// samples rotate with the seeded stream. Tasks cycle within each domain from
/// a random offset.
std::vector<SyntheticSample> balanced_batch(const SynthConfig &config, const TextOracle &oracle,
                                            std::size_t batch_size, Rng &rng);

/// `per_cell` samples for every (domain, task) pair, domain-major order.
std::vector<SyntheticSample> evaluation_set(const SynthConfig &config, const TextOracle &oracle,
                                            std::size_t per_cell, std::size_t size,
                                            std::uint64_t seed);

/// Binary P6 portable pixel map, 8 bits per channel.
void write_ppm(const std::filesystem::path &path, const Tensor &image);

} // namespace datprl

#endif // DATPRL_SYNTH_HPP
