// SPDX-License-Identifier: Apache-2.0

#include "datprl/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

namespace datprl {

namespace {

constexpr std::array<std::string_view, kDomainCount> kDomainNames{"natural", "medical", "remote"};
constexpr std::array<std::string_view, kTaskCount> kTaskNames{"noise",      "blur", "streak",
                                                              "downsample", "mask", "haze"};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

std::vector<double> unit_gaussian(std::size_t dim, Rng &rng) {
  std::vector<double> v(dim);
  double s = 0.0;
  for (auto &x : v) {
    x = rng.normal();
    s += x * x;
  }
  s = std::sqrt(s);
  for (auto &x : v) x /= s;
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_size(std::size_t size) {
  if (size == 0) throw std::invalid_argument("image size must be positive");
}

Tensor natural_image(std::size_t size, Rng &rng) {
  // Three band-limited textures (random plane waves), mixed into colour.
  constexpr std::size_t kWaves = 10;
  const std::size_t n = size * size;
  std::array<std::vector<double>, 3> tex;
  for (auto &t : tex) {
    t.assign(n, 0.0);
    for (std::size_t k = 0; k < kWaves; ++k) {
      const double freq = rng.uniform(0.02, 0.14); // cycles per pixel
      const double theta = rng.uniform(0.0, std::numbers::pi);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double amp = 1.0 / (1.0 + 10.0 * freq);
      const double fx = freq * std::cos(theta), fy = freq * std::sin(theta);
      for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
          t[y * size + x] += amp * std::cos(2.0 * std::numbers::pi *
                                                (fx * static_cast<double>(x) + fy * static_cast<double>(y)) +
                                            phase);
    }
    double var = 0.0;
    for (double v : t) var += v * v;
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (auto &v : t) v /= sd;
  }
  std::array<double, 9> mix;
  for (auto &m : mix) m = rng.uniform(-0.2, 0.2);
  for (std::size_t c = 0; c < 3; ++c) mix[c * 3 + c] += 0.25;
  std::array<double, 3> base;
  for (auto &b : base) b = rng.uniform(0.35, 0.65);
  std::vector<double> img(3 * n);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      double v = base[c];
      for (std::size_t k = 0; k < 3; ++k) v += mix[c * 3 + k] * tex[k][i];
      img[c * n + i] = clamp01(v);
    }
  return Tensor({3, size, size}, std::move(img));
}

Tensor medical_image(std::size_t size, Rng &rng) {
  // Soft elliptical blobs on a dark ground, single channel tripled.
  const std::size_t n = size * size;
  std::vector<double> gray(n, 0.05);
  const double area_scale = static_cast<double>(n) / 1024.0;
  const std::size_t blobs =
      std::max<std::size_t>(2, static_cast<std::size_t>(std::lround((2.0 + rng.uniform(0.0, 2.0)) * area_scale)));
  for (std::size_t b = 0; b < blobs; ++b) {
    const double cx = rng.uniform(0.15, 0.85) * static_cast<double>(size);
    const double cy = rng.uniform(0.15, 0.85) * static_cast<double>(size);
    const double rx = rng.uniform(4.0, 10.0), ry = rng.uniform(4.0, 10.0);
    const double rot = rng.uniform(0.0, std::numbers::pi);
    const double level = rng.uniform(0.3, 0.8);
    const double cr = std::cos(rot), sr = std::sin(rot);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        const double u = (cr * dx + sr * dy) / rx, v = (-sr * dx + cr * dy) / ry;
        const double r = std::sqrt(u * u + v * v);
        gray[y * size + x] += level / (1.0 + std::exp(6.0 * (r - 1.0)));
      }
  }
  std::vector<double> img(3 * n);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) img[c * n + i] = clamp01(gray[i]);
  return Tensor({3, size, size}, std::move(img));
}

Tensor remote_image(std::size_t size, Rng &rng) {
  // Tile mosaic from an earthy palette with a few straight roads.
  static constexpr std::array<std::array<double, 3>, 6> kPalette{{{0.35, 0.45, 0.25},
                                                                  {0.55, 0.50, 0.35},
                                                                  {0.25, 0.35, 0.20},
                                                                  {0.60, 0.60, 0.55},
                                                                  {0.45, 0.35, 0.25},
                                                                  {0.30, 0.40, 0.45}}};
  const std::size_t n = size * size;
  const std::size_t tile = rng.uniform() < 0.5 ? 4 : 8;
  const std::size_t tiles = (size + tile - 1) / tile;
  std::vector<std::array<double, 3>> colors(tiles * tiles);
  for (auto &col : colors) {
    const auto &p = kPalette[rng.index(kPalette.size())];
    const double jitter = rng.uniform(-0.05, 0.05);
    for (std::size_t c = 0; c < 3; ++c) col[c] = p[c] + jitter;
  }
  std::vector<double> img(3 * n);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const auto &col = colors[(y / tile) * tiles + x / tile];
      for (std::size_t c = 0; c < 3; ++c) img[c * n + y * size + x] = col[c];
    }
  const std::size_t roads = 1 + rng.index(2);
  for (std::size_t r = 0; r < roads; ++r) {
    const bool horizontal = rng.uniform() < 0.5;
    const std::size_t at = rng.index(size);
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t y = horizontal ? at : i, x = horizontal ? i : at;
      for (std::size_t c = 0; c < 3; ++c) img[c * n + y * size + x] = 0.8;
    }
  }
  for (auto &v : img) v = clamp01(v);
  return Tensor({3, size, size}, std::move(img));
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double s = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    s += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto &v : k) v /= s;
  return k;
}

// Reflect without repeating the edge sample (… 2 1 | 0 1 2 … n-1 | n-2 …).
std::size_t reflect(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<long>(n) ? i : period - i);
}

std::vector<double> blur(const std::vector<double> &img, std::size_t c, std::size_t h, std::size_t w,
                         double sigma) {
  const auto k = gaussian_kernel(sigma);
  const long r = static_cast<long>(k.size() / 2);
  std::vector<double> tmp(img.size()), out(img.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double *src = img.data() + ch * h * w;
    double *t = tmp.data() + ch * h * w;
    double *o = out.data() + ch * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (long j = -r; j <= r; ++j)
          s += k[static_cast<std::size_t>(j + r)] * src[y * w + reflect(static_cast<long>(x) + j, w)];
        t[y * w + x] = s;
      }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double s = 0.0;
        for (long j = -r; j <= r; ++j)
          s += k[static_cast<std::size_t>(j + r)] * t[reflect(static_cast<long>(y) + j, h) * w + x];
        o[y * w + x] = s;
      }
  }
  return out;
}

} // namespace

std::string_view to_string(DomainId id) { return kDomainNames.at(static_cast<std::size_t>(id)); }
std::string_view to_string(TaskId id) { return kTaskNames.at(static_cast<std::size_t>(id)); }

DomainId parse_domain(std::string_view name) {
  for (std::size_t i = 0; i < kDomainNames.size(); ++i)
    if (kDomainNames[i] == name) return static_cast<DomainId>(i);
  throw std::invalid_argument("unknown domain '" + std::string(name) + "'");
}

TaskId parse_task(std::string_view name) {
  for (std::size_t i = 0; i < kTaskNames.size(); ++i)
    if (kTaskNames[i] == name) return static_cast<TaskId>(i);
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

void TaskParams::validate() const {
  if (noise_sigma < 0.0) throw std::invalid_argument("noise sigma must be non-negative");
  if (!(blur_sigma > 0.0)) throw std::invalid_argument("blur sigma must be positive");
  if (streak_opacity < 0.0 || streak_opacity > 1.0) throw std::invalid_argument("streak opacity must lie in [0, 1]");
  if (scale < 1) throw std::invalid_argument("downsample scale must be at least 1");
  if (mask_density < 0.0 || mask_density > 1.0) throw std::invalid_argument("mask density must lie in [0, 1]");
  if (mask_patch < 1) throw std::invalid_argument("mask patch must be at least 1");
  if (haze_t_min < 0.0 || haze_t_max > 1.0 || haze_t_min > haze_t_max)
    throw std::invalid_argument("haze transmission range must satisfy 0 <= min <= max <= 1");
  if (airlight < 0.0 || airlight > 1.0) throw std::invalid_argument("airlight must lie in [0, 1]");
}

TextOracle TextOracle::create(std::size_t dim, std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("text feature dimension must be at least 2");
  TextOracle oracle;
  oracle.dim_ = dim;
  Rng rng(seed);
  std::vector<std::vector<double>> anchors;
  for (std::size_t attempts = 0; anchors.size() < kDomainCount; ++attempts) {
    if (attempts > 10000) throw std::runtime_error("could not draw dissimilar domain anchors");
    auto cand = unit_gaussian(dim, rng);
    bool ok = std::all_of(anchors.begin(), anchors.end(), [&](const auto &a) {
      return dot(a, cand) < kMaxAnchorCosine;
    });
    if (ok) anchors.push_back(std::move(cand));
  }
  for (auto &a : anchors) oracle.anchors_.push_back(Tensor::vector(std::move(a)));
  for (std::size_t t = 0; t < kTaskCount; ++t) oracle.offsets_.push_back(Tensor::vector(unit_gaussian(dim, rng)));
  return oracle;
}

Tensor text_feature(const TextOracle &oracle, DomainId domain, TaskId task, Rng &rng,
                    double jitter, bool with_task_offset) {
  if (jitter < 0.0) throw std::invalid_argument("text jitter must be non-negative");
  const std::size_t d = oracle.dim();
  auto anchor = oracle.anchor(domain).data();
  auto offset = oracle.task_offset(task).data();
  const double noise_sd = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> v(d);
  for (std::size_t i = 0; i < d; ++i) {
    v[i] = anchor[i];
    if (with_task_offset) v[i] += TextOracle::kTaskOffsetScale * offset[i];
    if (jitter > 0.0) v[i] += jitter * rng.normal(0.0, noise_sd);
  }
  double s = std::sqrt(dot(v, v));
  for (auto &x : v) x /= s;
  return Tensor::vector(std::move(v));
}

Tensor generate_hq(DomainId domain, std::size_t size, Rng &rng) {
  check_size(size);
  switch (domain) {
  case DomainId::natural: return natural_image(size, rng);
  case DomainId::medical: return medical_image(size, rng);
  case DomainId::remote: return remote_image(size, rng);
  }
  throw std::invalid_argument("unknown domain");
}

Tensor degrade(const Tensor &hq, const TaskSpec &task, Rng &rng) {
  task.params.validate();
  if (hq.rank() != 3) throw ShapeError("degrade: expected [c,h,w], got " + shape_str(hq.shape()));
  const auto &p = task.params;
  const std::size_t c = hq.dim(0), h = hq.dim(1), w = hq.dim(2), plane = h * w;
  std::vector<double> img(hq.data().begin(), hq.data().end());
  switch (task.id) {
  case TaskId::noise:
    if (p.noise_sigma > 0.0)
      for (auto &v : img) v += rng.normal(0.0, p.noise_sigma);
    break;
  case TaskId::blur: img = blur(img, c, h, w, p.blur_sigma); break;
  case TaskId::streak: {
    // Near-vertical bright segments sharing one rain direction per image.
    const double area_scale = static_cast<double>(plane) / 1024.0;
    const auto count = static_cast<std::size_t>(std::lround(static_cast<double>(p.streak_count) * area_scale));
    const double base = rng.uniform(-0.35, 0.35);
    std::vector<double> mask(plane, 0.0);
    for (std::size_t s = 0; s < count; ++s) {
      const double angle = base + rng.uniform(-0.05, 0.05);
      const double len = rng.uniform(6.0, 14.0);
      const double x0 = rng.uniform(0.0, static_cast<double>(w));
      const double y0 = rng.uniform(-4.0, static_cast<double>(h));
      for (double t = 0.0; t <= len; t += 0.5) {
        const long x = std::lround(x0 + t * std::sin(angle));
        const long y = std::lround(y0 + t * std::cos(angle));
        if (x >= 0 && y >= 0 && x < static_cast<long>(w) && y < static_cast<long>(h))
          mask[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = p.streak_opacity;
      }
    }
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i)
        img[ch * plane + i] = (1.0 - mask[i]) * img[ch * plane + i] + mask[i] * p.streak_value;
    break;
  }
  case TaskId::downsample: {
    const std::size_t s = p.scale;
    if (h % s != 0 || w % s != 0)
      throw std::invalid_argument("degrade: size " + shape_str(hq.shape()) + " not divisible by scale " + std::to_string(s));
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t by = 0; by < h / s; ++by)
        for (std::size_t bx = 0; bx < w / s; ++bx) {
          double m = 0.0;
          for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) m += hq.data()[ch * plane + (by * s + y) * w + bx * s + x];
          m /= static_cast<double>(s * s);
          for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x) img[ch * plane + (by * s + y) * w + bx * s + x] = m;
        }
    break;
  }
  case TaskId::mask: {
    const std::size_t ps = std::min({p.mask_patch, h, w});
    const auto patches = static_cast<std::size_t>(
        std::lround(p.mask_density * static_cast<double>(plane) / static_cast<double>(ps * ps)));
    for (std::size_t k = 0; k < patches; ++k) {
      const std::size_t y0 = rng.index(h - ps + 1), x0 = rng.index(w - ps + 1);
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = y0; y < y0 + ps; ++y)
          for (std::size_t x = x0; x < x0 + ps; ++x) img[ch * plane + y * w + x] = 0.0;
    }
    break;
  }
  case TaskId::haze: {
    const double t = p.haze_t_min == p.haze_t_max ? p.haze_t_min : rng.uniform(p.haze_t_min, p.haze_t_max);
    for (auto &v : img) v = t * v + (1.0 - t) * p.airlight;
    break;
  }
  }
  for (auto &v : img) v = clamp01(v);
  return Tensor(hq.shape(), std::move(img));
}

void SynthConfig::validate() const {
  if (domains.empty()) throw std::invalid_argument("data.domains must not be empty");
  if (tasks.empty()) throw std::invalid_argument("data.tasks must not be empty");
  check_size(image_size);
  if (text_jitter < 0.0) throw std::invalid_argument("data.text_jitter must be non-negative");
  params.validate();
}

SyntheticSample make_sample(const SynthConfig &config, const TextOracle &oracle, DomainId domain,
                            TaskId task, std::size_t size, Rng &rng) {
  // Each sample draws from its own child stream so a sample's content does
  // not depend on how many draws its generators consumed.
  Rng local(rng.split());
  SyntheticSample s;
  s.domain = domain;
  s.task = task;
  s.hq = generate_hq(domain, size, local);
  s.lq = degrade(s.hq, TaskSpec{task, config.params}, local);
  s.text_feature = text_feature(oracle, domain, task, local, config.text_jitter);
  return s;
}

std::vector<SyntheticSample> balanced_batch(const SynthConfig &config, const TextOracle &oracle,
                                            std::size_t batch_size, Rng &rng) {
  const std::size_t nd = config.domains.size(), nt = config.tasks.size();
  if (batch_size < nd)
    throw std::invalid_argument("balanced_batch: batch of " + std::to_string(batch_size) +
                                " cannot cover " + std::to_string(nd) + " domains");
  const std::size_t base = batch_size / nd, extra = batch_size % nd;
  const std::size_t rotation = rng.index(nd);
  std::vector<SyntheticSample> batch;
  batch.reserve(batch_size);
  for (std::size_t k = 0; k < nd; ++k) {
    const std::size_t di = (rotation + k) % nd;
    const std::size_t count = base + (k < extra ? 1 : 0);
    const std::size_t task_offset = rng.index(nt);
    for (std::size_t j = 0; j < count; ++j)
      batch.push_back(make_sample(config, oracle, config.domains[di],
                                  config.tasks[(task_offset + j) % nt], config.image_size, rng));
  }
  return batch;
}

std::vector<SyntheticSample> evaluation_set(const SynthConfig &config, const TextOracle &oracle,
                                            std::size_t per_cell, std::size_t size,
                                            std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SyntheticSample> out;
  for (auto d : config.domains)
    for (auto t : config.tasks)
      for (std::size_t i = 0; i < per_cell; ++i) out.push_back(make_sample(config, oracle, d, t, size, rng));
  return out;
}

void write_ppm(const std::filesystem::path &path, const Tensor &image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw ShapeError("write_ppm: expected [3,h,w], got " + shape_str(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P6\n" << w << ' ' << h << "\n255\n";
  auto v = image.data();
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamp01(v[c * plane + i]) * 255.0))));
}

} // namespace datprl
