// SPDX-License-Identifier: Apache-2.0

#include "datprl/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace datprl {

namespace {

constexpr std::uint8_t kMagic[4] = {'D', 'T', 'P', 'R'};

class Writer {
public:
  void bytes(const void *p, std::size_t n) {
    auto b = static_cast<const std::uint8_t *>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str64(const std::string &s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void doubles(const std::vector<double> &v) {
    for (double x : v) f64(x);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

private:
  std::vector<std::uint8_t> out_;
};

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

  void need(std::size_t n, const char *what) const {
    if (n > remaining())
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_) + " while reading " +
                            what + " (need " + std::to_string(n) + " bytes, " +
                            std::to_string(remaining()) + " left)");
  }
  std::uint32_t u32(const char *what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char *what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char *what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::uint64_t n, const char *what) {
    need(n, what);
    std::string s(reinterpret_cast<const char *>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles(std::uint64_t n, const char *what) {
    if (n > remaining() / 8) need(n * 8, what);
    std::vector<double> v(n);
    for (auto &x : v) x = f64(what);
    return v;
  }

private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

} // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt) {
  const bool has_moments = !ckpt.first_moments.empty();
  if (has_moments && (ckpt.first_moments.size() != ckpt.params.size() ||
                      ckpt.second_moments.size() != ckpt.params.size()))
    throw CheckpointError("moment tables do not match the parameter table");
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.str64(ckpt.config_text);
  w.u64(ckpt.step);
  w.str64(ckpt.rng_state);
  w.u64(ckpt.params.size());
  for (const auto &p : ckpt.params) {
    if (shape_numel(p.shape) != p.values.size())
      throw CheckpointError("parameter '" + p.name + "' has inconsistent shape");
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u32(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.u64(d);
    w.doubles(p.values);
  }
  w.u64(has_moments ? ckpt.params.size() : 0);
  if (has_moments)
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      if (ckpt.first_moments[i].size() != ckpt.params[i].values.size() ||
          ckpt.second_moments[i].size() != ckpt.params[i].values.size())
        throw CheckpointError("moment table for '" + ckpt.params[i].name + "' has wrong length");
      w.doubles(ckpt.first_moments[i]);
      w.doubles(ckpt.second_moments[i]);
    }
  auto bytes = w.take();
  const auto sum = fnv1a64(bytes);
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(sum >> (8 * i)));
  return bytes;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin()))
    throw CheckpointError("bad magic at byte 0: not a DTPR checkpoint");
  Reader r(bytes);
  r.str(4, "magic");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " at byte 4 (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  if (bytes.size() < 20) r.need(bytes.size() + 1, "checksum footer");
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body.size() + i]) << (8 * i);
  const auto actual = fnv1a64(body);
  if (stored != actual)
    throw CheckpointError("checksum mismatch in footer at byte " + std::to_string(body.size()) +
                          ": file is corrupt or truncated");

  Reader in(body);
  in.str(4, "magic");
  in.u32("version");
  Checkpoint ckpt;
  ckpt.config_text = in.str(in.u64("config length"), "config text");
  ckpt.step = in.u64("step counter");
  ckpt.rng_state = in.str(in.u64("rng state length"), "rng state");
  const auto count = in.u64("parameter count");
  for (std::uint64_t p = 0; p < count; ++p) {
    CheckpointTensor t;
    t.name = in.str(in.u32("name length"), "parameter name");
    const auto rank = in.u32("rank");
    if (rank > 8) throw CheckpointError("implausible rank " + std::to_string(rank) + " for '" + t.name + "' at byte " + std::to_string(in.pos()));
    for (std::uint32_t i = 0; i < rank; ++i) t.shape.push_back(in.u64("shape"));
    t.values = in.doubles(shape_numel(t.shape), "parameter values");
    ckpt.params.push_back(std::move(t));
  }
  const auto moments = in.u64("moment count");
  if (moments != 0 && moments != count)
    throw CheckpointError("moment table count " + std::to_string(moments) + " does not match " +
                          std::to_string(count) + " parameters");
  for (std::uint64_t p = 0; p < moments; ++p) {
    const auto n = ckpt.params[p].values.size();
    ckpt.first_moments.push_back(in.doubles(n, "first moment"));
    ckpt.second_moments.push_back(in.doubles(n, "second moment"));
  }
  if (in.remaining() != 0)
    throw CheckpointError("unexpected trailing data at byte " + std::to_string(in.pos()));
  return ckpt;
}

void save_checkpoint(const Checkpoint &ckpt, const std::filesystem::path &path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::vector<CheckpointTensor> snapshot(const std::vector<NamedTensor> &params) {
  std::vector<CheckpointTensor> out;
  for (const auto &[name, t] : params)
    out.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  return out;
}

void restore_parameters(const std::vector<CheckpointTensor> &stored,
                        const std::vector<NamedTensor> &params) {
  for (std::size_t i = 0; i < std::min(stored.size(), params.size()); ++i) {
    const auto &s = stored[i];
    const auto &[name, t] = params[i];
    if (s.name != name)
      throw CheckpointError("parameter table entry " + std::to_string(i) + " is '" + s.name +
                            "', expected '" + name + "'");
    if (s.shape != t.shape())
      throw CheckpointError("parameter '" + name + "' has shape " + shape_str(s.shape) +
                            " in checkpoint, expected " + shape_str(t.shape()));
  }
  if (stored.size() != params.size()) {
    const auto &extra = stored.size() > params.size() ? stored[params.size()].name
                                                      : params[stored.size()].first;
    throw CheckpointError("parameter table has " + std::to_string(stored.size()) + " entries, expected " +
                          std::to_string(params.size()) + " (first unmatched: '" + extra + "')");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].second;
    std::copy(stored[i].values.begin(), stored[i].values.end(), t.mutable_data().begin());
  }
}

} // namespace datprl
