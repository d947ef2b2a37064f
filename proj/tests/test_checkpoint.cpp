// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "datprl/checkpoint.hpp"
#include "datprl/trainer.hpp"
#include "tiny_config.hpp"

using namespace datprl;
using datprl::testing::tiny_train_config;

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Checkpoint trained_checkpoint() {
  Trainer t(tiny_train_config(), "# tiny\n");
  t.step();
  t.step();
  return t.checkpoint();
}

std::filesystem::path temp_file(const std::string &name) {
  return std::filesystem::temp_directory_path() / ("datprl_ckpt_" + name);
}

} // namespace

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ULL);
  const std::uint8_t a[] = {'a'};
  EXPECT_EQ(fnv1a64(a), 0xaf63dc4c8601ec8cULL);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto ckpt = trained_checkpoint();
  EXPECT_EQ(ckpt.step, 2u);
  EXPECT_FALSE(ckpt.first_moments.empty());
  const auto bytes = encode_checkpoint(ckpt);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back, ckpt);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, SaveLoadSaveByteIdentical) {
  const auto a = temp_file("a.bin"), b = temp_file("b.bin");
  save_checkpoint(trained_checkpoint(), a);
  save_checkpoint(load_checkpoint(a), b);
  EXPECT_EQ(read_bytes(a), read_bytes(b));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST(Checkpoint, LayoutStartsWithMagicAndVersion) {
  const auto bytes = encode_checkpoint(trained_checkpoint());
  ASSERT_GT(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "DTPR");
  EXPECT_EQ(bytes[4], kCheckpointVersion);
  EXPECT_EQ(bytes[5], 0);
}

TEST(Checkpoint, FlippedByteRejected) {
  auto bytes = encode_checkpoint(trained_checkpoint());
  bytes[bytes.size() / 2] ^= 0x01;
  try {
    decode_checkpoint(bytes);
    FAIL();
  } catch (const CheckpointError &e) {
    EXPECT_NE(std::string(e.what()).find("checksum"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, BadMagicAndVersion) {
  auto bytes = encode_checkpoint(trained_checkpoint());
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), CheckpointError);
  bad = bytes;
  bad[4] = 99;
  try {
    decode_checkpoint(bad);
    FAIL();
  } catch (const CheckpointError &e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, TruncationRejected) {
  const auto bytes = encode_checkpoint(trained_checkpoint());
  for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{10}, bytes.size() / 3, bytes.size() - 1}) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep));
    EXPECT_THROW(decode_checkpoint(cut), CheckpointError) << keep;
  }
}

TEST(Checkpoint, MissingFile) {
  EXPECT_THROW(load_checkpoint(temp_file("does_not_exist.bin")), CheckpointError);
}

TEST(Checkpoint, PoolSizeMismatchNamesEntry) {
  auto big = tiny_train_config();
  big.model.prompts.task.prompts = 15;
  Trainer t(big);
  auto small = tiny_train_config();
  small.model.prompts.task.prompts = 10;
  const auto target = RestorationModel::create(small.model, 1);
  try {
    restore_parameters(t.checkpoint().params, target.parameters());
    FAIL();
  } catch (const CheckpointError &e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("pools.task.keys"), std::string::npos) << msg;
    EXPECT_NE(msg.find("15"), std::string::npos) << msg;
    EXPECT_NE(msg.find("10"), std::string::npos) << msg;
  }
}

TEST(Checkpoint, MissingParameterNamed) {
  auto cfg = tiny_train_config();
  Trainer t(cfg);
  auto params = t.checkpoint().params;
  params.pop_back();
  const auto target = RestorationModel::create(cfg.model, 1);
  EXPECT_THROW(restore_parameters(params, target.parameters()), CheckpointError);
}
