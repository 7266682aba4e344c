// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "matchkit/checkpoint.hpp"
#include "matchkit/encoders.hpp"
#include "matchkit/error.hpp"
#include "test_support.hpp"

using namespace matchkit;

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Checkpoint sample_checkpoint(bool conv) {
  ModelConfig cfg;
  if (conv) {
    cfg.encoder = EncoderKind::conv;
    cfg.conv = ConvEmbedConfig{2, 4, 8, 1};
  } else {
    cfg.mlp = MlpEmbedConfig{4, {6}, 3};
    cfg.fce.enabled = true;
    cfg.fce.steps = 2;
  }
  Checkpoint c;
  c.config_text = "model.encoder=mlp\ntrain.seed=3\n";
  c.config_hash = config_hash(c.config_text);
  c.episode = 42;
  Rng rng(5);
  rng.discard(17);
  std::ostringstream os;
  os << rng;
  c.rng_state = os.str();
  c.params = init_params(cfg, 3);
  for (auto& [name, stats] : c.params.batchnorm_stats()) {
    for (double& v : stats.mean) v = 0.125;
  }
  c.optimizer.step = 9;
  for (const auto& [name, t] : c.params.tensors()) {
    c.optimizer.m[name].assign(t.numel(), 0.5);
    c.optimizer.v[name].assign(t.numel(), 1.0 / 3.0);
  }
  return c;
}

}  // namespace

TEST(ConfigHash, Fnv1aReferenceValues) {
  EXPECT_EQ(config_hash(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(config_hash("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(config_hash("foobar"), 0x85944171f73967e8ULL);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  for (bool conv : {false, true}) {
    test::TempDir dir;
    const Checkpoint c = sample_checkpoint(conv);
    save_checkpoint(c, dir / "a.ckpt");
    const Checkpoint back = load_checkpoint(dir / "a.ckpt");
    EXPECT_TRUE(back.identical(c));
    save_checkpoint(back, dir / "b.ckpt");
    EXPECT_EQ(read_bytes(dir / "a.ckpt"), read_bytes(dir / "b.ckpt"));
    EXPECT_FALSE(std::filesystem::exists(dir / "a.ckpt.tmp"));
  }
}

TEST(Checkpoint, RestoredRngContinuesTheStream) {
  const Checkpoint c = sample_checkpoint(false);
  const Checkpoint back = deserialize_checkpoint(serialize_checkpoint(c));
  Rng a(5);
  a.discard(17);
  Rng b;
  std::istringstream(back.rng_state) >> b;
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a(), b());
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = serialize_checkpoint(sample_checkpoint(false));
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 7), "MNCKPT1");
  EXPECT_EQ(bytes[7], 0);
  EXPECT_EQ(bytes[8], kCheckpointVersion);
  EXPECT_EQ(bytes[20], 42);  // episode, little-endian
}

TEST(Checkpoint, EveryFlippedByteIsDetected) {
  const auto good = serialize_checkpoint(sample_checkpoint(false));
  for (std::size_t i = 0; i < good.size(); i += 7) {
    auto bad = good;
    bad[i] ^= 0x10;
    EXPECT_THROW(deserialize_checkpoint(bad), DataError) << "offset " << i;
  }
  auto bad = good;
  bad[good.size() / 2] ^= 1;
  EXPECT_THROW(deserialize_checkpoint(bad), ChecksumError);
}

TEST(Checkpoint, TruncationAndMagic) {
  const auto good = serialize_checkpoint(sample_checkpoint(false));
  for (std::size_t n : {0ul, 5ul, 20ul, good.size() - 1}) {
    EXPECT_THROW(deserialize_checkpoint(std::span(good.data(), n)), DataError);
  }
  auto bad = good;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad), DataError);
}

TEST(Checkpoint, HashMismatchIsRejected) {
  test::TempDir dir;
  const Checkpoint c = sample_checkpoint(false);
  save_checkpoint(c, dir / "c.ckpt");
  EXPECT_NO_THROW(load_checkpoint(dir / "c.ckpt", c.config_hash));
  EXPECT_THROW(load_checkpoint(dir / "c.ckpt", c.config_hash ^ 1), ConfigMismatchError);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), DataError);
}

TEST(Checkpoint, IdenticalDetectsDifferences) {
  const Checkpoint a = sample_checkpoint(false);
  Checkpoint b = a;
  EXPECT_TRUE(a.identical(b));
  b.optimizer.v.begin()->second[0] = 0.0;
  EXPECT_FALSE(a.identical(b));
  Checkpoint c = a;
  c.params.tensors().begin()->second.leaf_data()[0] += 1.0;
  EXPECT_FALSE(a.identical(c));
}
