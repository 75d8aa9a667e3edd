#include <gtest/gtest.h>

#include <bit>
#include <filesystem>

#include "sfus/nn/checkpoint.hpp"
#include "test_support.hpp"

namespace sfus::nn {
namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("sfus_ckpt_" + name);
}

ParameterSet sample_params() {
  SeededRng rng(31);
  ParameterSet ps;
  ps.add("enc.w", sfus::testing::random_tensor({3, 4}, rng));
  ps.add("enc.b", sfus::testing::random_tensor({4}, rng));
  ps.add("head.k", sfus::testing::random_tensor({2, 1, 5}, rng));
  return ps;
}

TEST(Checkpoint, HeaderLayout) {
  ParameterSet ps;
  ps.add("w", Tensor({1}, 1.0));
  const auto bytes = encode_checkpoint(make_checkpoint(ps));
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SFUS");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  // name_len=1, 'w', rank=1, dim=1 (u64), one f32
  EXPECT_EQ(bytes.size(), 8u + 4 + 1 + 4 + 8 + 4);
  const std::uint32_t one = std::bit_cast<std::uint32_t>(1.0f);
  EXPECT_EQ(bytes[bytes.size() - 1], (one >> 24) & 0xFF);
}

TEST(Checkpoint, BitExactRoundTrip) {
  ParameterSet ps = sample_params();
  const auto path = temp_file("roundtrip.bin");
  write_checkpoint(path, make_checkpoint(ps, {{"kind", "test"}, {"config", "{\"a\":1}"}}));
  Checkpoint loaded = read_checkpoint(path);
  EXPECT_EQ(loaded.meta.at("kind"), "test");
  EXPECT_EQ(loaded.meta.at("config"), "{\"a\":1}");
  EXPECT_EQ(encode_checkpoint(loaded), encode_checkpoint(read_checkpoint(path)));
  // re-encoding what was read reproduces the file byte for byte
  const auto second = temp_file("roundtrip2.bin");
  write_checkpoint(second, loaded);
  EXPECT_EQ(file_hash(path), file_hash(second));
}

TEST(Checkpoint, LoadIntoModelUsesFloat32Values) {
  ParameterSet ps = sample_params();
  Checkpoint ckpt = decode_checkpoint(encode_checkpoint(make_checkpoint(ps)));
  ParameterSet target = sample_params();
  for (Parameter* p : target.all()) p->value().fill(0.0);
  load_parameters(target, ckpt);
  const Tensor& original = ps.get("enc.w").value();
  const Tensor& restored = target.get("enc.w").value();
  for (std::size_t i = 0; i < original.size(); ++i) {
    EXPECT_EQ(restored[i], static_cast<double>(static_cast<float>(original[i])));
  }
}

TEST(Checkpoint, RejectsBadMagicVersionAndTruncation) {
  auto bytes = encode_checkpoint(make_checkpoint(sample_params()));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), CheckpointError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(decode_checkpoint(bad_version), CheckpointError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), CheckpointError);
}

TEST(Checkpoint, StrictLoading) {
  Checkpoint ckpt = make_checkpoint(sample_params());
  ParameterSet other;
  other.add("enc.w", Tensor({3, 4}));
  EXPECT_THROW(load_parameters(other, ckpt), CheckpointError);
  ParameterSet wrong_shape;
  wrong_shape.add("enc.w", Tensor({4, 3}));
  wrong_shape.add("enc.b", Tensor({4}));
  wrong_shape.add("head.k", Tensor({2, 1, 5}));
  EXPECT_THROW(load_parameters(wrong_shape, ckpt), CheckpointError);
}

TEST(ParameterHash, ChangesWithAnyValue) {
  ParameterSet ps = sample_params();
  const auto before = ps.hash();
  const auto enc_before = ps.hash("enc.");
  ps.get("head.k").value()[0] += 1e-9;
  EXPECT_NE(ps.hash(), before);
  EXPECT_EQ(ps.hash("enc."), enc_before);
}

}  // namespace
}  // namespace sfus::nn
