#include <gtest/gtest.h>

#include <filesystem>

#include "dsiforge/checkpoint.hpp"
#include "dsiforge/error.hpp"

namespace dsi {
namespace {

Checkpoint sample() {
  Checkpoint c;
  c.tensors["w"] = Tensor::matrix(2, 3, {1, -2, 3.5, 0, 1e-300, -0.0});
  c.tensors["b"] = Tensor::vector({0.25});
  c.tensors["s"] = Tensor::scalar(7);
  c.rng = Rng(42, 17);
  c.metadata = "{\"k\": 1}";
  return c;
}

TEST(Checkpoint, EncodeDecodeIsExact) {
  const Checkpoint c = sample();
  const std::string bytes = encode_checkpoint(c);
  EXPECT_EQ(bytes.substr(0, 4), "DSF1");
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back.tensors, c.tensors);
  EXPECT_EQ(back.rng.key(), 42u);
  EXPECT_EQ(back.rng.counter(), 17u);
  EXPECT_EQ(back.metadata, c.metadata);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const std::string bytes = encode_checkpoint(sample());
  EXPECT_THROW(decode_checkpoint("XXXX" + bytes.substr(4)), ConfigError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ConfigError);
  EXPECT_THROW(decode_checkpoint(bytes + "!"), ConfigError);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "dsiforge_ckpt_test.dsf";
  save_checkpoint(path.string(), sample());
  EXPECT_EQ(load_checkpoint(path.string()).tensors, sample().tensors);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path.string()), ConfigError);
}

}  // namespace
}  // namespace dsi
