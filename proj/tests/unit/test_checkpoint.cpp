#include <fstream>

#include "patchlikely/checkpoint.hpp"
#include "test_util.hpp"

using namespace patchlikely;

namespace {

Checkpoint sample_checkpoint() {
  Rng rng(3);
  Checkpoint ck;
  ck.params = init_flow(FlowConfig{4, 3, 2, 4}, rng);
  ck.optimizer = AdamState::zeros_like(ck.params);
  for (Tensor& m : ck.optimizer.m)
    for (float& v : m.data()) v = static_cast<float>(rng.normal());
  for (Tensor& v2 : ck.optimizer.v)
    for (float& v : v2.data()) v = static_cast<float>(rng.uniform());
  ck.step = 1234;
  ck.seed = 0xfeedfacecafebeefULL;
  return ck;
}

void write_bytes(const std::filesystem::path& p, const std::vector<uint8_t>& bytes) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string error_of(const std::vector<uint8_t>& bytes) {
  try {
    deserialize_checkpoint(bytes, "test.plfw");
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  testutil::TempDir dir;
  Checkpoint ck = sample_checkpoint();
  save_checkpoint(ck, dir / "a.plfw");
  Checkpoint back = load_checkpoint(dir / "a.plfw");
  EXPECT_EQ(back.step, ck.step);
  EXPECT_EQ(back.seed, ck.seed);
  EXPECT_EQ(back.params.config, ck.params.config);
  auto a = ck.params.tensors();
  auto b = back.params.tensors();
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
  EXPECT_EQ(back.optimizer.m, ck.optimizer.m);
  EXPECT_EQ(back.optimizer.v, ck.optimizer.v);
  save_checkpoint(back, dir / "b.plfw");
  EXPECT_EQ(read_file_bytes(dir / "a.plfw"), read_file_bytes(dir / "b.plfw"));
  EXPECT_FALSE(std::filesystem::exists(dir / "a.plfw.tmp"));
}

TEST(Checkpoint, HeaderLayout) {
  std::vector<uint8_t> bytes = serialize_checkpoint(sample_checkpoint());
  ASSERT_GT(bytes.size(), 40u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PLFW");
  EXPECT_EQ(bytes[4], 1);  // version, little-endian
  EXPECT_EQ(bytes[8], 4);  // patch size
  EXPECT_EQ(bytes[12], 3);  // channels
  EXPECT_EQ(bytes[16], 2);  // K
  EXPECT_EQ(bytes[20], 4);  // hidden width
  EXPECT_EQ(bytes[24], 1234 & 0xff);
  EXPECT_EQ(bytes[25], 1234 >> 8);
}

TEST(Checkpoint, WrongMagicRejected) {
  std::vector<uint8_t> bytes = serialize_checkpoint(sample_checkpoint());
  bytes[0] = 'X';
  const std::string msg = error_of(bytes);
  EXPECT_NE(msg.find("magic"), std::string::npos) << msg;
  EXPECT_NE(msg.find("test.plfw"), std::string::npos) << msg;
}

TEST(Checkpoint, NextVersionIsUnsupported) {
  std::vector<uint8_t> bytes = serialize_checkpoint(sample_checkpoint());
  bytes[4] = static_cast<uint8_t>(kCheckpointVersion + 1);
  try {
    deserialize_checkpoint(bytes, "v2.plfw");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnsupported);
    EXPECT_NE(std::string(e.what()).find("unsupported version"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, TruncationAndCorruptionRejected) {
  const std::vector<uint8_t> good = serialize_checkpoint(sample_checkpoint());
  for (size_t cut : {size_t{3}, size_t{30}, good.size() / 2, good.size() - 1}) {
    std::vector<uint8_t> bytes(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_FALSE(error_of(bytes).empty()) << "cut at " << cut;
  }
  std::vector<uint8_t> flipped = good;
  flipped[good.size() / 2] ^= 0x10;
  EXPECT_NE(error_of(flipped).find("CRC"), std::string::npos) << error_of(flipped);
  std::vector<uint8_t> trailing = good;
  trailing.push_back(0);
  EXPECT_FALSE(error_of(trailing).empty());
}

TEST(Checkpoint, FailedLoadLeavesNoPartialState) {
  testutil::TempDir dir;
  std::vector<uint8_t> bytes = serialize_checkpoint(sample_checkpoint());
  bytes[0] = 'Q';
  write_bytes(dir / "bad.plfw", bytes);
  EXPECT_THROW(load_checkpoint(dir / "bad.plfw"), Error);
  EXPECT_THROW(load_checkpoint(dir / "missing.plfw"), Error);
}

TEST(Checkpoint, ContentHashIsStable) {
  EXPECT_EQ(content_hash({}), "cbf29ce484222325");
  EXPECT_EQ(content_hash({'a'}), "af63dc4c8601ec8c");
}
