#include "pursuit/checkpoint.hpp"
#include "pursuit/trainer.hpp"

#include <doctest.h>
#include <zlib.h>

#include <cstdio>

using namespace pursuit;

namespace {

Checkpoint trained(const std::string& head, long frames) {
  TrainConfig cfg = TrainConfig::smoke();
  cfg.policy.head = head;
  cfg.frames = frames;
  Trainer trainer(cfg, training_corpus(cfg));
  Checkpoint c = trainer.initial_state();
  trainer.run(c, frames);
  return c;
}

// Replaces the crc32 trailer so edits reach the header checks.
std::string resign(std::string bytes) {
  bytes.resize(bytes.size() - 16);
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()),
                          static_cast<uInt>(bytes.size()));
  char trailer[32];
  std::snprintf(trailer, sizeof trailer, "\ncrc32 %08lx\n", crc);
  return bytes + trailer;
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  for (const char* head : {"gaussian", "softmax"}) {
    CAPTURE(head);
    const Checkpoint c = trained(head, 30);
    const std::string bytes = encode_checkpoint(c);
    const Checkpoint back = decode_checkpoint(bytes);
    CHECK(back == c);
    CHECK(encode_checkpoint(back) == bytes);

    const auto path = std::filesystem::temp_directory_path() / "pursuit_test.ckpt";
    save_checkpoint(c, path);
    CHECK(load_checkpoint(path) == c);
    std::filesystem::remove(path);
  }
}

TEST_CASE("corrupted checkpoints are rejected") {
  const Checkpoint c = trained("gaussian", 5);
  const std::string bytes = encode_checkpoint(c);

  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  CHECK_THROWS_AS(decode_checkpoint(flipped), CheckpointError);

  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 40)), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint("not a checkpoint"), CheckpointError);

  std::string other = bytes;
  const auto at = other.find("version 1");
  REQUIRE(at != std::string::npos);
  other[at + 8] = '2';
  CHECK_THROWS_AS(decode_checkpoint(other), CheckpointError);
  try {
    decode_checkpoint(resign(other));
    FAIL("expected a version error");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  CHECK(decode_checkpoint(resign(bytes)) == c);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/pursuit.ckpt"), CheckpointError);
}

TEST_CASE("f32 export is close and keeps atoms unit norm") {
  const Checkpoint c = trained("softmax", 10);
  const Checkpoint lossy = decode_checkpoint(encode_checkpoint(c, PayloadScalar::f32));
  CHECK_NOTHROW(lossy.dictionary.check_unit_norm());
  CHECK((lossy.dictionary.atoms - c.dictionary.atoms).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((policy_params(lossy.policy) - policy_params(c.policy)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(lossy.frame == c.frame);
  CHECK(encode_checkpoint(c, PayloadScalar::f32).size() < encode_checkpoint(c).size());
}
