#pragma once

#include "pursuit/environment.hpp"
#include "pursuit/policy.hpp"
#include "pursuit/sparsecode.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace pursuit {

/// Everything the training loop needs to continue bit-identically.
struct Checkpoint {
  Dictionary dictionary;
  Policy policy;
  CriticState critic;
  EnvState env;
  Rng policy_rng;
  // Transition awaiting its reward: features and action of the previous frame.
  bool pending = false;
  VectorXd pending_features;
  PolicySample pending_sample;
  long frame = 0;
  std::uint64_t config_hash = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&);
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PayloadScalar { f64, f32 };

/// Text header, blank line, little-endian payload. f32 payloads are lossy and
/// meant for interchange; only f64 round-trips exactly.
std::string encode_checkpoint(const Checkpoint& ckpt, PayloadScalar scalar = PayloadScalar::f64);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path,
                     PayloadScalar scalar = PayloadScalar::f64);
Checkpoint load_checkpoint(const std::filesystem::path& path);

inline constexpr int kCheckpointVersion = 1;

}  // namespace pursuit
