#pragma once

#include "pursuit/checkpoint.hpp"
#include "pursuit/config.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <vector>

namespace pursuit {

/// One telemetry row. Slip and eye velocity are those seen by the frame pair
/// that produced `recon_error`; `action` is the command issued in response.
struct TelemetryRow {
  long frame = 0;
  double recon_error = 0.0;
  double reward = 0.0;
  Vec2 slip = Vec2::Zero();
  Vec2 eye_velocity = Vec2::Zero();
  Vec2 action = Vec2::Zero();

  friend bool operator==(const TelemetryRow&, const TelemetryRow&) = default;
};

inline constexpr const char* kTelemetryHeader = "frame,recon_error,reward,slip_x,slip_y,eye_vx,eye_vy,action_x,action_y";

void write_telemetry_row(std::ostream& out, const TelemetryRow& row);

/// Per-run health counters, updated every frame.
struct TrainStats {
  double max_energy_defect = 0.0;
  double min_reward = 0.0;
  double max_reward = -1.0;
  long nac_skipped = 0;
};

struct TrainHooks {
  std::function<void(const TelemetryRow&)> on_row;            // at log cadence
  std::function<void(const TelemetryRow&)> on_frame;          // every frame
  std::function<void(const Checkpoint&)> on_checkpoint;       // at checkpoint cadence and at the end
};

/// Training and held-out corpora for a config (directories or synthetic).
std::shared_ptr<const Corpus> training_corpus(const TrainConfig& cfg);
Corpus holdout_corpus(const TrainConfig& cfg);

/// Per frame: encode the current pair, reward = -error, pool, finish the
/// pending actor-critic transition, sample an action, step the environment,
/// then update the dictionary with the codes of this frame.
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::shared_ptr<const Corpus> corpus);

  const TrainConfig& config() const { return cfg_; }
  const Environment& environment() const { return env_; }

  Checkpoint initial_state() const;

  /// Advances `state` until state.frame == until_frame. Numeric failures are
  /// rethrown as NumericError naming the frame.
  void run(Checkpoint& state, long until_frame, const TrainHooks& hooks = {}, TrainStats* stats = nullptr) const;

  double learning_rate(long frame) const;
  double temperature(long frame) const;
  double actor_step(long frame) const;

  /// Conditioned features of a frame pair under a dictionary snapshot.
  VectorXd features(const BatchEncoder& encoder, const FramePair& pair, EncodedBatch* encoded = nullptr) const;

 private:
  TrainConfig cfg_;
  Environment env_;
};

/// Runs a full config from its initial state, emitting checkpoints at frame 0,
/// every checkpoint cadence, and at the end.
Checkpoint train(const TrainConfig& cfg, const TrainHooks& hooks = {}, TrainStats* stats = nullptr);

}  // namespace pursuit
