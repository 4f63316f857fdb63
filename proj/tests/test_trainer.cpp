#include "pursuit/trainer.hpp"

#include <doctest.h>

#include <sstream>

using namespace pursuit;

namespace {

TrainConfig small(const std::string& head) {
  TrainConfig cfg = TrainConfig::smoke();
  cfg.policy.head = head;
  cfg.frames = 1000;
  cfg.checkpoint_every = 250;
  cfg.log_every = 100;
  return cfg;
}

std::string telemetry(const TrainConfig& cfg, Checkpoint* final_state = nullptr) {
  std::ostringstream out;
  TrainHooks hooks;
  hooks.on_frame = [&](const TelemetryRow& r) { write_telemetry_row(out, r); };
  const Checkpoint c = train(cfg, hooks);
  if (final_state) *final_state = c;
  return out.str();
}

}  // namespace

TEST_CASE("zero frames returns the initial state") {
  TrainConfig cfg = small("gaussian");
  cfg.frames = 0;
  int checkpoints = 0;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](const Checkpoint&) { ++checkpoints; };
  const Checkpoint c = train(cfg, hooks);
  CHECK(checkpoints == 1);
  CHECK(c.frame == 0);
  CHECK(c == Trainer(cfg, training_corpus(cfg)).initial_state());
  CHECK_FALSE(c.pending);
}

TEST_CASE("seeded runs are bit-identical and seeds matter") {
  for (const char* head : {"gaussian", "softmax"}) {
    CAPTURE(head);
    const TrainConfig cfg = small(head);
    Checkpoint a, b;
    const std::string ta = telemetry(cfg, &a);
    CHECK(ta == telemetry(cfg, &b));
    CHECK(a == b);
    TrainConfig other = cfg;
    other.seed = 2;
    CHECK(ta != telemetry(other));
  }
}

TEST_CASE("worker count does not change results") {
  TrainConfig cfg = small("gaussian");
  cfg.frames = 200;
  TrainConfig threaded = cfg;
  threaded.workers = 4;
  CHECK(telemetry(cfg) == telemetry(threaded));
}

TEST_CASE("resuming from a serialized checkpoint matches an uninterrupted run") {
  for (const char* head : {"gaussian", "softmax"}) {
    CAPTURE(head);
    const TrainConfig cfg = small(head);
    const Trainer trainer(cfg, training_corpus(cfg));

    std::ostringstream whole, split;
    TrainHooks hw, hs;
    hw.on_frame = [&](const TelemetryRow& r) { write_telemetry_row(whole, r); };
    hs.on_frame = [&](const TelemetryRow& r) { write_telemetry_row(split, r); };

    Checkpoint a = trainer.initial_state();
    trainer.run(a, 1000, hw);

    Checkpoint b = trainer.initial_state();
    trainer.run(b, 500, hs);
    Checkpoint resumed = decode_checkpoint(encode_checkpoint(b));
    trainer.run(resumed, 1000, hs);

    CHECK(whole.str() == split.str());
    CHECK(resumed == a);
  }
}

TEST_CASE("checkpoint cadence and telemetry invariants") {
  const TrainConfig cfg = small("softmax");
  std::vector<long> frames;
  std::vector<TelemetryRow> rows;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](const Checkpoint& c) { frames.push_back(c.frame); };
  hooks.on_row = [&](const TelemetryRow& r) { rows.push_back(r); };
  TrainStats stats;
  const Checkpoint last = train(cfg, hooks, &stats);
  CHECK(frames == std::vector<long>{0, 250, 500, 750, 1000});
  CHECK(rows.size() == 10);
  CHECK(last.frame == 1000);
  CHECK(stats.min_reward >= -1.0);
  CHECK(stats.max_reward <= 0.0);
  CHECK(stats.max_energy_defect <= 1e-9);
  CHECK(stats.nac_skipped == 0);
  CHECK_NOTHROW(last.dictionary.check_unit_norm());
  CHECK(last.dictionary.generation > 0);
  for (const auto& r : rows) {
    CHECK(r.reward == -r.recon_error);
    CHECK(r.action.cwiseAbs().maxCoeff() <= 5.0);
    CHECK(r.eye_velocity.cwiseAbs().maxCoeff() <= 4.0);
  }
}

TEST_CASE("a checkpoint from another config is refused") {
  const TrainConfig cfg = small("gaussian");
  TrainConfig other = cfg;
  other.critic.gamma = 0.5;
  Checkpoint c = Trainer(cfg, training_corpus(cfg)).initial_state();
  CHECK_THROWS_AS(Trainer(other, training_corpus(other)).run(c, 10), ConfigError);
}

TEST_CASE("learning-rate and temperature schedules") {
  TrainConfig cfg = small("softmax");
  cfg.policy.temperature = 2.0;
  cfg.policy.temperature_tau = 100.0;
  cfg.policy.temperature_min = 0.5;
  const Trainer t(cfg, training_corpus(cfg));
  CHECK(t.learning_rate(0) == cfg.dictionary.lr);
  CHECK(t.learning_rate(static_cast<long>(cfg.dictionary.lr_tau)) == doctest::Approx(cfg.dictionary.lr / 2));
  CHECK(t.temperature(0) == 2.0);
  CHECK(t.temperature(100) == doctest::Approx(2.0 * std::exp(-1.0)));
  CHECK(t.temperature(100000) == 0.5);
}
