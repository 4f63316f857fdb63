#pragma once

#include "pursuit/core.hpp"
#include "pursuit/imagery.hpp"

#include <memory>
#include <vector>

namespace pursuit {

struct EnvParams {
  int episode_frames = Units::episode_frames;
  double max_speed = Units::max_speed_px;
  double max_accel = Units::max_accel_px;
};

struct TargetState {
  std::size_t texture_id = 0;
  Vec2 velocity = Vec2::Zero();
  int phase = 0;
  Vec2 position = Vec2::Zero();
};

struct EyeState {
  Vec2 velocity = Vec2::Zero();
  Vec2 position = Vec2::Zero();
};

/// Acceleration command in px/frame^2.
struct Action {
  Vec2 accel = Vec2::Zero();
};

/// Full simulator state. The fovea looks at texture point
/// `origin + eye.position - target.position`; the previous frame's view
/// point is kept so a frame pair can be re-rendered from the state alone.
struct EnvState {
  TargetState target;
  EyeState eye;
  Vec2 origin = Vec2::Zero();
  Vec2 previous_view = Vec2::Zero();
  Rng rng;
  long frame_index = 0;

  Vec2 slip() const { return target.velocity - eye.velocity; }
  Vec2 view() const { return origin + eye.position - target.position; }
};

bool operator==(const EnvState& a, const EnvState& b);

using Corpus = std::vector<GrayImage>;

/// Planar pursuit environment over a fixed texture corpus.
class Environment {
 public:
  Environment(std::shared_ptr<const Corpus> corpus, EnvParams params = {});

  EnvState reset(std::uint64_t seed) const;

  /// Episode redraw, eye velocity update and clip, position advance, render.
  std::pair<FramePair, EnvState> step(const EnvState& state, const Action& action) const;

  /// Frames t-1 and t of the given state.
  FramePair render(const EnvState& state) const;

  const EnvParams& params() const { return params_; }
  const Corpus& corpus() const { return *corpus_; }

 private:
  void draw_episode(EnvState& state) const;

  std::shared_ptr<const Corpus> corpus_;
  EnvParams params_;
};

/// Acceleration that cancels `slip` in one step, clipped to the action bound.
Action ideal_action(const Vec2& slip, double max_accel = Units::max_accel_px);

}  // namespace pursuit
