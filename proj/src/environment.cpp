#include "pursuit/environment.hpp"

namespace pursuit {

bool operator==(const EnvState& a, const EnvState& b) {
  return a.target.texture_id == b.target.texture_id && a.target.velocity == b.target.velocity &&
         a.target.phase == b.target.phase && a.target.position == b.target.position &&
         a.eye.velocity == b.eye.velocity && a.eye.position == b.eye.position && a.origin == b.origin &&
         a.previous_view == b.previous_view && a.rng == b.rng && a.frame_index == b.frame_index;
}

Environment::Environment(std::shared_ptr<const Corpus> corpus, EnvParams params)
    : corpus_(std::move(corpus)), params_(params) {
  if (!corpus_ || corpus_->empty()) throw ConfigError("environment corpus is empty");
  if (params_.episode_frames < 1) throw ConfigError("env.episode_frames must be >= 1");
  if (!(params_.max_speed > 0.0)) throw ConfigError("env.max_speed must be > 0");
  if (!(params_.max_accel > 0.0)) throw ConfigError("env.max_accel must be > 0");
}

void Environment::draw_episode(EnvState& state) const {
  state.target.texture_id = static_cast<std::size_t>(state.rng.below(corpus_->size()));
  const double vx = state.rng.uniform(-params_.max_speed, params_.max_speed);
  const double vy = state.rng.uniform(-params_.max_speed, params_.max_speed);
  state.target.velocity = {vx, vy};
  state.target.phase = 0;
  const auto& chosen = (*corpus_)[state.target.texture_id];
  state.origin = {state.rng.uniform(0.0, static_cast<double>(chosen.cols())),
                  state.rng.uniform(0.0, static_cast<double>(chosen.rows()))};
  state.target.position = Vec2::Zero();
  state.eye.position = Vec2::Zero();
}

EnvState Environment::reset(std::uint64_t seed) const {
  EnvState state;
  state.rng = Rng(derive_seed(seed, "env"));
  state.eye.velocity = Vec2::Zero();
  draw_episode(state);
  // The initial pair shows the target drifting at its own velocity past a still eye.
  state.previous_view = state.view() + state.slip();
  state.frame_index = 0;
  return state;
}

std::pair<FramePair, EnvState> Environment::step(const EnvState& state, const Action& action) const {
  EnvState next = state;
  if (next.target.phase + 1 >= params_.episode_frames) {
    draw_episode(next);
  } else {
    ++next.target.phase;
  }
  next.eye.velocity = clip(next.eye.velocity + action.accel, params_.max_speed);
  // Retinal translation between the two rendered frames equals the post-update slip.
  const Vec2 before = next.view();
  next.target.position += next.target.velocity;
  next.eye.position += next.eye.velocity;
  next.previous_view = before;
  ++next.frame_index;
  return {render(next), std::move(next)};
}

FramePair Environment::render(const EnvState& state) const {
  const auto& tex = (*corpus_)[state.target.texture_id];
  const Vec2 now = state.view();
  return {sample_window(tex, state.previous_view.x(), state.previous_view.y(), state.frame_index - 1),
          sample_window(tex, now.x(), now.y(), state.frame_index)};
}

Action ideal_action(const Vec2& slip, double max_accel) { return Action{clip(slip, max_accel)}; }

}  // namespace pursuit
