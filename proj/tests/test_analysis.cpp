#include "pursuit/analysis.hpp"
#include "pursuit/trainer.hpp"

#include <doctest.h>

#include <algorithm>

using namespace pursuit;

namespace {

constexpr double kDeg = M_PI / 180.0;

const Corpus& holdout() {
  static const Corpus c = synth_corpus(99, 3, 128);
  return c;
}

double angle_diff_deg(double a, double b, double period = 180.0) {
  const double d = std::fmod(std::abs(a - b), period);
  return std::min(d, period - d);
}

VectorXd unit(VectorXd v) { return v / v.norm(); }

GaborParams gabor(double theta_deg, double lambda, double dphi) {
  GaborParams p;
  p.cx = 4.7;
  p.cy = 4.3;
  p.theta = theta_deg * kDeg;
  p.lambda = lambda;
  p.sigma_u = 2.2;
  p.sigma_v = 2.8;
  p.phase_prev = 0.4;
  p.phase_curr = 0.4 + dphi;
  return p;
}

GaborFit make_fit(double orientation_deg, double lambda, double dphi, double error) {
  GaborFit f;
  f.fit = true;
  f.params.theta = orientation_deg * kDeg;
  f.params.lambda = lambda;
  f.params.phase_prev = 0.0;
  f.params.phase_curr = dphi;
  f.orientation_deg = orientation_deg;
  f.error = error;
  return f;
}

}  // namespace

TEST_CASE("the ideal agent scores exactly zero") {
  const SlipGridResult r = eval_slip_grid({ideal_agent()}, holdout(), {10});
  CHECK(r.mse == 0.0);
  CHECK(r.conditions.size() == 81);
  CHECK(r.toward_origin() == 80);  // the zero-slip condition has no direction
  CHECK(r.conditions.front().slip == Vec2(-4, -4));
  CHECK(r.conditions[1].slip == Vec2(-3, -4));
  CHECK_THROWS_AS(eval_slip_grid({ideal_agent()}, Corpus{}, {10}), ConfigError);
}

TEST_CASE("a still agent matches the closed-form grid average") {
  const double closed = zero_action_grid_mse();
  // Per-axis clipping at 5 never binds on a +-4 grid; the mean of s^2 per axis is 60/9.
  CHECK(closed == doctest::Approx(2.0 * 60.0 / 9.0));
  const SlipGridResult zero = eval_slip_grid({[](const FramePair&, const Vec2&) { return Vec2::Zero(); }}, holdout(), {5});
  CHECK(zero.mse == doctest::Approx(closed).epsilon(1e-12));
  CHECK(zero.toward_origin() == 0);

  TrainConfig cfg = TrainConfig::smoke();
  cfg.policy.head = "gaussian";
  const Checkpoint init = Trainer(cfg, training_corpus(cfg)).initial_state();
  const SlipGridResult untrained = eval_slip_grid({greedy_agent(init, cfg)}, holdout(), {5});
  CHECK(std::abs(untrained.mse - closed) < 0.05 * closed);
  for (const auto& c : untrained.conditions) CHECK(c.mean_action.norm() < 0.2);
}

TEST_CASE("magnitude buckets partition the grid") {
  const SlipGridResult zero = eval_slip_grid({[](const FramePair&, const Vec2&) { return Vec2::Zero(); }}, holdout(), {2});
  int total = 0;
  double weighted = 0.0;
  for (std::size_t m = 0; m < zero.magnitude_count.size(); ++m) {
    total += zero.magnitude_count[m];
    weighted += zero.magnitude_count[m] * zero.magnitude_mse[m];
  }
  CHECK(total == 81);
  CHECK(zero.magnitude_count[0] == 1);
  CHECK(zero.magnitude_mse[0] == 0.0);
  CHECK(weighted / 81.0 == doctest::Approx(zero.mse));
}

TEST_CASE("grid results do not depend on holdout order") {
  TrainConfig cfg = TrainConfig::smoke();
  cfg.policy.head = "softmax";
  const Checkpoint init = Trainer(cfg, training_corpus(cfg)).initial_state();
  Corpus reversed = holdout();
  std::reverse(reversed.begin(), reversed.end());
  const auto a = eval_slip_grid({greedy_agent(init, cfg)}, holdout(), {4});
  const auto b = eval_slip_grid({greedy_agent(init, cfg)}, reversed, {4});
  CHECK(a.mse == b.mse);
  for (std::size_t i = 0; i < a.conditions.size(); ++i) CHECK(a.conditions[i].mean_action == b.conditions[i].mean_action);
}

TEST_CASE("mse_training_curve") {
  TrainConfig cfg = TrainConfig::smoke();
  const Trainer trainer(cfg, training_corpus(cfg));
  const Checkpoint c0 = trainer.initial_state();
  Checkpoint c1 = c0;
  trainer.run(c1, 20);
  const GridOptions opt{3};

  const auto single = mse_training_curve({{c0}}, cfg, holdout(), opt);
  REQUIRE(single.size() == 1);
  CHECK(single[0].frame == 0);
  CHECK(single[0].stddev == 0.0);

  TrainConfig other = cfg;
  other.seed = 2;
  const Trainer t2(other, training_corpus(other));
  Checkpoint d0 = t2.initial_state(), d1 = d0;
  t2.run(d1, 20);
  const auto curve = mse_training_curve({{c0, c1}, {d0, d1}, {c0, c1}}, cfg, holdout(), opt);
  REQUIRE(curve.size() == 2);
  CHECK(curve[1].frame == 20);
  const double e0 = eval_slip_grid({greedy_agent(c1, cfg)}, holdout(), opt).mse;
  const double e1 = eval_slip_grid({greedy_agent(d1, other)}, holdout(), opt).mse;
  const double mean = (2 * e0 + e1) / 3;
  const double sd = std::sqrt((2 * (e0 - mean) * (e0 - mean) + (e1 - mean) * (e1 - mean)) / 2);
  CHECK(curve[1].mse == doctest::Approx(mean));
  CHECK(curve[1].stddev == doctest::Approx(sd));
  CHECK(curve[1].stddev > 0.0);
  CHECK_THROWS_AS(mse_training_curve({{c0, c1}, {d0}}, cfg, holdout(), opt), ConfigError);
}

TEST_CASE("fit_gabor recovers synthetic parameters") {
  const GaborParams truth = gabor(30.0, 6.0, M_PI / 3);
  const GaborFit f = fit_gabor(unit(gabor_atom(truth)));
  REQUIRE(f.fit);
  CHECK(f.params.lambda == doctest::Approx(6.0).epsilon(0.05));
  CHECK(angle_diff_deg(f.orientation_deg, 30.0) < 0.05 * 30.0);
  CHECK(std::abs(f.phase_shift() - M_PI / 3) < 0.05);
  CHECK(f.error < 1e-3);
}

TEST_CASE("fit_gabor is rotation-consistent") {
  for (double base : {10.0, 30.0, 75.0}) {
    CAPTURE(base);
    const GaborFit a = fit_gabor(unit(gabor_atom(gabor(base, 5.0, 0.5))));
    GaborParams rotated = gabor(base + 90.0, 5.0, 0.5);
    const GaborFit b = fit_gabor(unit(gabor_atom(rotated)));
    REQUIRE(a.fit);
    REQUIRE(b.fit);
    CHECK(angle_diff_deg(b.orientation_deg, a.orientation_deg + 90.0) < 1.5);
    CHECK(b.params.lambda == doctest::Approx(a.params.lambda).epsilon(0.05));
    CHECK(std::abs(b.phase_shift() - a.phase_shift()) < 0.05);
    CHECK(b.error < 1e-3);
  }
}

TEST_CASE("degenerate atoms are unfit") {
  CHECK_FALSE(fit_gabor(VectorXd::Zero(200)).fit);
  CHECK_FALSE(tuning_curves(VectorXd::Zero(200)).fit);
}

TEST_CASE("preferred_velocity examples") {
  CHECK(preferred_velocity(make_fit(0, 7, 0.0, 0)) == 0.0);
  CHECK(preferred_velocity(make_fit(0, 4, M_PI, 0)) == doctest::Approx(2.0));

  // A grating displaced by 1 px between frames at wavelength 10.
  GaborParams p = gabor(20.0, 10.0, 2 * M_PI / 10);
  p.sigma_u = p.sigma_v = 3.5;
  const GaborFit f = fit_gabor(unit(gabor_atom(p)));
  REQUIRE(f.fit);
  CHECK(f.phase_shift() == doctest::Approx(2 * M_PI / 10).epsilon(0.05));
  CHECK(preferred_velocity(f) == doctest::Approx(1.0).epsilon(0.05));

  const GaborFit half = fit_gabor(unit(gabor_atom(gabor(20.0, 4.0, M_PI))));
  REQUIRE(half.fit);
  CHECK(std::abs(preferred_velocity(half)) == doctest::Approx(2.0).epsilon(0.05));
  const TuningCurve t = tuning_curves(unit(gabor_atom(gabor(20.0, 4.0, M_PI))));
  CHECK(std::abs(t.best_speed) == doctest::Approx(2.0).epsilon(0.125));
}

TEST_CASE("preferred_velocity agrees with the velocity tuning peak") {
  for (const auto& [theta, lambda, dphi] :
       std::vector<std::tuple<double, double, double>>{{0, 6, 0.5}, {45, 8, -1.0}, {100, 5, 1.5}, {150, 7, 0.0}}) {
    CAPTURE(theta);
    const VectorXd atom = unit(gabor_atom(gabor(theta, lambda, dphi)));
    const GaborFit f = fit_gabor(atom);
    REQUIRE(f.error < 1e-3);
    const TuningCurve t = tuning_curves(atom);
    // Tuning speed is signed along best_orientation; align it with the fitted wave vector.
    const bool flipped = angle_diff_deg(t.best_orientation_deg, f.params.theta / kDeg, 360.0) > 90.0;
    const double v_tuning = flipped ? -t.best_speed : t.best_speed;
    CHECK(std::abs(v_tuning - preferred_velocity(f)) <= 0.25);
  }
}

TEST_CASE("tuning_curves examples") {
  SUBCASE("identical halves are tuned to zero speed") {
    GaborParams p = gabor(40.0, 6.0, 0.0);
    const TuningCurve t = tuning_curves(unit(gabor_atom(p)));
    REQUIRE(t.fit);
    REQUIRE(t.speeds.size() == 33);
    CHECK(t.speeds[static_cast<std::size_t>(t.speed_peak)] == 0.0);
    for (std::size_t i = 0; i < t.speeds.size(); ++i)
      CHECK(t.speed_response[i] == doctest::Approx(t.speed_response[t.speeds.size() - 1 - i]).epsilon(1e-9));
  }
  SUBCASE("drifting grating at 30 degrees, 1 px per frame") {
    GaborParams p = gabor(30.0, 6.0, 2 * M_PI / 6);
    p.sigma_u = p.sigma_v = 3.0;
    const TuningCurve t = tuning_curves(unit(gabor_atom(p)));
    REQUIRE(t.directions_deg.size() == 24);
    CHECK(angle_diff_deg(t.directions_deg[static_cast<std::size_t>(t.direction_peak)], 30.0, 360.0) <= 7.5);
    CHECK(std::abs(t.speeds[static_cast<std::size_t>(t.speed_peak)] - 1.0) <= 0.25);
  }
  SUBCASE("responses lie in [0, 1]") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      VectorXd atom(200);
      for (Index i = 0; i < 200; ++i) atom(i) = rng.normal();
      const TuningCurve t = tuning_curves(unit(atom));
      for (double r : t.direction_response) CHECK((r >= 0.0 && r <= 1.0 + 1e-12));
      for (double r : t.speed_response) CHECK((r >= 0.0 && r <= 1.0 + 1e-12));
      const double g = grating_response(unit(atom), rng.uniform(0, 2 * M_PI), rng.uniform(2, 20), rng.uniform(-4, 4));
      CHECK((g >= 0.0 && g <= 1.0 + 1e-12));
    }
  }
  SUBCASE("an atom that is itself a windowed grating responds fully") {
    // Plain cosine/sine halves with zero mean over the patch.
    const double resp = grating_response(unit(gabor_atom(gabor(0.0, 5.0, 0.0))), 0.0, 5.0, 0.0);
    CHECK(resp > 0.5);
  }
}

TEST_CASE("preference histograms") {
  const std::vector<GaborFit> fits{
      make_fit(10.0, 4.0, 0.0, 0.1),             // bin 0, v = 0
      make_fit(20.0, 4.0, M_PI / 2, 0.2),        // bin 1, v = 1
      make_fit(100.0, 8.0, -M_PI / 2, 0.25),     // bin 6, v = -2
      make_fit(170.0, 4.0, 0.0, 0.4),            // above threshold
  };
  const PreferenceHistograms h = preference_histograms(fits, 0.3);
  CHECK(h.included == 3);
  CHECK(h.orientation_counts == std::vector<int>{1, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0});
  std::vector<int> v(17, 0);
  v[8] = 1;
  v[10] = 1;
  v[4] = 1;
  CHECK(h.velocity_counts == v);
  CHECK(h.slow_count == 1);
  CHECK(h.slow_fraction() == doctest::Approx(1.0 / 3));
  CHECK(h.velocity_out_of_range == 0);

  const PreferenceHistograms empty = preference_histograms(fits, 0.05);
  CHECK(empty.included == 0);
  CHECK(empty.slow_fraction() == 0.0);
  CHECK(std::all_of(empty.orientation_counts.begin(), empty.orientation_counts.end(), [](int c) { return c == 0; }));
}

TEST_CASE("render_atoms tiles previous over current") {
  Dictionary d;
  d.atoms = MatrixXd::Zero(200, 3);
  d.atoms(0, 1) = 1.0;     // previous half, top-left pixel of atom 1
  d.atoms(100, 2) = -1.0;  // current half, top-left pixel of atom 2
  const GrayImage img = render_atoms(d, 10, 2);
  CHECK(img.rows() == 2 * 21 + 1);
  CHECK(img.cols() == 2 * 11 + 1);
  CHECK(img(1, 12) == 1.0);
  CHECK(img(22 + 10, 1) == 0.0);
}
