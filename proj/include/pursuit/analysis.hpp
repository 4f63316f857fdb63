#pragma once

#include "pursuit/checkpoint.hpp"
#include "pursuit/config.hpp"

#include <array>
#include <functional>
#include <optional>
#include <vector>

namespace pursuit {

// ---- slip grid ------------------------------------------------------------

struct SlipCondition {
  Vec2 slip = Vec2::Zero();
  Vec2 mean_action = Vec2::Zero();
  double sq_error = 0.0;  // mean over pairs (and trials) of |action - ideal|^2
};

struct SlipGridResult {
  std::vector<SlipCondition> conditions;  // 81 rows, sy-major from (-4, -4)
  double mse = 0.0;
  // Error grouped by rounded Euclidean slip magnitude; index = magnitude in px/frame.
  std::vector<double> magnitude_mse;
  std::vector<int> magnitude_count;

  /// Conditions whose mean action has a positive inner product with the ideal action.
  int toward_origin() const;
};

/// Maps a frame pair and its true slip to an action.
using ActionFn = std::function<Vec2(const FramePair& pair, const Vec2& slip)>;

struct GridOptions {
  int pairs = 50;
  int max_slip = 4;
  std::uint64_t seed = 7;
  double max_accel = Units::max_accel_px;
};

/// Each trial is evaluated on the same 50 windows per condition; the previous
/// window is drawn at random on a held-out texture and the current one is
/// shifted by -slip (content moves by +slip). Holdout order does not matter.
SlipGridResult eval_slip_grid(const std::vector<ActionFn>& trials, const Corpus& holdout,
                              const GridOptions& opt = {});

/// Greedy action of a checkpoint's policy through its dictionary.
ActionFn greedy_agent(const Checkpoint& ckpt, const TrainConfig& cfg);
ActionFn ideal_agent(double max_accel = Units::max_accel_px);

/// Closed-form grid MSE of an agent that always outputs zero.
double zero_action_grid_mse(int max_slip = 4, double max_accel = Units::max_accel_px);

struct CurvePoint {
  long frame = 0;
  double mse = 0.0;
  double stddev = 0.0;  // across trials; 0 for a single trial
};

/// trials[k][j] is the j-th checkpoint of trial k; all trials must have the
/// same number of checkpoints. Frames are taken from trial 0.
std::vector<CurvePoint> mse_training_curve(const std::vector<std::vector<Checkpoint>>& trials,
                                           const TrainConfig& cfg, const Corpus& holdout, const GridOptions& opt);

// ---- Gabor fitting ----------------------------------------------------------

struct GaborParams {
  double cx = 4.5, cy = 4.5;  // envelope centre (column, row) in pixels
  double theta = 0.0;         // direction of the carrier's wave vector, radians
  double lambda = 6.0;        // wavelength, px
  double sigma_u = 2.5;       // envelope width along the wave vector
  double sigma_v = 2.5;       // envelope width along the stripes
  double phase_prev = 0.0;
  double phase_curr = 0.0;
  double amplitude = 1.0;
};

/// Two 10x10 Gabor halves sharing every parameter but phase; each half has
/// its mean removed. Carrier: cos(2 pi u / lambda - phase).
VectorXd gabor_atom(const GaborParams& p, int size = 10);

struct GaborFit {
  bool fit = false;  // false: degenerate atom
  GaborParams params;
  double orientation_deg = 0.0;  // wave-vector direction folded into [0, 180)
  double error = 0.0;            // |atom - model|^2 / |atom|^2
  double phase_shift() const;    // (phase_curr - phase_prev) wrapped to (-pi, pi]
};

GaborFit fit_gabor(const VectorXd& atom, int size = 10);

/// Displacement per frame along the wave vector: phase_shift * lambda / (2 pi).
double preferred_velocity(const GaborFit& fit);

// ---- tuning -----------------------------------------------------------------

struct TuningCurve {
  bool fit = false;
  std::vector<double> directions_deg;  // 24 directions
  std::vector<double> direction_response;
  std::vector<double> speeds;          // -4 .. 4 step 0.25
  std::vector<double> speed_response;
  double best_orientation_deg = 0.0;   // [0, 180)
  double best_wavelength = 0.0;
  double best_speed = 0.0;             // signed, along best_orientation
  int direction_peak = 0;
  int speed_peak = 0;
};

/// Maximum over grating phase of the squared normalized correlation between
/// the atom and a drifting cosine grating (direction in radians, wavelength
/// px, speed px/frame). Always in [0, 1].
double grating_response(const VectorXd& atom, double direction, double wavelength, double speed, int size = 10);

TuningCurve tuning_curves(const VectorXd& atom, int size = 10);

// ---- histograms -------------------------------------------------------------

struct PreferenceHistograms {
  std::vector<double> orientation_edges;  // 13 edges over [0, 180)
  std::vector<int> orientation_counts;    // 12 bins of 15 degrees
  std::vector<double> velocity_centers;   // -4 .. 4 step 0.5
  std::vector<int> velocity_counts;       // 17 bins of width 0.5
  int included = 0;
  int velocity_out_of_range = 0;
  int slow_count = 0;  // included fits with |v| < 1

  double slow_fraction() const { return included > 0 ? static_cast<double>(slow_count) / included : 0.0; }
  int velocity_mode_bin() const;
};

PreferenceHistograms preference_histograms(const std::vector<GaborFit>& fits, double threshold = 0.3);

/// Tiles atoms as (previous over current) strips into one image for PGM output.
GrayImage render_atoms(const Dictionary& dict, int size = 10, int per_row = 20);

}  // namespace pursuit
