#include "pursuit/analysis.hpp"

#include "pursuit/features.hpp"
#include "pursuit/trainer.hpp"

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>
#include <numeric>

namespace pursuit {

// ---- slip grid ------------------------------------------------------------

namespace {

std::uint64_t content_hash(const GrayImage& img) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(img.rows()));
  mix(static_cast<std::uint64_t>(img.cols()));
  for (Index i = 0; i < img.size(); ++i) mix(std::bit_cast<std::uint64_t>(img.data()[i]));
  return h;
}

double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * M_PI);
  return a <= -M_PI ? a + 2.0 * M_PI : a;
}

}  // namespace

int SlipGridResult::toward_origin() const {
  int n = 0;
  for (const auto& c : conditions) n += c.mean_action.dot(c.slip) > 0.0 ? 1 : 0;
  return n;
}

SlipGridResult eval_slip_grid(const std::vector<ActionFn>& trials, const Corpus& holdout, const GridOptions& opt) {
  if (holdout.empty()) throw ConfigError("held-out corpus is empty");
  if (trials.empty()) throw ConfigError("no trials to evaluate");
  if (opt.pairs < 1) throw ConfigError("eval.pairs must be >= 1");

  std::vector<std::pair<std::uint64_t, std::size_t>> order;
  for (std::size_t i = 0; i < holdout.size(); ++i) order.emplace_back(content_hash(holdout[i]), i);
  std::sort(order.begin(), order.end());

  struct Window {
    std::size_t image;
    double x, y;
  };
  Rng rng(opt.seed);
  std::vector<Window> windows;
  for (int j = 0; j < opt.pairs; ++j) {
    const std::size_t img = order[static_cast<std::size_t>(j) % order.size()].second;
    const double x = rng.uniform(0.0, static_cast<double>(holdout[img].cols()));
    const double y = rng.uniform(0.0, static_cast<double>(holdout[img].rows()));
    windows.push_back({img, x, y});
  }

  SlipGridResult out;
  const int m = opt.max_slip;
  const auto max_mag = static_cast<std::size_t>(std::lround(std::sqrt(2.0) * m));
  out.magnitude_mse.assign(max_mag + 1, 0.0);
  out.magnitude_count.assign(max_mag + 1, 0);
  const double samples = static_cast<double>(opt.pairs) * static_cast<double>(trials.size());
  for (int sy = -m; sy <= m; ++sy) {
    for (int sx = -m; sx <= m; ++sx) {
      SlipCondition c;
      c.slip = {static_cast<double>(sx), static_cast<double>(sy)};
      const Vec2 ideal = clip(c.slip, opt.max_accel);
      for (const auto& w : windows) {
        const GrayImage& img = holdout[w.image];
        const FramePair pair{sample_window(img, w.x, w.y, 0), sample_window(img, w.x - sx, w.y - sy, 1)};
        for (const auto& agent : trials) {
          const Vec2 a = agent(pair, c.slip);
          c.mean_action += a;
          c.sq_error += (a - ideal).squaredNorm();
        }
      }
      c.mean_action /= samples;
      c.sq_error /= samples;
      const auto mag = static_cast<std::size_t>(std::lround(c.slip.norm()));
      out.magnitude_mse[mag] += c.sq_error;
      ++out.magnitude_count[mag];
      out.conditions.push_back(c);
    }
  }
  for (std::size_t k = 0; k < out.magnitude_mse.size(); ++k)
    if (out.magnitude_count[k] > 0) out.magnitude_mse[k] /= out.magnitude_count[k];
  for (const auto& c : out.conditions) out.mse += c.sq_error;
  out.mse /= static_cast<double>(out.conditions.size());
  return out;
}

ActionFn greedy_agent(const Checkpoint& ckpt, const TrainConfig& cfg) {
  auto encoder = std::make_shared<const BatchEncoder>(ckpt.dictionary, cfg.pursuit());
  auto policy = std::make_shared<const Policy>(ckpt.policy);
  const PatchGeometry geometry = cfg.geometry();
  const FeatureOptions fopt = cfg.features;
  const Index atoms = ckpt.dictionary.size();
  return [=](const FramePair& pair, const Vec2&) {
    const PatchBatch batch = extract_patches(pair, geometry);
    const EncodedBatch enc = encoder->encode(batch);
    const VectorXd f = condition_features(pool_features(enc.codes, batch.count(), atoms), fopt);
    return Vec2(greedy_action(*policy, f).action.accel);
  };
}

ActionFn ideal_agent(double max_accel) {
  return [max_accel](const FramePair&, const Vec2& slip) { return Vec2(ideal_action(slip, max_accel).accel); };
}

double zero_action_grid_mse(int max_slip, double max_accel) {
  double sum = 0.0;
  int n = 0;
  for (int sy = -max_slip; sy <= max_slip; ++sy)
    for (int sx = -max_slip; sx <= max_slip; ++sx, ++n) sum += clip(Vec2(sx, sy), max_accel).squaredNorm();
  return sum / n;
}

std::vector<CurvePoint> mse_training_curve(const std::vector<std::vector<Checkpoint>>& trials,
                                           const TrainConfig& cfg, const Corpus& holdout, const GridOptions& opt) {
  if (trials.empty()) throw ConfigError("no trials supplied");
  const std::size_t points = trials.front().size();
  for (const auto& t : trials)
    if (t.size() != points) throw ConfigError("trials have different numbers of checkpoints");
  std::vector<CurvePoint> out;
  for (std::size_t j = 0; j < points; ++j) {
    std::vector<double> mse;
    for (const auto& t : trials) mse.push_back(eval_slip_grid({greedy_agent(t[j], cfg)}, holdout, opt).mse);
    CurvePoint p;
    p.frame = trials.front()[j].frame;
    p.mse = std::accumulate(mse.begin(), mse.end(), 0.0) / static_cast<double>(mse.size());
    if (mse.size() > 1) {
      double ss = 0.0;
      for (double v : mse) ss += (v - p.mse) * (v - p.mse);
      p.stddev = std::sqrt(ss / static_cast<double>(mse.size() - 1));
    }
    out.push_back(p);
  }
  return out;
}

// ---- Gabor fitting ----------------------------------------------------------

VectorXd gabor_atom(const GaborParams& p, int size) {
  const int half = size * size;
  VectorXd out(2 * half);
  const double c = std::cos(p.theta), s = std::sin(p.theta);
  const double k = 2.0 * M_PI / p.lambda;
  for (int r = 0; r < size; ++r) {
    for (int col = 0; col < size; ++col) {
      const double dx = col - p.cx, dy = r - p.cy;
      const double u = dx * c + dy * s;
      const double v = -dx * s + dy * c;
      const double env =
          p.amplitude * std::exp(-u * u / (2.0 * p.sigma_u * p.sigma_u) - v * v / (2.0 * p.sigma_v * p.sigma_v));
      out(r * size + col) = env * std::cos(k * u - p.phase_prev);
      out(half + r * size + col) = env * std::cos(k * u - p.phase_curr);
    }
  }
  out.head(half).array() -= out.head(half).mean();
  out.tail(half).array() -= out.tail(half).mean();
  return out;
}

double GaborFit::phase_shift() const { return wrap_angle(params.phase_curr - params.phase_prev); }

double preferred_velocity(const GaborFit& fit) { return fit.phase_shift() * fit.params.lambda / (2.0 * M_PI); }

namespace {

using ParamVec = Eigen::Matrix<double, 9, 1>;

ParamVec pack(const GaborParams& p) {
  ParamVec v;
  v << p.cx, p.cy, p.theta, p.lambda, p.sigma_u, p.sigma_v, p.phase_prev, p.phase_curr, p.amplitude;
  return v;
}

GaborParams unpack(const ParamVec& v) {
  return {v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8)};
}

void clamp_params(ParamVec& v, int size) {
  v(0) = std::clamp(v(0), -0.5 * size, 1.5 * size);
  v(1) = std::clamp(v(1), -0.5 * size, 1.5 * size);
  v(3) = std::clamp(v(3), 2.0, 8.0 * size);
  v(4) = std::clamp(std::abs(v(4)), 0.4, 4.0 * size);
  v(5) = std::clamp(std::abs(v(5)), 0.4, 4.0 * size);
}

double cost_of(const ParamVec& v, const VectorXd& atom, int size) {
  return (gabor_atom(unpack(v), size) - atom).squaredNorm();
}

// Damped least squares with a central-difference Jacobian.
ParamVec refine(ParamVec v, const VectorXd& atom, int size, double& cost) {
  double mu = 1e-3;
  cost = cost_of(v, atom, size);
  Eigen::Matrix<double, Eigen::Dynamic, 9> jac(atom.size(), 9);
  for (int it = 0; it < 300; ++it) {
    const VectorXd r = gabor_atom(unpack(v), size) - atom;
    for (int j = 0; j < 9; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(v(j)));
      ParamVec hi = v, lo = v;
      hi(j) += h;
      lo(j) -= h;
      jac.col(j) = (gabor_atom(unpack(hi), size) - gabor_atom(unpack(lo), size)) / (2.0 * h);
    }
    const Eigen::Matrix<double, 9, 9> jtj = jac.transpose() * jac;
    const ParamVec g = jac.transpose() * r;
    bool improved = false;
    while (mu < 1e12) {
      Eigen::Matrix<double, 9, 9> a = jtj;
      a.diagonal() += mu * (jtj.diagonal().array() + 1e-12).matrix();
      ParamVec trial = v - a.ldlt().solve(g);
      clamp_params(trial, size);
      const double c = cost_of(trial, atom, size);
      if (std::isfinite(c) && c < cost) {
        const double gain = cost - c;
        v = trial;
        cost = c;
        mu = std::max(mu / 3.0, 1e-12);
        improved = gain > 1e-14 * std::max(cost, 1e-30);
        break;
      }
      mu *= 4.0;
    }
    if (!improved) break;
  }
  return v;
}

// Best amplitude for fixed shape; linear least squares.
void fit_amplitude(ParamVec& v, const VectorXd& atom, int size) {
  v(8) = 1.0;
  const VectorXd m = gabor_atom(unpack(v), size);
  const double mm = m.squaredNorm();
  v(8) = mm > 0.0 ? m.dot(atom) / mm : 0.0;
}

// Per-half phases and a shared amplitude from the quadrature pair at fixed shape.
void fit_phases(ParamVec& v, const VectorXd& atom, int size) {
  const int half = size * size;
  ParamVec p0 = v, p1 = v;
  p0(6) = p0(7) = 0.0;
  p1(6) = p1(7) = M_PI / 2.0;
  p0(8) = p1(8) = 1.0;
  const VectorXd cbasis = gabor_atom(unpack(p0), size), sbasis = gabor_atom(unpack(p1), size);
  double amp = 0.0;
  for (int h = 0; h < 2; ++h) {
    Eigen::Matrix2d m;
    Eigen::Vector2d b;
    const auto c = cbasis.segment(h * half, half), s = sbasis.segment(h * half, half);
    const auto a = atom.segment(h * half, half);
    m << c.dot(c), c.dot(s), c.dot(s), s.dot(s);
    b << c.dot(a), s.dot(a);
    const Eigen::Vector2d coef = m.completeOrthogonalDecomposition().solve(b);
    v(6 + h) = std::atan2(coef(1), coef(0));
    amp += 0.5 * coef.norm();
  }
  v(8) = amp;
}

}  // namespace

GaborFit fit_gabor(const VectorXd& atom, int size) {
  GaborFit out;
  const double norm = atom.norm();
  if (!(norm >= kBlankPatchNorm) || atom.size() != 2 * size * size) return out;
  const VectorXd target = atom / norm;

  struct Start {
    double cost;
    ParamVec v;
  };
  std::vector<Start> starts;
  const double centre = 0.5 * (size - 1);
  const double wavelengths[] = {3.0, 5.0, 8.0, 12.0};
  for (int o = 0; o < 8; ++o) {
    for (double lambda : wavelengths) {
      GaborParams base;
      base.cx = base.cy = centre;
      base.theta = M_PI * o / 8.0;
      base.lambda = lambda;
      base.sigma_u = base.sigma_v = 0.25 * size;
      for (int ph = 0; ph < 4; ++ph) {
        ParamVec v = pack(base);
        v(6) = v(7) = 0.5 * M_PI * ph;
        fit_amplitude(v, target, size);
        starts.push_back({cost_of(v, target, size), v});
      }
      ParamVec v = pack(base);
      fit_phases(v, target, size);
      starts.push_back({cost_of(v, target, size), v});
    }
  }
  std::sort(starts.begin(), starts.end(), [](const Start& a, const Start& b) { return a.cost < b.cost; });

  double best_cost = std::numeric_limits<double>::infinity();
  ParamVec best = starts.front().v;
  for (std::size_t i = 0; i < std::min<std::size_t>(6, starts.size()); ++i) {
    double c = 0.0;
    ParamVec v = refine(starts[i].v, target, size, c);
    if (c < best_cost) {
      best_cost = c;
      best = v;
    }
  }

  GaborParams p = unpack(best);
  p.sigma_u = std::abs(p.sigma_u);
  p.sigma_v = std::abs(p.sigma_v);
  if (p.amplitude < 0.0) {
    p.amplitude = -p.amplitude;
    p.phase_prev += M_PI;
    p.phase_curr += M_PI;
  }
  // Fold the wave vector into [0, pi); reversing it negates both phases.
  double theta = std::fmod(p.theta, 2.0 * M_PI);
  if (theta < 0.0) theta += 2.0 * M_PI;
  if (theta >= M_PI) {
    theta -= M_PI;
    p.phase_prev = -p.phase_prev;
    p.phase_curr = -p.phase_curr;
  }
  p.theta = theta;
  p.phase_prev = wrap_angle(p.phase_prev);
  p.phase_curr = wrap_angle(p.phase_curr);

  out.fit = true;
  out.params = p;
  out.orientation_deg = theta * 180.0 / M_PI;
  if (out.orientation_deg >= 180.0) out.orientation_deg -= 180.0;
  out.error = best_cost;  // target has unit norm
  return out;
}

// ---- tuning -----------------------------------------------------------------

double grating_response(const VectorXd& atom, double direction, double wavelength, double speed, int size) {
  const int half = size * size;
  const double norm_sq = atom.squaredNorm();
  if (!(norm_sq > 0.0)) return 0.0;
  VectorXd cb(2 * half), sb(2 * half);
  const double k = 2.0 * M_PI / wavelength;
  const double c = std::cos(direction), s = std::sin(direction);
  const double centre = 0.5 * (size - 1);
  for (int r = 0; r < size; ++r) {
    for (int col = 0; col < size; ++col) {
      const double u = (col - centre) * c + (r - centre) * s;
      const int i = r * size + col;
      cb(i) = std::cos(k * u);
      sb(i) = std::sin(k * u);
      cb(half + i) = std::cos(k * (u - speed));
      sb(half + i) = std::sin(k * (u - speed));
    }
  }
  for (VectorXd* v : {&cb, &sb}) {
    v->head(half).array() -= v->head(half).mean();
    v->tail(half).array() -= v->tail(half).mean();
  }
  Eigen::Matrix2d m;
  m << cb.squaredNorm(), cb.dot(sb), cb.dot(sb), sb.squaredNorm();
  const Eigen::Vector2d b(cb.dot(atom), sb.dot(atom));
  const Eigen::Vector2d x = m.completeOrthogonalDecomposition().solve(b);
  return std::clamp(b.dot(x) / norm_sq, 0.0, 1.0);
}

TuningCurve tuning_curves(const VectorXd& atom, int size) {
  TuningCurve out;
  if (!(atom.norm() >= kBlankPatchNorm) || atom.size() != 2 * size * size) return out;
  for (int i = 0; i <= 32; ++i) out.speeds.push_back(-4.0 + 0.25 * i);
  const double wavelengths[] = {2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 14.0, 17.0, 20.0};

  // Ties within rounding resolve to the slower speed, then the positive one.
  auto better = [](double r, double v, double best_r, double best_v) {
    const double tol = 1e-9 * std::max(1.0, best_r);
    if (r > best_r + tol) return true;
    if (r < best_r - tol) return false;
    if (std::abs(v) != std::abs(best_v)) return std::abs(v) < std::abs(best_v);
    return v > best_v;
  };

  double best_r = -1.0;
  for (int o = 0; o < 12; ++o) {
    const double ori = M_PI * o / 12.0;
    for (double lambda : wavelengths) {
      for (double v : out.speeds) {
        const double r = grating_response(atom, ori, lambda, v, size);
        if (best_r < 0.0 || better(r, v, best_r, out.best_speed)) {
          best_r = r;
          out.best_orientation_deg = 15.0 * o;
          out.best_wavelength = lambda;
          out.best_speed = v;
        }
      }
    }
  }

  const double ori = out.best_orientation_deg * M_PI / 180.0;
  double peak = -1.0;
  for (std::size_t i = 0; i < out.speeds.size(); ++i) {
    const double r = grating_response(atom, ori, out.best_wavelength, out.speeds[i], size);
    out.speed_response.push_back(r);
    if (peak < 0.0 || better(r, out.speeds[i], peak, out.speeds[static_cast<std::size_t>(out.speed_peak)])) {
      peak = r;
      out.speed_peak = static_cast<int>(i);
    }
  }

  const double speed = std::abs(out.best_speed);
  peak = -1.0;
  for (int d = 0; d < 24; ++d) {
    const double deg = 15.0 * d;
    const double r = grating_response(atom, deg * M_PI / 180.0, out.best_wavelength, speed, size);
    out.directions_deg.push_back(deg);
    out.direction_response.push_back(r);
    if (r > peak + 1e-9) {
      peak = r;
      out.direction_peak = d;
    }
  }
  out.fit = true;
  return out;
}

// ---- histograms -------------------------------------------------------------

int PreferenceHistograms::velocity_mode_bin() const {
  return static_cast<int>(std::max_element(velocity_counts.begin(), velocity_counts.end()) - velocity_counts.begin());
}

PreferenceHistograms preference_histograms(const std::vector<GaborFit>& fits, double threshold) {
  PreferenceHistograms h;
  for (int i = 0; i <= 12; ++i) h.orientation_edges.push_back(15.0 * i);
  h.orientation_counts.assign(12, 0);
  for (int i = 0; i <= 16; ++i) h.velocity_centers.push_back(-4.0 + 0.5 * i);
  h.velocity_counts.assign(17, 0);
  for (const auto& f : fits) {
    if (!f.fit || !(f.error < threshold)) continue;
    ++h.included;
    const int ob = std::clamp(static_cast<int>(std::floor(f.orientation_deg / 15.0)), 0, 11);
    ++h.orientation_counts[static_cast<std::size_t>(ob)];
    const double v = preferred_velocity(f);
    if (std::abs(v) < 1.0) ++h.slow_count;
    const long vb = std::lround(v / 0.5) + 8;
    if (vb < 0 || vb > 16) {
      ++h.velocity_out_of_range;
    } else {
      ++h.velocity_counts[static_cast<std::size_t>(vb)];
    }
  }
  return h;
}

GrayImage render_atoms(const Dictionary& dict, int size, int per_row) {
  const Index n = dict.size();
  const int cols = static_cast<int>(std::min<Index>(per_row, std::max<Index>(n, 1)));
  const int rows = static_cast<int>((n + cols - 1) / cols);
  const int tw = size + 1, th = 2 * size + 1;
  GrayImage img = GrayImage::Constant(std::max(1, rows * th + 1), cols * tw + 1, 0.5);
  const int half = size * size;
  for (Index a = 0; a < n; ++a) {
    const auto atom = dict.atoms.col(a);
    const double scale = atom.cwiseAbs().maxCoeff();
    const int oy = static_cast<int>(a / cols) * th + 1, ox = static_cast<int>(a % cols) * tw + 1;
    for (int h = 0; h < 2; ++h)
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
          img(oy + h * size + r, ox + c) =
              scale > 0.0 ? 0.5 + 0.5 * atom(h * half + r * size + c) / scale : 0.5;
  }
  return img;
}

}  // namespace pursuit
