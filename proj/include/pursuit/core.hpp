#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pursuit {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;
using Vec2 = Eigen::Vector2d;

// Pixel/frame unit system. Angular quantities convert with px_per_deg / frames_per_s.
struct Units {
  static constexpr double px_per_deg = 5.0;
  static constexpr double frames_per_s = 30.0;
  static constexpr int fovea_px = 55;
  static constexpr double max_speed_px = 4.0;  // 24 deg/s
  static constexpr double max_accel_px = 5.0;  // 900 deg/s^2
  static constexpr int episode_frames = 10;

  static constexpr double deg_per_s_to_px_per_frame(double v) { return v * px_per_deg / frames_per_s; }
  static constexpr double deg_per_s2_to_px_per_frame2(double a) {
    return a * px_per_deg / (frames_per_s * frames_per_s);
  }
};

/// Raised when a configuration or input is rejected before any work starts.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a computation produces non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a documented precondition of a numerical kernel is violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Seeded random stream. Distribution code is local so that draws are
/// reproducible across standard libraries and the full state serializes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: empty range");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; no cached second value so the state is the engine alone.
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  std::string state() const;
  void restore(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed from a base seed and a stream name.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);

inline double clip(double v, double bound) { return std::clamp(v, -bound, bound); }

inline Vec2 clip(const Vec2& v, double bound) { return {clip(v.x(), bound), clip(v.y(), bound)}; }

}  // namespace pursuit
