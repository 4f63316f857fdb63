#pragma once

#include "pursuit/core.hpp"
#include "pursuit/imagery.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

namespace pursuit {

/// Patches with a DC-removed norm below this are blank: never coded, excluded from averages.
inline constexpr double kBlankPatchNorm = 1e-8;
/// Atoms must have unit norm to this tolerance.
inline constexpr double kUnitNormTolerance = 1e-6;

/// Placement of the square patch grid inside the fovea.
struct PatchGeometry {
  int grid = 10;  // patches per side
  int size = 10;  // pixels per side

  int stride() const { return grid > 1 ? (Units::fovea_px - size) / (grid - 1) : 0; }
  int offset() const { return (Units::fovea_px - size - stride() * (grid - 1)) / 2; }
  int patch_count() const { return grid * grid; }
  int dimension() const { return 2 * size * size; }
};

/// One column per patch: previous-frame block then current-frame block,
/// each row-major with its own mean removed.
struct PatchBatch {
  MatrixXd vectors;
  VectorXd norms;

  Index count() const { return vectors.cols(); }
  Index dimension() const { return vectors.rows(); }
  Index effective_count() const { return (norms.array() >= kBlankPatchNorm).count(); }
};

PatchBatch extract_patches(const FramePair& frames, const PatchGeometry& geometry = {});

/// Unit-norm atoms stored as the columns of `atoms`.
template <typename Scalar>
struct BasicDictionary {
  Matrix<Scalar> atoms;
  long generation = 0;

  Index size() const { return atoms.cols(); }
  Index dimension() const { return atoms.rows(); }

  /// Throws ContractError unless every atom has unit norm.
  void check_unit_norm() const {
    for (Index n = 0; n < atoms.cols(); ++n) {
      const double norm = static_cast<double>(atoms.col(n).norm());
      if (!(std::abs(norm - 1.0) <= kUnitNormTolerance))
        throw ContractError("dictionary atom " + std::to_string(n) + " has norm " + std::to_string(norm));
    }
  }

  friend bool operator==(const BasicDictionary& a, const BasicDictionary& b) {
    return a.generation == b.generation && a.atoms.rows() == b.atoms.rows() && a.atoms.cols() == b.atoms.cols() &&
           a.atoms == b.atoms;
  }
};

using Dictionary = BasicDictionary<double>;

/// Isotropic Gaussian atoms, normalized.
Dictionary random_dictionary(Index dimension, Index atoms, Rng& rng);

struct CodeEntry {
  Index atom = 0;
  double coefficient = 0.0;

  friend bool operator==(const CodeEntry&, const CodeEntry&) = default;
};

/// Nonzero coefficients of one patch in order of first selection.
using PatchCode = std::vector<CodeEntry>;
using SparseCode = std::vector<PatchCode>;

struct PursuitOptions {
  int kmax = 10;
  double tol = 0.0;          // stop when residual norm <= tol * |x|
  int max_iterations = 0;    // 0: 10 * kmax
};

namespace detail {

inline void accumulate(PatchCode& code, Index atom, double c) {
  for (auto& e : code) {
    if (e.atom == atom) {
      e.coefficient += c;
      return;
    }
  }
  code.push_back({atom, c});
}

template <typename Derived>
Index argmax_abs(const Eigen::MatrixBase<Derived>& v) {
  Index best = 0;
  auto best_val = std::abs(v(0));
  for (Index i = 1; i < v.size(); ++i) {
    const auto a = std::abs(v(i));
    if (a > best_val) {
      best_val = a;
      best = i;
    }
  }
  return best;
}

// Shared pursuit loop. `correlate(residual, corr)` refreshes the correlations
// after each subtraction; `on_step(before_sq, after_sq, c)` observes every step.
template <typename Scalar, typename Refresh, typename Observe>
PatchCode pursue(Vector<Scalar>& residual, Vector<Scalar>& corr, const Matrix<Scalar>& atoms,
                 const PursuitOptions& opt, Refresh&& refresh, Observe&& on_step) {
  PatchCode code;
  const double x_norm = static_cast<double>(residual.norm());
  if (x_norm < kBlankPatchNorm || atoms.cols() == 0 || opt.kmax <= 0) return code;
  const double stop_norm = opt.tol * x_norm;
  const int max_iter = opt.max_iterations > 0 ? opt.max_iterations : 10 * opt.kmax;
  double residual_sq = static_cast<double>(residual.squaredNorm());
  for (int it = 0; it < max_iter && static_cast<int>(code.size()) < opt.kmax; ++it) {
    if (std::sqrt(residual_sq) <= stop_norm) break;
    const Index n = argmax_abs(corr);
    const Scalar c = corr(n);
    if (c == Scalar(0)) break;
    residual.noalias() -= c * atoms.col(n);
    const double after_sq = static_cast<double>(residual.squaredNorm());
    on_step(residual_sq, after_sq, static_cast<double>(c));
    residual_sq = after_sq;
    accumulate(code, n, static_cast<double>(c));
    refresh(n, c);
  }
  return code;
}

}  // namespace detail

/// Plain matching pursuit of one vector. Correlations are recomputed from the
/// residual every iteration. Ties in |<r, phi_n>| resolve to the lowest index.
template <typename Scalar, typename Derived>
PatchCode matching_pursuit(const Eigen::MatrixBase<Derived>& x, const BasicDictionary<Scalar>& dict,
                           const PursuitOptions& opt = {}) {
  dict.check_unit_norm();
  Vector<Scalar> residual = x;
  Vector<Scalar> corr = dict.atoms.transpose() * residual;
  return detail::pursue<Scalar>(
      residual, corr, dict.atoms, opt,
      [&](Index, Scalar) { corr.noalias() = dict.atoms.transpose() * residual; }, [](double, double, double) {});
}

/// Result of coding one batch.
struct EncodedBatch {
  SparseCode codes;
  MatrixXd residuals;           // x_i - reconstruction_i, one column per patch
  double error = 0.0;           // average normalized squared reconstruction error
  Index effective_count = 0;    // non-blank patches
  double max_energy_defect = 0; // max over steps of |before^2 - after^2 - c^2| / before^2
};

/// Batch coder bound to one dictionary snapshot. Correlation updates use the
/// atom Gram matrix, so a snapshot is cheap to reuse across many batches.
class BatchEncoder {
 public:
  BatchEncoder(const Dictionary& dict, PursuitOptions opt = {}, int workers = 1)
      : atoms_(dict.atoms), opt_(opt), workers_(std::max(1, workers)) {
    dict.check_unit_norm();
    gram_.setZero(atoms_.cols(), atoms_.cols());
    gram_.template selfadjointView<Eigen::Lower>().rankUpdate(atoms_.transpose());
    gram_.template triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
  }

  EncodedBatch encode(const PatchBatch& batch) const {
    EncodedBatch out;
    const Index p = batch.count();
    out.codes.assign(static_cast<std::size_t>(p), {});
    out.residuals = batch.vectors;
    const MatrixXd corr_all = atoms_.transpose() * batch.vectors;
    std::vector<double> defects(static_cast<std::size_t>(p), 0.0);

    auto code_range = [&](Index begin, Index end) {
      VectorXd residual(batch.dimension());
      VectorXd corr(atoms_.cols());
      for (Index i = begin; i < end; ++i) {
        if (batch.norms(i) < kBlankPatchNorm) continue;
        residual = batch.vectors.col(i);
        corr = corr_all.col(i);
        double& defect = defects[static_cast<std::size_t>(i)];
        out.codes[static_cast<std::size_t>(i)] = detail::pursue<double>(
            residual, corr, atoms_, opt_, [&](Index n, double c) { corr.noalias() -= c * gram_.col(n); },
            [&](double before, double after, double c) {
              defect = std::max(defect, std::abs(before - after - c * c) / before);
            });
        out.residuals.col(i) = residual;
      }
    };

    if (workers_ == 1 || p < 2) {
      code_range(0, p);
    } else {
      std::vector<std::jthread> pool;
      const Index chunk = (p + workers_ - 1) / workers_;
      for (Index b = 0; b < p; b += chunk) pool.emplace_back(code_range, b, std::min(p, b + chunk));
    }

    double sum = 0.0;
    for (Index i = 0; i < p; ++i) {
      if (batch.norms(i) < kBlankPatchNorm) continue;
      ++out.effective_count;
      sum += out.residuals.col(i).squaredNorm() / (batch.norms(i) * batch.norms(i));
    }
    out.error = out.effective_count > 0 ? sum / static_cast<double>(out.effective_count) : 0.0;
    for (double d : defects) out.max_energy_defect = std::max(out.max_energy_defect, d);
    return out;
  }

  const MatrixXd& gram() const { return gram_; }

 private:
  MatrixXd atoms_;
  MatrixXd gram_;
  PursuitOptions opt_;
  int workers_;
};

/// Sum of coefficient-weighted atoms.
template <typename Scalar>
Vector<Scalar> reconstruct(const PatchCode& code, const BasicDictionary<Scalar>& dict) {
  Vector<Scalar> out = Vector<Scalar>::Zero(dict.dimension());
  for (const auto& e : code) out.noalias() += static_cast<Scalar>(e.coefficient) * dict.atoms.col(e.atom);
  return out;
}

/// Average over non-blank patches of |x_i - x_hat_i|^2 / |x_i|^2. Blank patches
/// are excluded from both the sum and the divisor; an all-blank batch scores 0.
inline double reconstruction_error(const PatchBatch& batch, const SparseCode& codes, const Dictionary& dict) {
  double sum = 0.0;
  Index used = 0;
  for (Index i = 0; i < batch.count(); ++i) {
    if (batch.norms(i) < kBlankPatchNorm) continue;
    const VectorXd residual = batch.vectors.col(i) - reconstruct(codes[static_cast<std::size_t>(i)], dict);
    sum += residual.squaredNorm() / (batch.norms(i) * batch.norms(i));
    ++used;
  }
  return used > 0 ? sum / static_cast<double>(used) : 0.0;
}

/// One gradient step on the average normalized reconstruction error with the
/// codes held fixed, followed by renormalization of every atom that moved.
/// `residuals` may be passed to skip recomputing x_i - x_hat_i.
inline Dictionary update_dictionary(const Dictionary& dict, const PatchBatch& batch, const SparseCode& codes,
                                    double lr, const MatrixXd* residuals = nullptr) {
  if (lr == 0.0) return dict;
  Dictionary out = dict;
  const Index used = batch.effective_count();
  if (used == 0) return out;
  MatrixXd step = MatrixXd::Zero(dict.dimension(), dict.size());
  std::vector<char> touched(static_cast<std::size_t>(dict.size()), 0);
  VectorXd residual;
  for (Index i = 0; i < batch.count(); ++i) {
    const auto& code = codes[static_cast<std::size_t>(i)];
    if (batch.norms(i) < kBlankPatchNorm || code.empty()) continue;
    if (residuals) {
      residual = residuals->col(i);
    } else {
      residual = batch.vectors.col(i) - reconstruct(code, dict);
    }
    const double weight = 1.0 / (batch.norms(i) * batch.norms(i));
    for (const auto& e : code) {
      step.col(e.atom).noalias() += (e.coefficient * weight) * residual;
      touched[static_cast<std::size_t>(e.atom)] = 1;
    }
  }
  const double scale = lr / static_cast<double>(used);
  for (Index n = 0; n < dict.size(); ++n) {
    if (!touched[static_cast<std::size_t>(n)]) continue;
    VectorXd moved = dict.atoms.col(n) + scale * step.col(n);
    const double norm = moved.norm();
    if (!std::isfinite(norm)) throw NumericError("dictionary update produced a non-finite atom");
    if (norm < kBlankPatchNorm) continue;
    out.atoms.col(n) = moved / norm;
  }
  ++out.generation;
  return out;
}

}  // namespace pursuit
