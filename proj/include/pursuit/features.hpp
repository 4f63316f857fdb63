#pragma once

#include "pursuit/sparsecode.hpp"

namespace pursuit {

/// Complex-cell responses: f_n = (1/P) * sum_i a_{i,n}^2.
/// `patch_count` is the P the codes were produced from, blank patches included.
inline VectorXd pool_features(const SparseCode& codes, Index patch_count, Index atoms) {
  VectorXd f = VectorXd::Zero(atoms);
  if (patch_count <= 0) return f;
  for (const auto& code : codes)
    for (const auto& e : code) f(e.atom) += e.coefficient * e.coefficient;
  return f / static_cast<double>(patch_count);
}

/// Divisive normalization f / (eps + sum f).
inline VectorXd divisive_normalize(const VectorXd& f, double eps = 1e-6) { return f / (eps + f.sum()); }

/// How pooled responses are presented to the policy and critic.
struct FeatureOptions {
  bool normalize = true;
  double scale = 10.0;
};

inline VectorXd condition_features(const VectorXd& f, const FeatureOptions& opt) {
  return opt.normalize ? VectorXd(opt.scale * divisive_normalize(f)) : VectorXd(opt.scale * f);
}

}  // namespace pursuit
