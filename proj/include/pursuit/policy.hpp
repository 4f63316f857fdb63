#pragma once

#include "pursuit/core.hpp"
#include "pursuit/environment.hpp"

#include <array>
#include <string>
#include <variant>

namespace pursuit {

enum class Axis : int { pan = 0, tilt = 1 };

/// A drawn action together with what the log-density needs: the discrete
/// command indices (softmax) or the pre-clip Gaussian draw.
struct PolicySample {
  Action action;
  Vec2 raw = Vec2::Zero();
  std::array<int, 2> index{-1, -1};
};

/// Two independent linear-softmax networks (pan, tilt) over K evenly spaced
/// accelerations in [-max_accel, max_accel]. Parameters are packed as
/// [pan K x N | tilt K x N], each block column-major.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy() = default;
  SoftmaxPolicy(Index atoms, int actions, double temperature, double max_accel = Units::max_accel_px);

  Index atoms() const { return atoms_; }
  int actions() const { return actions_; }
  double temperature() const { return temperature_; }
  void set_temperature(double t);
  double max_accel() const { return max_accel_; }

  double accel_of(int index) const;

  Eigen::Map<MatrixXd> weights(Axis axis);
  Eigen::Map<const MatrixXd> weights(Axis axis) const;

  VectorXd& params() { return params_; }
  const VectorXd& params() const { return params_; }
  Index parameter_count() const { return params_.size(); }

  friend bool operator==(const SoftmaxPolicy&, const SoftmaxPolicy&);

 private:
  Index atoms_ = 0;
  int actions_ = 0;
  double temperature_ = 1.0;
  double max_accel_ = Units::max_accel_px;
  VectorXd params_;
};

/// Shared tanh hidden layer, two linear outputs giving the pan/tilt means of
/// fixed-variance Gaussians. Parameters are packed as [W1 (H x N, col-major) |
/// b1 (H) | W2 (2 x H, col-major) | b2 (2)].
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(Index atoms, int hidden, double sigma, double max_accel = Units::max_accel_px);

  Index atoms() const { return atoms_; }
  int hidden() const { return hidden_; }
  double sigma() const { return sigma_; }
  double max_accel() const { return max_accel_; }

  Eigen::Map<MatrixXd> w1();
  Eigen::Map<const MatrixXd> w1() const;
  Eigen::Map<VectorXd> b1();
  Eigen::Map<const VectorXd> b1() const;
  Eigen::Map<MatrixXd> w2();
  Eigen::Map<const MatrixXd> w2() const;
  Eigen::Map<VectorXd> b2();
  Eigen::Map<const VectorXd> b2() const;

  VectorXd& params() { return params_; }
  const VectorXd& params() const { return params_; }
  Index parameter_count() const { return params_.size(); }

  friend bool operator==(const GaussianPolicy&, const GaussianPolicy&);

 private:
  Index atoms_ = 0;
  int hidden_ = 0;
  double sigma_ = 1.0;
  double max_accel_ = Units::max_accel_px;
  VectorXd params_;
};

using Policy = std::variant<SoftmaxPolicy, GaussianPolicy>;

std::string head_name(const Policy& policy);
VectorXd& policy_params(Policy& policy);
const VectorXd& policy_params(const Policy& policy);

/// Fills every parameter uniformly in [-scale, scale].
void randomize(Policy& policy, double scale, Rng& rng);

/// Boltzmann probabilities of one axis, computed with max subtraction.
VectorXd softmax_probs(const SoftmaxPolicy& policy, const VectorXd& f, Axis axis);

/// Inverse-CDF draw of an index from a probability simplex.
int sample_softmax(const VectorXd& probs, Rng& rng);

/// mu = W2 tanh(W1 f + b1) + b2.
Vec2 gaussian_forward(const GaussianPolicy& policy, const VectorXd& f);

/// Per-axis N(mu, sigma^2) draw; the action is the draw clipped to +-max_accel.
PolicySample sample_gaussian(const Vec2& mean, double sigma, Rng& rng, double max_accel = Units::max_accel_px);

PolicySample sample_action(const Policy& policy, const VectorXd& f, Rng& rng);

/// Maximum-likelihood action: argmax command per axis (ties to the smaller
/// magnitude, then the negative one) or the clipped Gaussian mean.
PolicySample greedy_action(const Policy& policy, const VectorXd& f);

/// log pi(sample | f) over both axes, using the pre-clip draw for the Gaussian head.
double log_policy(const Policy& policy, const VectorXd& f, const PolicySample& sample);

/// Gradient of log_policy with respect to the packed parameters.
VectorXd grad_log_policy(const Policy& policy, const VectorXd& f, const PolicySample& sample);

enum class ActorCriticVariant { natural, vanilla };

struct CriticParams {
  double alpha_v = 1e-2;
  double alpha_w = 5e-3;
  double alpha_theta = 1e-3;
  double gamma = 0.3;
  double lambda = 0.0;
  ActorCriticVariant variant = ActorCriticVariant::natural;
  // Divide the critic and advantage steps by 1 + |trace|^2 (normalized LMS).
  bool normalized_steps = true;
};

/// Linear critic V(f) = v.head(N).f + v(N), compatible-feature advantage
/// weights w, and the eligibility traces of both.
struct CriticState {
  VectorXd v;
  VectorXd w;
  VectorXd trace_v;
  VectorXd trace_w;
  CriticParams params;

  static CriticState zeros(Index atoms, Index policy_parameters, CriticParams params);
  double value(const VectorXd& f) const;

  friend bool operator==(const CriticState&, const CriticState&);
};

struct NacReport {
  double td_error = 0.0;
  bool applied = false;
};

/// One online actor-critic step on transition (f_t, sample, reward, f_next):
///   delta = reward + gamma V(f_next) - V(f_t)
///   v += alpha_v delta e_v,                        e_v = gamma lambda e_v + [f_t; 1]
///   w += alpha_w (delta e_w - (psi.w) psi),        e_w = gamma lambda e_w + psi
///   theta += alpha_theta w          (natural)   or   alpha_theta delta psi (vanilla)
/// with psi = grad log pi(sample | f_t). With normalized steps, alpha_v and
/// alpha_w are divided by 1 + |e_v|^2 and 1 + |e_w|^2. Nothing changes when
/// delta is not finite.
NacReport nac_update(CriticState& critic, Policy& policy, const VectorXd& f_t, const PolicySample& sample,
                     double reward, const VectorXd& f_next);

}  // namespace pursuit
