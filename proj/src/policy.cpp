#include "pursuit/policy.hpp"

#include <cmath>

namespace pursuit {

SoftmaxPolicy::SoftmaxPolicy(Index atoms, int actions, double temperature, double max_accel)
    : atoms_(atoms), actions_(actions), max_accel_(max_accel), params_(VectorXd::Zero(2 * actions * atoms)) {
  if (actions < 2) throw ConfigError("softmax policy needs at least two actions");
  set_temperature(temperature);
}

void SoftmaxPolicy::set_temperature(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("softmax temperature must be positive");
  temperature_ = t;
}

double SoftmaxPolicy::accel_of(int index) const {
  return -max_accel_ + 2.0 * max_accel_ * static_cast<double>(index) / static_cast<double>(actions_ - 1);
}

Eigen::Map<MatrixXd> SoftmaxPolicy::weights(Axis axis) {
  return {params_.data() + static_cast<Index>(axis) * actions_ * atoms_, actions_, atoms_};
}

Eigen::Map<const MatrixXd> SoftmaxPolicy::weights(Axis axis) const {
  return {params_.data() + static_cast<Index>(axis) * actions_ * atoms_, actions_, atoms_};
}

bool operator==(const SoftmaxPolicy& a, const SoftmaxPolicy& b) {
  return a.atoms_ == b.atoms_ && a.actions_ == b.actions_ && a.temperature_ == b.temperature_ &&
         a.max_accel_ == b.max_accel_ && a.params_ == b.params_;
}

GaussianPolicy::GaussianPolicy(Index atoms, int hidden, double sigma, double max_accel)
    : atoms_(atoms),
      hidden_(hidden),
      sigma_(sigma),
      max_accel_(max_accel),
      params_(VectorXd::Zero((atoms + 1) * hidden + (hidden + 1) * 2)) {
  if (hidden < 1) throw ConfigError("gaussian policy needs at least one hidden unit");
  if (!(sigma > 0.0)) throw ConfigError("gaussian sigma must be positive");
}

Eigen::Map<MatrixXd> GaussianPolicy::w1() { return {params_.data(), hidden_, atoms_}; }
Eigen::Map<const MatrixXd> GaussianPolicy::w1() const { return {params_.data(), hidden_, atoms_}; }
Eigen::Map<VectorXd> GaussianPolicy::b1() { return {params_.data() + hidden_ * atoms_, hidden_}; }
Eigen::Map<const VectorXd> GaussianPolicy::b1() const { return {params_.data() + hidden_ * atoms_, hidden_}; }
Eigen::Map<MatrixXd> GaussianPolicy::w2() { return {params_.data() + hidden_ * (atoms_ + 1), 2, hidden_}; }
Eigen::Map<const MatrixXd> GaussianPolicy::w2() const {
  return {params_.data() + hidden_ * (atoms_ + 1), 2, hidden_};
}
Eigen::Map<VectorXd> GaussianPolicy::b2() { return {params_.data() + hidden_ * (atoms_ + 3), 2}; }
Eigen::Map<const VectorXd> GaussianPolicy::b2() const { return {params_.data() + hidden_ * (atoms_ + 3), 2}; }

bool operator==(const GaussianPolicy& a, const GaussianPolicy& b) {
  return a.atoms_ == b.atoms_ && a.hidden_ == b.hidden_ && a.sigma_ == b.sigma_ && a.max_accel_ == b.max_accel_ &&
         a.params_ == b.params_;
}

std::string head_name(const Policy& policy) {
  return std::holds_alternative<SoftmaxPolicy>(policy) ? "softmax" : "gaussian";
}

VectorXd& policy_params(Policy& policy) {
  return std::visit([](auto& p) -> VectorXd& { return p.params(); }, policy);
}

const VectorXd& policy_params(const Policy& policy) {
  return std::visit([](const auto& p) -> const VectorXd& { return p.params(); }, policy);
}

void randomize(Policy& policy, double scale, Rng& rng) {
  VectorXd& theta = policy_params(policy);
  for (Index i = 0; i < theta.size(); ++i) theta(i) = rng.uniform(-scale, scale);
}

VectorXd softmax_probs(const SoftmaxPolicy& policy, const VectorXd& f, Axis axis) {
  const VectorXd z = policy.weights(axis) * f;
  if (!z.allFinite()) throw NumericError("softmax activations are not finite");
  VectorXd p = ((z.array() - z.maxCoeff()) / policy.temperature()).exp();
  return p / p.sum();
}

int sample_softmax(const VectorXd& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_positive = 0;
  for (Index k = 0; k < probs.size(); ++k) {
    if (probs(k) > 0.0) last_positive = static_cast<int>(k);
    acc += probs(k);
    if (u < acc) return static_cast<int>(k);
  }
  return last_positive;
}

Vec2 gaussian_forward(const GaussianPolicy& policy, const VectorXd& f) {
  const VectorXd h = (policy.w1() * f + policy.b1()).array().tanh().matrix();
  const Vec2 mu = policy.w2() * h + policy.b2();
  if (!mu.allFinite()) throw NumericError("gaussian policy mean is not finite");
  return mu;
}

PolicySample sample_gaussian(const Vec2& mean, double sigma, Rng& rng, double max_accel) {
  PolicySample s;
  s.raw = {mean.x() + sigma * rng.normal(), mean.y() + sigma * rng.normal()};
  s.action.accel = clip(s.raw, max_accel);
  return s;
}

PolicySample sample_action(const Policy& policy, const VectorXd& f, Rng& rng) {
  if (const auto* sm = std::get_if<SoftmaxPolicy>(&policy)) {
    PolicySample s;
    for (int a = 0; a < 2; ++a) {
      s.index[static_cast<std::size_t>(a)] = sample_softmax(softmax_probs(*sm, f, static_cast<Axis>(a)), rng);
      s.raw(a) = sm->accel_of(s.index[static_cast<std::size_t>(a)]);
    }
    s.action.accel = s.raw;
    return s;
  }
  const auto& g = std::get<GaussianPolicy>(policy);
  return sample_gaussian(gaussian_forward(g, f), g.sigma(), rng, g.max_accel());
}

PolicySample greedy_action(const Policy& policy, const VectorXd& f) {
  PolicySample s;
  if (const auto* sm = std::get_if<SoftmaxPolicy>(&policy)) {
    for (int a = 0; a < 2; ++a) {
      // Rank on the activations: argmax pi == argmax z for every T > 0.
      const VectorXd z = sm->weights(static_cast<Axis>(a)) * f;
      if (!z.allFinite()) throw NumericError("softmax activations are not finite");
      int best = 0;
      for (int k = 1; k < sm->actions(); ++k) {
        const double zk = z(k), zb = z(best);
        const double mk = std::abs(sm->accel_of(k)), mb = std::abs(sm->accel_of(best));
        if (zk > zb || (zk == zb && (mk < mb || (mk == mb && sm->accel_of(k) < sm->accel_of(best))))) best = k;
      }
      s.index[static_cast<std::size_t>(a)] = best;
      s.raw(a) = sm->accel_of(best);
    }
    s.action.accel = s.raw;
    return s;
  }
  const auto& g = std::get<GaussianPolicy>(policy);
  s.raw = gaussian_forward(g, f);
  s.action.accel = clip(s.raw, g.max_accel());
  return s;
}

double log_policy(const Policy& policy, const VectorXd& f, const PolicySample& sample) {
  if (const auto* sm = std::get_if<SoftmaxPolicy>(&policy)) {
    double lp = 0.0;
    for (int a = 0; a < 2; ++a) {
      const VectorXd z = sm->weights(static_cast<Axis>(a)) * f / sm->temperature();
      const double zmax = z.maxCoeff();
      const double lse = zmax + std::log((z.array() - zmax).exp().sum());
      lp += z(sample.index[static_cast<std::size_t>(a)]) - lse;
    }
    return lp;
  }
  const auto& g = std::get<GaussianPolicy>(policy);
  const Vec2 mu = gaussian_forward(g, f);
  const double s2 = g.sigma() * g.sigma();
  return -(sample.raw - mu).squaredNorm() / (2.0 * s2) - 2.0 * std::log(g.sigma() * std::sqrt(2.0 * M_PI));
}

VectorXd grad_log_policy(const Policy& policy, const VectorXd& f, const PolicySample& sample) {
  if (const auto* sm = std::get_if<SoftmaxPolicy>(&policy)) {
    VectorXd grad(sm->parameter_count());
    const Index block = sm->actions() * sm->atoms();
    for (int a = 0; a < 2; ++a) {
      VectorXd coeff = -softmax_probs(*sm, f, static_cast<Axis>(a));
      coeff(sample.index[static_cast<std::size_t>(a)]) += 1.0;
      coeff /= sm->temperature();
      Eigen::Map<MatrixXd>(grad.data() + a * block, sm->actions(), sm->atoms()).noalias() = coeff * f.transpose();
    }
    return grad;
  }
  const auto& g = std::get<GaussianPolicy>(policy);
  GaussianPolicy out(g.atoms(), g.hidden(), g.sigma(), g.max_accel());
  const VectorXd h = (g.w1() * f + g.b1()).array().tanh().matrix();
  const Vec2 mu = g.w2() * h + g.b2();
  const Vec2 dmu = (sample.raw - mu) / (g.sigma() * g.sigma());
  out.b2() = dmu;
  out.w2().noalias() = dmu * h.transpose();
  const VectorXd dpre = ((g.w2().transpose() * dmu).array() * (1.0 - h.array().square())).matrix();
  out.b1() = dpre;
  out.w1().noalias() = dpre * f.transpose();
  return std::move(out.params());
}

CriticState CriticState::zeros(Index atoms, Index policy_parameters, CriticParams params) {
  CriticState c;
  c.v = VectorXd::Zero(atoms + 1);
  c.trace_v = VectorXd::Zero(atoms + 1);
  c.w = VectorXd::Zero(policy_parameters);
  c.trace_w = VectorXd::Zero(policy_parameters);
  c.params = params;
  return c;
}

double CriticState::value(const VectorXd& f) const { return v.head(f.size()).dot(f) + v(f.size()); }

bool operator==(const CriticState& a, const CriticState& b) {
  const auto& p = a.params;
  const auto& q = b.params;
  return a.v == b.v && a.w == b.w && a.trace_v == b.trace_v && a.trace_w == b.trace_w && p.alpha_v == q.alpha_v &&
         p.alpha_w == q.alpha_w && p.alpha_theta == q.alpha_theta && p.gamma == q.gamma && p.lambda == q.lambda &&
         p.variant == q.variant && p.normalized_steps == q.normalized_steps;
}

NacReport nac_update(CriticState& critic, Policy& policy, const VectorXd& f_t, const PolicySample& sample,
                     double reward, const VectorXd& f_next) {
  const auto& p = critic.params;
  NacReport report;
  report.td_error = reward + p.gamma * critic.value(f_next) - critic.value(f_t);
  if (!std::isfinite(report.td_error)) return report;

  const VectorXd psi = grad_log_policy(policy, f_t, sample);
  if (!psi.allFinite()) return report;

  const double decay = p.gamma * p.lambda;
  const Index n = f_t.size();
  critic.trace_v *= decay;
  critic.trace_v.head(n) += f_t;
  critic.trace_v(n) += 1.0;
  critic.trace_w = decay * critic.trace_w + psi;

  const double alpha_v = p.normalized_steps ? p.alpha_v / (1.0 + critic.trace_v.squaredNorm()) : p.alpha_v;
  const double alpha_w = p.normalized_steps ? p.alpha_w / (1.0 + critic.trace_w.squaredNorm()) : p.alpha_w;

  VectorXd& theta = policy_params(policy);
  if (p.variant == ActorCriticVariant::natural) {
    const double advantage = psi.dot(critic.w);
    critic.w += alpha_w * (report.td_error * critic.trace_w - advantage * psi);
    theta += p.alpha_theta * critic.w;
  } else {
    theta += (p.alpha_theta * report.td_error) * psi;
  }
  critic.v += (alpha_v * report.td_error) * critic.trace_v;
  report.applied = true;
  return report;
}

}  // namespace pursuit
