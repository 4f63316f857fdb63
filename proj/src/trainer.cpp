#include "pursuit/trainer.hpp"

#include "pursuit/features.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace pursuit {

void write_telemetry_row(std::ostream& out, const TelemetryRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.frame, r.recon_error,
                r.reward, r.slip.x(), r.slip.y(), r.eye_velocity.x(), r.eye_velocity.y(), r.action.x(), r.action.y());
  out << buf;
}

std::shared_ptr<const Corpus> training_corpus(const TrainConfig& cfg) {
  if (!cfg.corpus.train_dir.empty()) return std::make_shared<const Corpus>(load_texture_dir(cfg.corpus.train_dir));
  return std::make_shared<const Corpus>(
      synth_corpus(derive_seed(cfg.seed, "train-corpus"), cfg.corpus.synth_train, cfg.corpus.synth_size));
}

Corpus holdout_corpus(const TrainConfig& cfg) {
  if (!cfg.corpus.holdout_dir.empty()) return load_texture_dir(cfg.corpus.holdout_dir);
  // Synthetic held-out textures use a stream that no training seed maps to.
  return synth_corpus(derive_seed(cfg.seed, "holdout-corpus"), cfg.corpus.synth_holdout, cfg.corpus.synth_size);
}

Trainer::Trainer(TrainConfig cfg, std::shared_ptr<const Corpus> corpus)
    : cfg_((cfg.validate(), std::move(cfg))), env_(std::move(corpus), cfg_.env) {}

double Trainer::learning_rate(long frame) const {
  return cfg_.dictionary.lr / (1.0 + static_cast<double>(frame) / cfg_.dictionary.lr_tau);
}

double Trainer::temperature(long frame) const {
  const auto& p = cfg_.policy;
  if (p.temperature_tau <= 0.0) return p.temperature;
  return std::max(p.temperature_min, p.temperature * std::exp(-static_cast<double>(frame) / p.temperature_tau));
}

double Trainer::actor_step(long frame) const {
  if (cfg_.actor_tau <= 0.0) return cfg_.critic.alpha_theta;
  return cfg_.critic.alpha_theta / (1.0 + static_cast<double>(frame) / cfg_.actor_tau);
}

Checkpoint Trainer::initial_state() const {
  const Index n = cfg_.dictionary.atoms;
  Checkpoint c;
  Rng dict_rng(derive_seed(cfg_.seed, "dictionary"));
  c.dictionary = random_dictionary(cfg_.geometry().dimension(), n, dict_rng);
  if (cfg_.policy.head == "softmax") {
    c.policy = SoftmaxPolicy(n, cfg_.policy.actions, cfg_.policy.temperature, cfg_.env.max_accel);
  } else {
    c.policy = GaussianPolicy(n, cfg_.policy.hidden, cfg_.policy.sigma, cfg_.env.max_accel);
  }
  c.policy_rng = Rng(derive_seed(cfg_.seed, "policy"));
  Rng init_rng(derive_seed(cfg_.seed, "policy-init"));
  randomize(c.policy, cfg_.policy.init_scale, init_rng);
  c.critic = CriticState::zeros(n, policy_params(c.policy).size(), cfg_.critic);
  c.env = env_.reset(cfg_.seed);
  c.frame = 0;
  c.config_hash = cfg_.hash();
  return c;
}

VectorXd Trainer::features(const BatchEncoder& encoder, const FramePair& pair, EncodedBatch* encoded) const {
  const PatchBatch batch = extract_patches(pair, cfg_.geometry());
  EncodedBatch e = encoder.encode(batch);
  VectorXd f = condition_features(pool_features(e.codes, batch.count(), cfg_.dictionary.atoms), cfg_.features);
  if (encoded) *encoded = std::move(e);
  return f;
}

void Trainer::run(Checkpoint& s, long until_frame, const TrainHooks& hooks, TrainStats* stats) const {
  if (s.config_hash != cfg_.hash()) throw ConfigError("checkpoint was produced by a different configuration");
  const PatchGeometry geometry = cfg_.geometry();
  const PursuitOptions pursuit = cfg_.pursuit();
  while (s.frame < until_frame) {
    const long t = s.frame;
    try {
      if (auto* sm = std::get_if<SoftmaxPolicy>(&s.policy)) sm->set_temperature(temperature(t));

      const FramePair pair = env_.render(s.env);
      const PatchBatch batch = extract_patches(pair, geometry);
      const BatchEncoder encoder(s.dictionary, pursuit, cfg_.workers);
      const EncodedBatch enc = encoder.encode(batch);
      if (!std::isfinite(enc.error)) throw NumericError("reconstruction error is not finite");
      const double reward = -enc.error;
      const VectorXd f =
          condition_features(pool_features(enc.codes, batch.count(), cfg_.dictionary.atoms), cfg_.features);
      if (!f.allFinite()) throw NumericError("features are not finite");

      if (s.pending) {
        s.critic.params.alpha_theta = actor_step(t);
        const NacReport rep = nac_update(s.critic, s.policy, s.pending_features, s.pending_sample, reward, f);
        if (!rep.applied && stats) ++stats->nac_skipped;
      }
      const PolicySample sample = sample_action(s.policy, f, s.policy_rng);

      const TelemetryRow row{t, enc.error, reward, s.env.slip(), s.env.eye.velocity, sample.action.accel};
      if (stats) {
        stats->max_energy_defect = std::max(stats->max_energy_defect, enc.max_energy_defect);
        stats->min_reward = std::min(stats->min_reward, reward);
        stats->max_reward = std::max(stats->max_reward, reward);
      }

      s.env = env_.step(s.env, sample.action).second;
      s.dictionary = update_dictionary(s.dictionary, batch, enc.codes, learning_rate(t), &enc.residuals);
      s.pending = true;
      s.pending_features = f;
      s.pending_sample = sample;
      s.frame = t + 1;

      if (hooks.on_frame) hooks.on_frame(row);
      if (hooks.on_row && t % cfg_.log_every == 0) hooks.on_row(row);
      if (hooks.on_checkpoint && s.frame % cfg_.checkpoint_every == 0 && s.frame < until_frame) hooks.on_checkpoint(s);
    } catch (const NumericError& e) {
      throw NumericError("frame " + std::to_string(t) + ": " + e.what());
    }
  }
}

Checkpoint train(const TrainConfig& cfg, const TrainHooks& hooks, TrainStats* stats) {
  const Trainer trainer(cfg, training_corpus(cfg));
  Checkpoint state = trainer.initial_state();
  if (hooks.on_checkpoint) hooks.on_checkpoint(state);
  trainer.run(state, cfg.frames, hooks, stats);
  if (hooks.on_checkpoint && state.frame > 0) hooks.on_checkpoint(state);
  return state;
}

}  // namespace pursuit
