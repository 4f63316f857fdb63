#include "pursuit/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace pursuit {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("invalid value for " + key + ": '" + value + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) bad_value(key, v);
  return d;
}

template <typename Int>
Int parse_int(const std::string& key, const std::string& v) {
  // Accept integral values written in floating notation ("2e5").
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec == std::errc() && ptr == v.data() + v.size()) return out;
  const double d = parse_double(key, v);
  if (d != static_cast<double>(static_cast<Int>(d))) bad_value(key, v);
  return static_cast<Int>(d);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v);
}

// Shortest text that parses back to the same double.
std::string fmt(double d) {
  char buf[40];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, end);
}

template <typename T>
std::string fmt_int(T v) {
  return std::to_string(v);
}

#define KEY_DOUBLE(NAME, FIELD, HELP)                                                                   \
  ConfigKey {                                                                                           \
    NAME, HELP, [](TrainConfig& c, const std::string& v) { c.FIELD = parse_double(NAME, v); },           \
        [](const TrainConfig& c) { return fmt(c.FIELD); }                                               \
  }
#define KEY_INT(NAME, FIELD, HELP)                                                                      \
  ConfigKey {                                                                                           \
    NAME, HELP,                                                                                         \
        [](TrainConfig& c, const std::string& v) { c.FIELD = parse_int<decltype(c.FIELD)>(NAME, v); },  \
        [](const TrainConfig& c) { return fmt_int(c.FIELD); }                                           \
  }
#define KEY_BOOL(NAME, FIELD, HELP)                                                                     \
  ConfigKey {                                                                                           \
    NAME, HELP, [](TrainConfig& c, const std::string& v) { c.FIELD = parse_bool(NAME, v); },            \
        [](const TrainConfig& c) { return std::string(c.FIELD ? "true" : "false"); }                    \
  }
#define KEY_STRING(NAME, FIELD, HELP)                                                                   \
  ConfigKey {                                                                                           \
    NAME, HELP, [](TrainConfig& c, const std::string& v) { c.FIELD = v; },                              \
        [](const TrainConfig& c) { return c.FIELD; }                                                    \
  }

std::vector<ConfigKey> build_keys() {
  return {
      KEY_INT("run.seed", seed, "base seed for every random stream"),
      KEY_INT("run.frames", frames, "total training frames"),
      KEY_INT("run.log_every", log_every, "telemetry row cadence in frames"),
      KEY_INT("run.checkpoint_every", checkpoint_every, "checkpoint cadence in frames"),
      KEY_INT("run.workers", workers, "patch-coding worker threads"),
      KEY_STRING("corpus.train_dir", corpus.train_dir, "directory of training PGM textures (empty: synthetic)"),
      KEY_STRING("corpus.holdout_dir", corpus.holdout_dir, "directory of held-out PGM textures (empty: synthetic)"),
      KEY_INT("corpus.synth_train", corpus.synth_train, "number of synthetic training textures"),
      KEY_INT("corpus.synth_holdout", corpus.synth_holdout, "number of synthetic held-out textures"),
      KEY_INT("corpus.synth_size", corpus.synth_size, "side of synthetic textures in pixels"),
      KEY_INT("dictionary.atoms", dictionary.atoms, "number of atoms N"),
      KEY_INT("dictionary.kmax", dictionary.kmax, "nonzero coefficients per patch"),
      KEY_DOUBLE("dictionary.lr", dictionary.lr, "initial dictionary learning rate"),
      KEY_DOUBLE("dictionary.lr_tau", dictionary.lr_tau, "learning-rate decay constant in frames"),
      KEY_INT("dictionary.grid", dictionary.grid, "patches per fovea side"),
      KEY_INT("dictionary.patch", dictionary.patch, "patch side in pixels"),
      KEY_BOOL("features.normalize", features.normalize, "divide pooled responses by their sum"),
      KEY_DOUBLE("features.scale", features.scale, "gain applied to pooled responses"),
      KEY_STRING("policy.head", policy.head, "gaussian or softmax"),
      KEY_INT("policy.hidden", policy.hidden, "hidden units of the gaussian head"),
      KEY_DOUBLE("policy.sigma", policy.sigma, "gaussian action standard deviation (px/frame^2)"),
      KEY_INT("policy.actions", policy.actions, "commands per axis of the softmax head"),
      KEY_DOUBLE("policy.temperature", policy.temperature, "softmax temperature"),
      KEY_DOUBLE("policy.temperature_tau", policy.temperature_tau, "exponential temperature decay in frames (0: off)"),
      KEY_DOUBLE("policy.temperature_min", policy.temperature_min, "temperature floor under decay"),
      KEY_DOUBLE("policy.init_scale", policy.init_scale, "initial weights uniform in [-s, s]"),
      KEY_DOUBLE("critic.alpha_v", critic.alpha_v, "value step size"),
      KEY_DOUBLE("critic.alpha_w", critic.alpha_w, "advantage step size"),
      KEY_DOUBLE("critic.alpha_theta", critic.alpha_theta, "policy step size"),
      KEY_DOUBLE("critic.actor_tau", actor_tau, "policy step-size decay constant in frames (0: off)"),
      KEY_DOUBLE("critic.gamma", critic.gamma, "discount factor"),
      KEY_DOUBLE("critic.lambda", critic.lambda, "eligibility trace decay"),
      ConfigKey{"critic.variant", "natural or vanilla actor-critic",
                [](TrainConfig& c, const std::string& v) {
                  if (v == "natural") {
                    c.critic.variant = ActorCriticVariant::natural;
                  } else if (v == "vanilla") {
                    c.critic.variant = ActorCriticVariant::vanilla;
                  } else {
                    bad_value("critic.variant", v);
                  }
                },
                [](const TrainConfig& c) {
                  return std::string(c.critic.variant == ActorCriticVariant::natural ? "natural" : "vanilla");
                }},
      KEY_BOOL("critic.normalized_steps", critic.normalized_steps, "normalize critic steps by trace energy"),
      KEY_INT("env.episode_frames", env.episode_frames, "frames per target episode"),
      KEY_DOUBLE("env.max_speed", env.max_speed, "velocity bound per axis (px/frame)"),
      KEY_DOUBLE("env.max_accel", env.max_accel, "acceleration bound per axis (px/frame^2)"),
      KEY_INT("eval.pairs", eval_pairs, "image pairs per slip condition"),
      KEY_INT("eval.seed", eval_seed, "seed of the evaluation window draws"),
  };
}

#undef KEY_DOUBLE
#undef KEY_INT
#undef KEY_BOOL
#undef KEY_STRING

}  // namespace

TrainConfig TrainConfig::smoke() {
  TrainConfig c;
  c.frames = 10000;
  c.dictionary.atoms = 64;
  c.dictionary.grid = 5;
  c.checkpoint_every = 2500;
  c.eval_pairs = 10;
  return c;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError(std::string(key) + " " + what);
  };
  require(frames >= 0, "run.frames", "must be >= 0");
  require(log_every >= 1, "run.log_every", "must be >= 1");
  require(checkpoint_every >= 1, "run.checkpoint_every", "must be >= 1");
  require(workers >= 1, "run.workers", "must be >= 1");
  require(corpus.synth_train >= 1, "corpus.synth_train", "must be >= 1");
  require(corpus.synth_holdout >= 1, "corpus.synth_holdout", "must be >= 1");
  require(corpus.synth_size >= Units::fovea_px, "corpus.synth_size", "must be >= 55");
  require(corpus.train_dir.empty() || corpus.train_dir != corpus.holdout_dir, "corpus.holdout_dir",
          "must differ from corpus.train_dir");
  require(dictionary.atoms >= 1, "dictionary.atoms", "must be >= 1");
  require(dictionary.kmax >= 1, "dictionary.kmax", "must be >= 1");
  require(dictionary.lr >= 0.0, "dictionary.lr", "must be >= 0");
  require(dictionary.lr_tau > 0.0, "dictionary.lr_tau", "must be > 0");
  require(dictionary.patch >= 1 && dictionary.patch <= Units::fovea_px, "dictionary.patch", "must be in [1, 55]");
  require(dictionary.grid >= 1 && (dictionary.grid == 1 || dictionary.grid - 1 <= Units::fovea_px - dictionary.patch),
          "dictionary.grid", "does not fit the fovea");
  require(features.scale > 0.0, "features.scale", "must be > 0");
  require(policy.head == "gaussian" || policy.head == "softmax", "policy.head", "must be gaussian or softmax");
  require(policy.hidden >= 1, "policy.hidden", "must be >= 1");
  require(policy.sigma > 0.0, "policy.sigma", "must be > 0");
  require(policy.actions >= 2, "policy.actions", "must be >= 2");
  require(policy.temperature > 0.0, "policy.temperature", "must be > 0");
  require(policy.temperature_tau >= 0.0, "policy.temperature_tau", "must be >= 0");
  require(policy.temperature_min > 0.0, "policy.temperature_min", "must be > 0");
  require(policy.init_scale >= 0.0, "policy.init_scale", "must be >= 0");
  require(critic.alpha_v >= 0.0, "critic.alpha_v", "must be >= 0");
  require(critic.alpha_w >= 0.0, "critic.alpha_w", "must be >= 0");
  require(critic.alpha_theta >= 0.0, "critic.alpha_theta", "must be >= 0");
  require(actor_tau >= 0.0, "critic.actor_tau", "must be >= 0");
  require(critic.gamma >= 0.0 && critic.gamma < 1.0, "critic.gamma", "must be in [0, 1)");
  require(critic.lambda >= 0.0 && critic.lambda <= 1.0, "critic.lambda", "must be in [0, 1]");
  require(env.episode_frames >= 1, "env.episode_frames", "must be >= 1");
  require(env.max_speed > 0.0, "env.max_speed", "must be > 0");
  require(env.max_accel > 0.0, "env.max_accel", "must be > 0");
  require(eval_pairs >= 1, "eval.pairs", "must be >= 1");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key: " + key);
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    out[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
  }
  return out;
}

TrainConfig config_from_text(const std::string& text, TrainConfig base) {
  for (const auto& [k, v] : parse_config_text(text)) set_config_value(base, k, v);
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_text(ss.str(), std::move(base));
}

std::string format_config(const TrainConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : config_keys()) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << k.name.substr(dot + 1) << " = " << k.get(cfg) << '\n';
  }
  return out.str();
}

std::uint64_t TrainConfig::hash() const {
  static const char* const excluded[] = {"run.frames", "run.log_every", "run.checkpoint_every", "run.workers",
                                         "eval.pairs", "eval.seed"};
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& k : config_keys()) {
    bool skip = false;
    for (const char* e : excluded) skip = skip || k.name == e;
    if (skip) continue;
    for (unsigned char c : k.name + "=" + k.get(*this) + "\n") {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace pursuit
