#pragma once

#include "pursuit/environment.hpp"
#include "pursuit/features.hpp"
#include "pursuit/policy.hpp"
#include "pursuit/sparsecode.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace pursuit {

struct CorpusConfig {
  std::string train_dir;    // empty: synthetic textures
  std::string holdout_dir;  // empty: synthetic textures
  int synth_train = 20;
  int synth_holdout = 10;
  int synth_size = 256;
};

struct DictionaryConfig {
  int atoms = 300;
  int kmax = 10;
  double lr = 2.0;
  double lr_tau = 1e5;
  int grid = 10;
  int patch = 10;
};

struct PolicyConfig {
  std::string head = "gaussian";
  int hidden = 5;
  double sigma = 1.0;
  int actions = 11;
  double temperature = 1.0;
  double temperature_tau = 0.0;  // 0 disables decay
  double temperature_min = 0.05;
  double init_scale = 0.01;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  long frames = 200000;
  long log_every = 100;
  long checkpoint_every = 1000;
  int workers = 1;
  CorpusConfig corpus;
  DictionaryConfig dictionary;
  FeatureOptions features;
  PolicyConfig policy;
  CriticParams critic{0.1, 0.05, 0.05};
  double actor_tau = 5e4;  // alpha_theta / (1 + t / actor_tau); 0 disables decay
  EnvParams env;
  int eval_pairs = 50;
  std::uint64_t eval_seed = 7;

  /// CI profile: 64 atoms, 10^4 frames, 5x5 patch grid.
  static TrainConfig smoke();

  PatchGeometry geometry() const { return {dictionary.grid, dictionary.patch}; }
  PursuitOptions pursuit() const { return {dictionary.kmax, 0.0, 0}; }

  /// Throws ConfigError naming the first offending key.
  void validate() const;

  /// Hash of every field that shapes the learning dynamics (not run length,
  /// cadences or worker count), so a checkpoint can be matched to its config.
  std::uint64_t hash() const;
};

/// One settable key. `name` is "section.key".
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

/// Applies one "section.key" = value assignment; unknown keys and
/// unparsable values throw ConfigError naming the key.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Parses `[section]` headers and `key = value` lines; `#` and `;` start comments.
std::map<std::string, std::string> parse_config_text(const std::string& text);

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
TrainConfig config_from_text(const std::string& text, TrainConfig base = {});

/// Canonical text form; round-trips through config_from_text.
std::string format_config(const TrainConfig& cfg);

}  // namespace pursuit
