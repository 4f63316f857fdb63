// Command-line front end: training, evaluation and analysis subcommands.
#include "pursuit/analysis.hpp"
#include "pursuit/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

namespace fs = std::filesystem;
using namespace pursuit;

namespace {

struct Common {
  std::string config_path;
  std::string out_dir = "out";
  int workers = 0;
  std::map<std::string, std::string> overrides;
};

TrainConfig resolve_config(const Common& c, TrainConfig base) {
  TrainConfig cfg = c.config_path.empty() ? base : load_config(c.config_path, base);
  // Flags win over the file; they are applied in key-table order.
  for (const auto& key : config_keys()) {
    const auto it = c.overrides.find(key.name);
    if (it != c.overrides.end() && !it->second.empty()) set_config_value(cfg, key.name, it->second);
  }
  if (c.workers > 0) cfg.workers = c.workers;
  cfg.validate();
  return cfg;
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out_dir);
  return c.out_dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

Checkpoint load_matching(const std::string& path, const TrainConfig& cfg) {
  Checkpoint c = load_checkpoint(path);
  if (c.config_hash != cfg.hash())
    throw ConfigError("checkpoint " + path + " was produced by a different configuration; pass its config.ini");
  return c;
}

std::vector<fs::path> checkpoints_in(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".bin" && e.path().filename().string().rfind("ckpt_", 0) == 0)
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no ckpt_*.bin files in " + dir.string());
  return files;
}

std::string ckpt_name(long frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%09ld.bin", frame);
  return buf;
}

void write_grid(const fs::path& dir, const SlipGridResult& g) {
  auto out = open_out(dir / "slip_grid.csv");
  out << "slip_x,slip_y,mean_action_x,mean_action_y,sq_error\n";
  for (const auto& c : g.conditions)
    out << num(c.slip.x()) << ',' << num(c.slip.y()) << ',' << num(c.mean_action.x()) << ','
        << num(c.mean_action.y()) << ',' << num(c.sq_error) << '\n';
  auto mag = open_out(dir / "slip_magnitude.csv");
  mag << "magnitude,conditions,mse\n";
  for (std::size_t k = 0; k < g.magnitude_mse.size(); ++k)
    if (g.magnitude_count[k] > 0) mag << k << ',' << g.magnitude_count[k] << ',' << num(g.magnitude_mse[k]) << '\n';
}

GridOptions grid_options(const TrainConfig& cfg) {
  GridOptions o;
  o.pairs = cfg.eval_pairs;
  o.seed = cfg.eval_seed;
  o.max_accel = cfg.env.max_accel;
  return o;
}

// ---- subcommands ------------------------------------------------------------

int cmd_train(const Common& common, const std::string& resume) {
  const TrainConfig cfg = resolve_config(common, TrainConfig{});
  const fs::path dir = out_dir(common);
  fs::create_directories(dir / "checkpoints");
  open_out(dir / "config.ini") << format_config(cfg);

  const Trainer trainer(cfg, training_corpus(cfg));
  Checkpoint state = resume.empty() ? trainer.initial_state() : load_matching(resume, cfg);
  const bool append = !resume.empty() && fs::exists(dir / "telemetry.csv");
  std::ofstream telemetry(dir / "telemetry.csv", append ? std::ios::app : std::ios::trunc);
  if (!append) telemetry << kTelemetryHeader << '\n';

  auto save = [&](const Checkpoint& c) { save_checkpoint(c, dir / "checkpoints" / ckpt_name(c.frame)); };
  if (resume.empty()) save(state);

  double first_sum = 0.0, last_sum = 0.0;
  long first_n = 0, last_n = 0;
  const long window = std::max(1L, std::min(10000L, cfg.frames / 2));
  TrainHooks hooks;
  hooks.on_row = [&](const TelemetryRow& r) { write_telemetry_row(telemetry, r); };
  hooks.on_frame = [&](const TelemetryRow& r) {
    if (r.frame < window) first_sum += r.recon_error, ++first_n;
    if (r.frame >= cfg.frames - window) last_sum += r.recon_error, ++last_n;
  };
  hooks.on_checkpoint = save;
  TrainStats stats;
  trainer.run(state, cfg.frames, hooks, &stats);
  save(state);
  save_checkpoint(state, dir / "final.bin");

  std::cout << "frames " << state.frame;
  if (first_n > 0) std::cout << " recon_error_first " << num(first_sum / first_n);
  if (last_n > 0) std::cout << " recon_error_last " << num(last_sum / last_n);
  std::cout << " checkpoint " << (dir / "final.bin").string() << '\n';
  return 0;
}

int cmd_eval_grid(const Common& common, const std::vector<std::string>& ckpts, bool ideal) {
  const TrainConfig cfg = resolve_config(common, TrainConfig{});
  if (!ideal && ckpts.empty()) throw ConfigError("eval-grid needs --checkpoint or --ideal");
  std::vector<ActionFn> agents;
  if (ideal) {
    agents.push_back(ideal_agent(cfg.env.max_accel));
  } else {
    for (const auto& p : ckpts) agents.push_back(greedy_agent(load_matching(p, cfg), cfg));
  }
  const SlipGridResult g = eval_slip_grid(agents, holdout_corpus(cfg), grid_options(cfg));
  write_grid(out_dir(common), g);
  std::cout << "mse " << num(g.mse) << " toward_origin " << g.toward_origin() << "/" << g.conditions.size() << '\n';
  return 0;
}

int cmd_mse_curve(const Common& common, const std::vector<std::string>& trial_dirs) {
  const TrainConfig cfg = resolve_config(common, TrainConfig{});
  if (trial_dirs.empty()) throw ConfigError("mse-curve needs at least one --trial directory");
  std::vector<std::vector<Checkpoint>> trials;
  for (const auto& d : trial_dirs) {
    std::vector<Checkpoint> t;
    for (const auto& f : checkpoints_in(d)) t.push_back(load_matching(f.string(), cfg));
    trials.push_back(std::move(t));
  }
  const auto curve = mse_training_curve(trials, cfg, holdout_corpus(cfg), grid_options(cfg));
  auto out = open_out(out_dir(common) / "mse_curve.csv");
  out << "frame,mse,stddev\n";
  for (const auto& p : curve) out << p.frame << ',' << num(p.mse) << ',' << num(p.stddev) << '\n';
  std::cout << "final_mse " << num(curve.back().mse) << " points " << curve.size() << '\n';
  return 0;
}

std::vector<GaborFit> fit_all(const Checkpoint& c, const TrainConfig& cfg) {
  std::vector<GaborFit> fits;
  for (Index n = 0; n < c.dictionary.size(); ++n)
    fits.push_back(fit_gabor(c.dictionary.atoms.col(n), cfg.dictionary.patch));
  return fits;
}

int cmd_fit_gabors(const Common& common, const std::string& ckpt) {
  const TrainConfig cfg = resolve_config(common, TrainConfig{});
  const auto fits = fit_all(load_matching(ckpt, cfg), cfg);
  auto out = open_out(out_dir(common) / "gabor_fits.csv");
  out << "atom,fit,center_x,center_y,orientation_deg,wavelength,sigma_u,sigma_v,phase_prev,phase_curr,amplitude,"
         "phase_shift,velocity,fit_error\n";
  std::vector<double> errors;
  for (std::size_t n = 0; n < fits.size(); ++n) {
    const auto& f = fits[n];
    const auto& p = f.params;
    out << n << ',' << (f.fit ? 1 : 0) << ',' << num(p.cx) << ',' << num(p.cy) << ',' << num(f.orientation_deg) << ','
        << num(p.lambda) << ',' << num(p.sigma_u) << ',' << num(p.sigma_v) << ',' << num(p.phase_prev) << ','
        << num(p.phase_curr) << ',' << num(p.amplitude) << ',' << num(f.phase_shift()) << ','
        << num(preferred_velocity(f)) << ',' << num(f.error) << '\n';
    if (f.fit) errors.push_back(f.error);
  }
  if (errors.empty()) {
    std::cout << "no atom could be fitted\n";
    return 0;
  }
  std::nth_element(errors.begin(), errors.begin() + static_cast<long>(errors.size() / 2), errors.end());
  std::cout << "median_fit_error " << num(errors[errors.size() / 2]) << " atoms " << fits.size() << '\n';
  return 0;
}

int cmd_tuning(const Common& common, const std::string& ckpt, int atom) {
  const TrainConfig cfg = resolve_config(common, TrainConfig{});
  const Checkpoint c = load_matching(ckpt, cfg);
  const Index n = c.dictionary.size();
  if (atom >= n) throw ConfigError("--atom " + std::to_string(atom) + " is out of range");
  const fs::path dir = out_dir(common);
  auto dir_out = open_out(dir / "tuning_direction.csv");
  auto vel_out = open_out(dir / "tuning_velocity.csv");
  auto peak_out = open_out(dir / "tuning_peaks.csv");
  dir_out << "atom,direction_deg,response\n";
  vel_out << "atom,speed,response\n";
  peak_out << "atom,orientation_deg,wavelength,speed,direction_peak_deg,speed_peak\n";
  const Index begin = atom < 0 ? 0 : atom, end = atom < 0 ? n : atom + 1;
  for (Index a = begin; a < end; ++a) {
    const TuningCurve t = tuning_curves(c.dictionary.atoms.col(a), cfg.dictionary.patch);
    if (!t.fit) continue;
    for (std::size_t i = 0; i < t.directions_deg.size(); ++i)
      dir_out << a << ',' << num(t.directions_deg[i]) << ',' << num(t.direction_response[i]) << '\n';
    for (std::size_t i = 0; i < t.speeds.size(); ++i)
      vel_out << a << ',' << num(t.speeds[i]) << ',' << num(t.speed_response[i]) << '\n';
    peak_out << a << ',' << num(t.best_orientation_deg) << ',' << num(t.best_wavelength) << ',' << num(t.best_speed)
             << ',' << num(t.directions_deg[static_cast<std::size_t>(t.direction_peak)]) << ','
             << num(t.speeds[static_cast<std::size_t>(t.speed_peak)]) << '\n';
  }
  std::cout << "tuning curves for " << (end - begin) << " atoms\n";
  return 0;
}

int cmd_histograms(const Common& common, const std::string& ckpt, double threshold) {
  const TrainConfig cfg = resolve_config(common, TrainConfig{});
  const auto h = preference_histograms(fit_all(load_matching(ckpt, cfg), cfg), threshold);
  const fs::path dir = out_dir(common);
  auto ori = open_out(dir / "hist_orientation.csv");
  ori << "bin_start_deg,bin_end_deg,count\n";
  for (std::size_t i = 0; i < h.orientation_counts.size(); ++i)
    ori << num(h.orientation_edges[i]) << ',' << num(h.orientation_edges[i + 1]) << ',' << h.orientation_counts[i]
        << '\n';
  auto vel = open_out(dir / "hist_velocity.csv");
  vel << "bin_center,count\n";
  for (std::size_t i = 0; i < h.velocity_counts.size(); ++i)
    vel << num(h.velocity_centers[i]) << ',' << h.velocity_counts[i] << '\n';
  if (h.included == 0) std::cerr << "warning: no atom has fit error below " << threshold << '\n';
  std::cout << "included " << h.included << " slow_fraction " << num(h.slow_fraction()) << " out_of_range "
            << h.velocity_out_of_range << '\n';
  return 0;
}

int cmd_render(const Common& common, const std::string& ckpt) {
  const TrainConfig cfg = resolve_config(common, TrainConfig{});
  const Checkpoint c = load_matching(ckpt, cfg);
  const fs::path path = out_dir(common) / "bases.pgm";
  write_pgm_file(path, render_atoms(c.dictionary, cfg.dictionary.patch));
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_smoke(const Common& common) {
  const TrainConfig cfg = resolve_config(common, TrainConfig::smoke());
  const fs::path dir = out_dir(common);
  open_out(dir / "config.ini") << format_config(cfg);

  std::ostringstream log_a, log_b;
  TrainStats stats;
  auto run = [&](std::ostringstream& log, TrainStats* s) {
    TrainHooks hooks;
    hooks.on_row = [&](const TelemetryRow& r) { write_telemetry_row(log, r); };
    return train(cfg, hooks, s);
  };
  const Checkpoint final_state = run(log_a, &stats);
  run(log_b, nullptr);
  save_checkpoint(final_state, dir / "final.bin");
  open_out(dir / "telemetry.csv") << kTelemetryHeader << '\n' << log_a.str();

  bool ok = true;
  auto check = [&](bool cond, const std::string& what) {
    std::cout << (cond ? "ok   " : "FAIL ") << what << '\n';
    ok = ok && cond;
  };
  check(log_a.str() == log_b.str(), "repeated seeded runs give identical telemetry");
  check(stats.min_reward >= -1.0 && stats.max_reward <= 0.0, "reward stays in [-1, 0]");
  check(stats.max_energy_defect <= 1e-9, "matching-pursuit energy identity within 1e-9");
  bool unit = true;
  try {
    final_state.dictionary.check_unit_norm();
  } catch (const ContractError&) {
    unit = false;
  }
  check(unit, "atoms have unit norm");
  check(decode_checkpoint(encode_checkpoint(final_state)) == final_state, "checkpoint round-trips exactly");
  const SlipGridResult g = eval_slip_grid({ideal_agent(cfg.env.max_accel)}, holdout_corpus(cfg), grid_options(cfg));
  check(g.mse == 0.0, "ideal policy scores zero grid error");
  const SlipGridResult trained =
      eval_slip_grid({greedy_agent(final_state, cfg)}, holdout_corpus(cfg), grid_options(cfg));
  write_grid(dir, trained);
  std::cout << "smoke " << (ok ? "passed" : "failed") << " frames " << final_state.frame << " grid_mse "
            << num(trained.mse) << '\n';
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint learning of motion coding and pursuit eye movements"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  if (const char* env = std::getenv("PURSUIT_CONFIG")) common.config_path = env;
  common.workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  app.add_option("-c,--config", common.config_path, "config file (default: $PURSUIT_CONFIG)");
  app.add_option("-o,--out", common.out_dir, "output directory, created if absent")->capture_default_str();
  app.add_option("--workers", common.workers, "patch-coding threads (config: [run] workers)")->capture_default_str();
  auto* keys = app.add_option_group("Config overrides", "each flag overrides the matching config-file key");
  for (const auto& key : config_keys()) {
    const auto dot = key.name.find('.');
    keys->add_option("--" + key.name, common.overrides[key.name],
                     key.help + " (config: [" + key.name.substr(0, dot) + "] " + key.name.substr(dot + 1) + ")");
  }

  std::string resume, ckpt;
  std::vector<std::string> ckpts, trials;
  bool ideal = false;
  int atom = -1;
  double threshold = 0.3;

  auto* train_cmd = app.add_subcommand("train", "run the closed perception/action learning loop");
  train_cmd->add_option("--resume", resume, "continue from a checkpoint");
  auto* grid_cmd = app.add_subcommand("eval-grid", "greedy-action error over the 81 slip conditions");
  grid_cmd->add_option("--checkpoint", ckpts, "checkpoint(s); several are averaged as trials");
  grid_cmd->add_flag("--ideal", ideal, "score the ideal one-step policy instead");
  auto* curve_cmd = app.add_subcommand("mse-curve", "grid error over a run's checkpoints");
  curve_cmd->add_option("--trial", trials, "checkpoint directory of one trial (repeatable)")->required();
  auto* fit_cmd = app.add_subcommand("fit-gabors", "fit two-frame Gabor functions to every atom");
  fit_cmd->add_option("--checkpoint", ckpt, "checkpoint")->required();
  auto* tune_cmd = app.add_subcommand("tuning", "drifting-grating direction and velocity tuning");
  tune_cmd->add_option("--checkpoint", ckpt, "checkpoint")->required();
  tune_cmd->add_option("--atom", atom, "atom index (default: all)");
  auto* hist_cmd = app.add_subcommand("histograms", "preferred orientation and velocity histograms");
  hist_cmd->add_option("--checkpoint", ckpt, "checkpoint")->required();
  hist_cmd->add_option("--threshold", threshold, "maximum fit error")->capture_default_str();
  auto* render_cmd = app.add_subcommand("render-bases", "write atoms as a PGM mosaic");
  render_cmd->add_option("--checkpoint", ckpt, "checkpoint")->required();
  auto* smoke_cmd = app.add_subcommand("smoke", "short training run with invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return cmd_train(common, resume);
    if (*grid_cmd) return cmd_eval_grid(common, ckpts, ideal);
    if (*curve_cmd) return cmd_mse_curve(common, trials);
    if (*fit_cmd) return cmd_fit_gabors(common, ckpt);
    if (*tune_cmd) return cmd_tuning(common, ckpt, atom);
    if (*hist_cmd) return cmd_histograms(common, ckpt, threshold);
    if (*render_cmd) return cmd_render(common, ckpt);
    if (*smoke_cmd) return cmd_smoke(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
