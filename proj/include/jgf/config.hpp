// Run configuration for the command-line pipeline: one flat
// `section.key = value` file layered over a named preset.
#pragma once

#include "jgf/core.hpp"
#include "jgf/dynamics.hpp"
#include "jgf/eval.hpp"
#include "jgf/genmodel.hpp"
#include "jgf/inference.hpp"
#include "jgf/uq.hpp"
#include "jgf/windows.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace jgf {

enum class SystemKind { Lorenz63, Ks };
SystemKind parse_system(const std::string& name);
const char* to_string(SystemKind s) noexcept;

struct RunConfig {
  // run.*
  SystemKind system = SystemKind::Lorenz63;
  std::optional<std::uint64_t> seed;
  std::filesystem::path output_dir = "out";
  Index threads = 1;

  // dynamics.*, lorenz.*, ks.*
  double dt = 2.5e-2;
  Index steps = 200000;
  double transient = 25.0;
  Index substeps = 1;
  Lorenz63Params lorenz;
  Eigen::Vector3d lorenz_ic{1.0, 1.0, 1.0};
  KsGrid ks_grid;

  // windows.*
  Index window_count = 100000;
  double train_start = 0.0;
  double train_end = 2500.0;
  Sampling sampling = Sampling::UniformRandom;

  // model.*, train.*
  ModelConfig model;
  TrainConfig train;

  // forecast.*
  ForecastMode mode = ForecastMode::Sieve;
  SieveConfig sieve;
  LatentControlConfig latent;
  Index horizon = 400;
  Index n_ics = 100;
  double test_start = 2500.0;
  double test_end = 5000.0;
  /// Replace the learned sampler by the true one-step map plus noise.
  bool oracle = false;
  double oracle_tail_noise = 1e-3;
  double oracle_head_noise = 1e-3;
  /// Single long run starting right after train_end; 0 disables it.
  Index long_horizon = 0;
  Index long_refresh_every = 0;
  /// Also export each run's ensembles as long-format CSV.
  bool ensemble_csv = false;

  // uq.*
  UqConfig uq;
  /// 0 = every forecast run.
  Index uq_max_runs = 0;
  bool uq_allow_conditional = false;

  // eval.*
  Index bins = 100;
  double tail_fraction = 0.05;
  CvScheme cv_scheme = CvScheme::SplitHalf;
  Index group_size = 1;
  Index clim_pairs = 100000;
  Index lead_check = 10;

  /// Sets one `section.key` entry from its text form.
  void set(const std::string& key, const std::string& value);
  /// Cross-section consistency; touches no files.
  void validate() const;
  /// Every key with its current value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;

  std::uint64_t root_seed() const;
  Index dim() const { return system == SystemKind::Lorenz63 ? 3 : ks_grid.n_points; }
};

/// Names accepted by apply_preset.
std::vector<std::string> preset_names();
void apply_preset(RunConfig& cfg, const std::string& name);

/// Applies `section.key = value` lines; '#' starts a comment.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);
/// Applies one `section.key=value` override.
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace jgf
