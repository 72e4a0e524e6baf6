#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ddgen/gscm.hpp"
#include "ddgen/htransformer.hpp"
#include "ddgen/trainer.hpp"

namespace ddgen {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable constant of a run. Defaults are the full-scale settings.
struct RunConfig {
  // world and trajectory
  std::size_t n_paths = 26;
  double fc_ghz = 2.4;
  double delta2d = 1.0;
  double h_rx = 1.5;
  gscm::Vec3 tx{0.0, 0.0, 25.0};
  double start_x = 100.0;
  double start_y = 100.0;
  gscm::Bounds bounds;
  std::size_t headings = 50;
  std::size_t hold_min = 100;
  std::size_t hold_max = 500;
  double max_distance_2d = 600.0;
  std::size_t max_redraws = 100;
  std::size_t steps = 125000;            // total samples
  std::size_t trajectory_steps = 1000;   // samples per trajectory; 0 = one trajectory
  std::uint64_t seed = 1;

  // data handling
  double train_fraction = 0.8;
  std::size_t train_stride = 1;
  std::size_t eval_stride = 1;

  model::ModelConfig model;
  train::TrainConfig training;
  double max_loss_weight = 1e6;

  std::size_t cdf_points = 512;
  double floor_db = -120.0;
  std::size_t runs = 1;  // independent seeds per train/evaluate call

  /// Applies one key=value setting; unknown keys and malformed values throw.
  void set(const std::string& key, const std::string& value);
  /// Sorted (key, value) pairs of the full configuration.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  /// Trajectory `index`, each with its own seed and the full step count
  /// (callers truncate the last one).
  gscm::TrajectoryConfig trajectory(std::size_t index = 0) const;
};

/// Reads key=value lines ('#' starts a comment) into `config`.
void load_config_file(const std::filesystem::path& path, RunConfig& config);

/// The reduced setting used for quick runs and the acceptance checks.
RunConfig desk_preset();

/// Deterministic 64-bit mixing of a seed with a stream index.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace ddgen
