#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ddgen/ad/checkpoint.hpp"
#include "ddgen/chanstats.hpp"
#include "ddgen/config.hpp"
#include "ddgen/dataset.hpp"
#include "ddgen/htransformer.hpp"
#include "ddgen/trainer.hpp"

namespace ddgen {

/// Scaled dataset split into a training and an evaluation segment.
struct PreparedData {
  DatasetHeader header;
  ad::Matrix rows;    // dataset units
  ad::Matrix scaled;  // scaler applied to every row
  std::size_t train_end = 0;
  train::ScalerSpec scaler;
  train::LossWeights weights;
  std::vector<train::WindowedExample> train_windows;
  std::vector<train::WindowedExample> eval_windows;
};

/// Fits the scaler and loss weights on the training rows only and cuts
/// windows that stay inside their segment.
PreparedData prepare_data(const RunConfig& config, const Dataset& ds);

model::ModelConfig model_config(const RunConfig& config, std::size_t n_paths);

struct TrainResult {
  std::vector<train::EpochRecord> trace;
  ad::Checkpoint checkpoint;  // last good state when diverged
  bool diverged = false;
  std::string error;
};

struct TrainRequest {
  std::uint64_t seed = 0;
  train::LossMode mode = train::LossMode::kStats;
  std::size_t epochs = 0;  // 0 uses config.training.epochs
  const ad::Checkpoint* resume = nullptr;
  std::function<void(const train::EpochRecord&)> on_epoch;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables
  std::function<void(const ad::Checkpoint&, std::size_t epoch)> on_checkpoint;
};

/// Trains one model. The returned checkpoint holds parameters, optimizer
/// state, scaler, loss weights and the model shape. A non-finite loss stops
/// training with `diverged` set and the epoch-start state in `checkpoint`.
TrainResult train_model(const RunConfig& config, const PreparedData& data,
                        const TrainRequest& request);

struct LoadedModel {
  std::unique_ptr<model::HybridTransformer> model;
  train::ScalerSpec scaler;
};
LoadedModel load_model(const ad::Checkpoint& ckpt);

/// Freshly initialized model for a seed, as training would start from.
std::unique_ptr<model::HybridTransformer> untrained_model(const RunConfig& config,
                                                          std::size_t n_paths,
                                                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// Evaluation

inline constexpr std::size_t kStatCount = 6;
inline constexpr std::array<const char*, kStatCount> kStatNames = {
    "delay_spread", "az_dod_spread", "az_doa_spread", "zn_dod_spread", "zn_doa_spread",
    "mpc_power"};

/// Per-statistic samples pooled over steps (delay spread in ns, MPC power
/// in dB, one value per path).
struct PooledStats {
  std::array<std::vector<double>, kStatCount> values;
  void add_rows(const ad::Matrix& unscaled_rows, std::size_t n_paths);
  void append(const PooledStats& other);
};

struct StatComparison {
  std::string name;
  chanstats::EmpiricalCdf truth;
  chanstats::EmpiricalCdf model;
  double mse_db = 0.0;
};

std::vector<StatComparison> compare_stats(const PooledStats& truth, const PooledStats& model,
                                          std::size_t cdf_points, double floor_db);

using Generator = std::function<ad::Matrix(const ad::Matrix& history_scaled)>;

/// Ground-truth targets of every evaluation window.
PooledStats pool_truth(const PreparedData& data);
/// Generated windows for every evaluation window. Throws std::logic_error if
/// a window reaches into the training segment.
PooledStats pool_generated(const PreparedData& data, const Generator& generate);

Generator model_generator(model::HybridTransformer& model);

}  // namespace ddgen
