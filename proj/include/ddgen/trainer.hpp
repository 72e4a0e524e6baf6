#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ddgen/ad/checkpoint.hpp"
#include "ddgen/ad/graph.hpp"
#include "ddgen/ad/matrix.hpp"
#include "ddgen/chanstats.hpp"
#include "ddgen/htransformer.hpp"

namespace ddgen::train {

using ad::Matrix;

// ---------------------------------------------------------------------------
// Feature scaling

/// Min-max scaling per feature, except for "fixed" features (receiver height
/// and path ids) which are divided by the number of paths.
struct ScalerSpec {
  std::size_t n_paths = 0;
  std::vector<double> min;
  std::vector<double> max;
  std::vector<bool> fixed;

  std::size_t width() const { return min.size(); }
  double scale_value(std::size_t feature, double x) const;
  double unscale_value(std::size_t feature, double x) const;
  Matrix scale(const Matrix& rows) const;
  Matrix unscale(const Matrix& rows) const;
  /// Differentiable unscaling recorded on the graph.
  ad::Var unscale(ad::Var rows) const;

  void save(ad::Checkpoint& ckpt) const;
  static ScalerSpec load(const ad::Checkpoint& ckpt);
};

/// Receiver height column plus every path-id column.
std::vector<std::size_t> fixed_feature_indices(std::size_t n_paths);

/// Throws std::invalid_argument naming the first constant non-fixed feature.
ScalerSpec fit_scaler(const Matrix& train_rows, std::span<const std::size_t> fixed_indices,
                      std::size_t n_paths);

// ---------------------------------------------------------------------------
// Windowing

struct WindowedExample {
  Matrix history;  // L x F
  Matrix target;   // P x F
  std::size_t trajectory = 0;
  std::size_t start = 0;  // dataset row of history's first sample
};

/// Sliding (history, target) windows over one trajectory. `row_offset` is
/// the dataset row of the trajectory's first sample. A trajectory shorter
/// than L + P yields no windows.
std::vector<WindowedExample> make_windows(const Matrix& trajectory, std::size_t lag,
                                          std::size_t window, std::size_t stride,
                                          std::size_t trajectory_id = 0,
                                          std::size_t row_offset = 0);

// ---------------------------------------------------------------------------
// Losses

double smooth_l1(double y, double yhat, double beta);

struct LossWeights {
  double delay = 1.0;
  double azimuth = 1.0;
  double zenith = 1.0;
  double gain = 1.0;
};

/// alpha = 1 / mean(|statistic|) per group; the azimuth and zenith groups
/// pool departure and arrival spreads. A zero mean yields `max_weight`.
/// Statistics must be in the units the loss sees (see loss_unit_stats).
LossWeights calibrate_weights(std::span<const chanstats::StatBundle> stats,
                              double max_weight = 1e6);

/// Per-row statistics of unscaled feature rows with the delay spread in
/// nanoseconds, matching the stored feature units used by stats_loss.
std::vector<chanstats::StatBundle> loss_unit_stats(const Matrix& unscaled_rows,
                                                   std::size_t n_paths);

/// Per-step statistics recorded on the graph from unscaled rows (P x F).
struct StepStatistics {
  ad::Var delay_spread;  // P x 1, ns
  ad::Var az_dod, az_doa, zn_dod, zn_doa;  // P x 1
  ad::Var gains;         // P x N, dB
};
StepStatistics step_statistics(ad::Var unscaled_rows, std::size_t n_paths);

/// Statistics-aided loss between a true and a generated window (both
/// scaled). Statistics are taken per step on unscaled values, multiplied by
/// their group weight, compared with SmoothL1 and averaged over the steps. Throws
/// std::domain_error naming the statistic on a non-finite intermediate.
ad::Var stats_loss(ad::Var true_scaled, ad::Var gen_scaled, const ScalerSpec& scaler,
                   const LossWeights& weights, double beta);
double stats_loss(const Matrix& true_scaled, const Matrix& gen_scaled, const ScalerSpec& scaler,
                  const LossWeights& weights, double beta);

/// Mean elementwise SmoothL1 in the scaled domain.
ad::Var predictive_loss(ad::Var true_scaled, ad::Var gen_scaled, double beta);
double predictive_loss(const Matrix& true_scaled, const Matrix& gen_scaled, double beta);

// ---------------------------------------------------------------------------
// Optimization

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  AdamW(const ad::ParameterStore& params, AdamWConfig config);

  /// Applies one update from the gradients currently stored in `params`.
  void step(ad::ParameterStore& params, double lr);
  std::size_t steps() const { return t_; }

  void save(ad::Checkpoint& ckpt) const;
  void load(const ad::Checkpoint& ckpt, const ad::ParameterStore& params);

 private:
  AdamWConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t t_ = 0;
};

/// base * decay^(floor(epoch / every)).
double lr_at_epoch(double base, std::size_t epoch, double decay = 0.9, std::size_t every = 10);

enum class LossMode { kStats, kPredictive };

struct TrainConfig {
  std::size_t epochs = 250;
  std::size_t batch_size = 256;
  double lr = 5e-5;
  double lr_decay = 0.9;
  std::size_t lr_decay_every = 10;
  double beta = 1.0;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  AdamWConfig optimizer;
  LossMode mode = LossMode::kStats;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double lr = 0.0;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Mini-batch training loop. Shuffling and dropout draw from (seed, epoch),
/// so a run resumed from a saved state reproduces an uninterrupted one.
class Trainer {
 public:
  Trainer(model::HybridTransformer& model, ScalerSpec scaler, LossWeights weights,
          TrainConfig config);

  /// Loss of one example without touching gradients.
  double example_loss(const WindowedExample& ex);
  /// Mean loss over examples, no dropout, no update.
  double mean_loss(std::span<const WindowedExample> examples);

  /// One pass over `examples`. On a non-finite loss the parameters are reset
  /// to their values at the start of the epoch and DivergenceError is thrown.
  EpochRecord run_epoch(std::span<const WindowedExample> examples);

  /// Runs epochs until config.epochs; `on_epoch` sees each record.
  std::vector<EpochRecord> fit(std::span<const WindowedExample> examples,
                               const std::function<void(const EpochRecord&)>& on_epoch = {});

  std::size_t completed_epochs() const { return epoch_; }
  const TrainConfig& config() const { return config_; }
  const ScalerSpec& scaler() const { return scaler_; }
  const LossWeights& weights() const { return weights_; }

  /// Parameters, optimizer moments, scaler and progress.
  void save_state(ad::Checkpoint& ckpt) const;
  void load_state(const ad::Checkpoint& ckpt);

 private:
  ad::Var loss_on_graph(ad::Graph& g, const WindowedExample& ex, bool training,
                        std::uint64_t dropout_seed);

  model::HybridTransformer& model_;
  ScalerSpec scaler_;
  LossWeights weights_;
  TrainConfig config_;
  AdamW optimizer_;
  std::size_t epoch_ = 0;
};

}  // namespace ddgen::train
