#include "ddgen/pipeline.hpp"

#include <stdexcept>

#include "ddgen/gscm.hpp"

namespace ddgen {
namespace {

ad::Matrix slice_rows(const ad::Matrix& m, std::size_t begin, std::size_t end) {
  ad::Matrix out(end - begin, m.cols());
  const auto src = m.data();
  std::copy(src.begin() + begin * m.cols(), src.begin() + end * m.cols(), out.data().begin());
  return out;
}

void put_model_meta(ad::Checkpoint& ckpt, const model::ModelConfig& m) {
  ckpt.meta["model.d_model"] = std::to_string(m.d_model);
  ckpt.meta["model.heads"] = std::to_string(m.heads);
  ckpt.meta["model.layers"] = std::to_string(m.layers);
  ckpt.meta["model.ff_dim"] = std::to_string(m.ff_dim);
  ckpt.meta["model.low_rank"] = std::to_string(m.low_rank);
  ckpt.meta["model.bilstm_hidden"] = std::to_string(m.bilstm_hidden);
  ckpt.meta["model.lag"] = std::to_string(m.lag);
  ckpt.meta["model.window"] = std::to_string(m.window);
  ckpt.meta["model.n_paths"] = std::to_string(m.n_paths);
  ckpt.meta["model.dropout"] = std::to_string(m.dropout);
}

model::ModelConfig get_model_meta(const ad::Checkpoint& ckpt) {
  auto u = [&](const char* k) { return std::stoull(ckpt.meta_at(k)); };
  model::ModelConfig m;
  m.d_model = u("model.d_model");
  m.heads = u("model.heads");
  m.layers = u("model.layers");
  m.ff_dim = u("model.ff_dim");
  m.low_rank = u("model.low_rank");
  m.bilstm_hidden = u("model.bilstm_hidden");
  m.lag = u("model.lag");
  m.window = u("model.window");
  m.n_paths = u("model.n_paths");
  m.dropout = std::stod(ckpt.meta_at("model.dropout"));
  return m;
}

}  // namespace

model::ModelConfig model_config(const RunConfig& config, std::size_t n_paths) {
  model::ModelConfig m = config.model;
  m.n_paths = n_paths;
  return m;
}

PreparedData prepare_data(const RunConfig& config, const Dataset& ds) {
  PreparedData d;
  d.header = ds.header;
  d.rows = ds.rows;
  const std::size_t n = ds.header.n_paths;
  d.train_end =
      train_end_row(ds.rows.rows(), ds.header.trajectory_steps, config.train_fraction);
  if (d.train_end == 0) throw std::invalid_argument("dataset has no training rows");

  const ad::Matrix train_rows = slice_rows(ds.rows, 0, d.train_end);
  const auto fixed = train::fixed_feature_indices(n);
  d.scaler = train::fit_scaler(train_rows, fixed, n);
  d.scaled = d.scaler.scale(ds.rows);
  d.weights = train::calibrate_weights(train::loss_unit_stats(train_rows, n),
                                       config.max_loss_weight);

  const std::size_t lag = config.model.lag, window = config.model.window;
  const auto ranges = trajectory_ranges(ds.rows.rows(), ds.header.trajectory_steps);
  for (std::size_t k = 0; k < ranges.size(); ++k) {
    // a lone trajectory is cut at train_end; otherwise train_end is a boundary
    const RowRange parts[2] = {{ranges[k].begin, std::min(ranges[k].end, d.train_end)},
                               {std::max(ranges[k].begin, d.train_end), ranges[k].end}};
    for (int p = 0; p < 2; ++p) {
      if (parts[p].end <= parts[p].begin) continue;
      auto w = train::make_windows(slice_rows(d.scaled, parts[p].begin, parts[p].end), lag, window,
                                   p == 0 ? config.train_stride : config.eval_stride, k,
                                   parts[p].begin);
      auto& dst = p == 0 ? d.train_windows : d.eval_windows;
      dst.insert(dst.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
  }
  return d;
}

std::unique_ptr<model::HybridTransformer> untrained_model(const RunConfig& config,
                                                          std::size_t n_paths,
                                                          std::uint64_t seed) {
  return std::make_unique<model::HybridTransformer>(model_config(config, n_paths),
                                                    derive_seed(seed, 10));
}

TrainResult train_model(const RunConfig& config, const PreparedData& data,
                        const TrainRequest& request) {
  if (data.train_windows.empty()) {
    throw std::invalid_argument("training segment is shorter than lag + window");
  }
  const std::size_t n = data.header.n_paths;
  auto model = untrained_model(config, n, request.seed);
  train::TrainConfig tc = config.training;
  tc.mode = request.mode;
  tc.seed = derive_seed(request.seed, 11);
  if (request.epochs) tc.epochs = request.epochs;

  train::Trainer trainer(*model, data.scaler, data.weights, tc);
  if (request.resume) trainer.load_state(*request.resume);

  auto snapshot = [&] {
    ad::Checkpoint ckpt;
    trainer.save_state(ckpt);
    put_model_meta(ckpt, model->config());
    ckpt.meta["run.seed"] = std::to_string(request.seed);
    ckpt.meta["run.mode"] = request.mode == train::LossMode::kStats ? "gen" : "pred";
    return ckpt;
  };

  TrainResult result;
  try {
    while (trainer.completed_epochs() < tc.epochs) {
      result.trace.push_back(trainer.run_epoch(data.train_windows));
      if (request.on_epoch) request.on_epoch(result.trace.back());
      const std::size_t done = trainer.completed_epochs();
      if (request.checkpoint_every && request.on_checkpoint && done % request.checkpoint_every == 0 &&
          done < tc.epochs) {
        request.on_checkpoint(snapshot(), done);
      }
    }
  } catch (const train::DivergenceError& e) {
    result.diverged = true;
    result.error = e.what();
  }
  result.checkpoint = snapshot();
  return result;
}

LoadedModel load_model(const ad::Checkpoint& ckpt) {
  LoadedModel out;
  out.model = std::make_unique<model::HybridTransformer>(get_model_meta(ckpt), 0);
  ad::restore_parameters(ckpt, out.model->params());
  out.scaler = train::ScalerSpec::load(ckpt);
  return out;
}

// ---------------------------------------------------------------------------

void PooledStats::add_rows(const ad::Matrix& unscaled_rows, std::size_t n_paths) {
  for (const auto& b : train::loss_unit_stats(unscaled_rows, n_paths)) {
    values[0].push_back(b.delay_spread);
    values[1].push_back(b.az_dod_spread);
    values[2].push_back(b.az_doa_spread);
    values[3].push_back(b.zn_dod_spread);
    values[4].push_back(b.zn_doa_spread);
    values[5].insert(values[5].end(), b.gains_db.begin(), b.gains_db.end());
  }
}

void PooledStats::append(const PooledStats& other) {
  for (std::size_t s = 0; s < kStatCount; ++s) {
    values[s].insert(values[s].end(), other.values[s].begin(), other.values[s].end());
  }
}

std::vector<StatComparison> compare_stats(const PooledStats& truth, const PooledStats& model,
                                          std::size_t cdf_points, double floor_db) {
  std::vector<StatComparison> out;
  for (std::size_t s = 0; s < kStatCount; ++s) {
    const auto grid = chanstats::shared_grid(truth.values[s], model.values[s], cdf_points);
    StatComparison c;
    c.name = kStatNames[s];
    c.truth = chanstats::empirical_cdf(truth.values[s], grid);
    c.model = chanstats::empirical_cdf(model.values[s], grid);
    c.mse_db = chanstats::cdf_mse_db(c.truth, c.model, floor_db);
    out.push_back(std::move(c));
  }
  return out;
}

PooledStats pool_truth(const PreparedData& data) {
  PooledStats p;
  for (const auto& ex : data.eval_windows) {
    p.add_rows(data.scaler.unscale(ex.target), data.header.n_paths);
  }
  return p;
}

PooledStats pool_generated(const PreparedData& data, const Generator& generate) {
  PooledStats p;
  for (const auto& ex : data.eval_windows) {
    if (ex.start < data.train_end) {
      throw std::logic_error("evaluation window starting at row " + std::to_string(ex.start) +
                             " overlaps the training segment");
    }
    p.add_rows(data.scaler.unscale(generate(ex.history)), data.header.n_paths);
  }
  return p;
}

Generator model_generator(model::HybridTransformer& model) {
  return [&model](const ad::Matrix& history) { return model.generate(history); };
}

}  // namespace ddgen
