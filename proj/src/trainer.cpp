#include "ddgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "ddgen/ad/ops.hpp"
#include "ddgen/gscm.hpp"

namespace ddgen::train {
namespace {

// Keeps sqrt differentiable when a spread collapses to zero.
constexpr double kSpreadEps = 1e-12;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) { return std::stod(s); }

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined key
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void check_finite(ad::Var v, const char* statistic) {
  for (double x : v.value().data()) {
    if (!std::isfinite(x)) {
      throw std::domain_error(std::string("stats_loss: non-finite ") + statistic);
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Scaler

double ScalerSpec::scale_value(std::size_t f, double x) const {
  if (fixed[f]) return x / static_cast<double>(n_paths);
  return (x - min[f]) / (max[f] - min[f]);
}

double ScalerSpec::unscale_value(std::size_t f, double x) const {
  if (fixed[f]) return x * static_cast<double>(n_paths);
  return x * (max[f] - min[f]) + min[f];
}

Matrix ScalerSpec::scale(const Matrix& rows) const {
  if (rows.cols() != width()) throw ad::ShapeError("ScalerSpec::scale: width mismatch");
  Matrix out(rows.rows(), rows.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r)
    for (std::size_t c = 0; c < rows.cols(); ++c) out(r, c) = scale_value(c, rows(r, c));
  return out;
}

Matrix ScalerSpec::unscale(const Matrix& rows) const {
  if (rows.cols() != width()) throw ad::ShapeError("ScalerSpec::unscale: width mismatch");
  Matrix out(rows.rows(), rows.cols());
  for (std::size_t r = 0; r < rows.rows(); ++r)
    for (std::size_t c = 0; c < rows.cols(); ++c) out(r, c) = unscale_value(c, rows(r, c));
  return out;
}

ad::Var ScalerSpec::unscale(ad::Var rows) const {
  std::vector<double> factor(width()), offset(width());
  for (std::size_t f = 0; f < width(); ++f) {
    factor[f] = fixed[f] ? static_cast<double>(n_paths) : max[f] - min[f];
    offset[f] = fixed[f] ? 0.0 : min[f];
  }
  return ad::affine_cols(rows, factor, offset);
}

void ScalerSpec::save(ad::Checkpoint& ckpt) const {
  ckpt.put("scaler/min", Matrix::row(min));
  ckpt.put("scaler/max", Matrix::row(max));
  Matrix f(1, fixed.size());
  for (std::size_t i = 0; i < fixed.size(); ++i) f[i] = fixed[i] ? 1.0 : 0.0;
  ckpt.put("scaler/fixed", std::move(f));
  ckpt.meta["scaler.n_paths"] = std::to_string(n_paths);
}

ScalerSpec ScalerSpec::load(const ad::Checkpoint& ckpt) {
  ScalerSpec s;
  s.n_paths = std::stoul(ckpt.meta_at("scaler.n_paths"));
  const auto& mn = ckpt.at("scaler/min");
  const auto& mx = ckpt.at("scaler/max");
  const auto& fx = ckpt.at("scaler/fixed");
  s.min.assign(mn.data().begin(), mn.data().end());
  s.max.assign(mx.data().begin(), mx.data().end());
  for (double v : fx.data()) s.fixed.push_back(v != 0.0);
  return s;
}

std::vector<std::size_t> fixed_feature_indices(std::size_t n_paths) {
  std::vector<std::size_t> idx{gscm::col::kZ};
  for (std::size_t n = 0; n < n_paths; ++n) idx.push_back(gscm::col::path(n, gscm::col::kPathId));
  return idx;
}

ScalerSpec fit_scaler(const Matrix& train_rows, std::span<const std::size_t> fixed_indices,
                      std::size_t n_paths) {
  if (train_rows.rows() == 0) throw std::invalid_argument("fit_scaler: empty training set");
  if (n_paths == 0) throw std::invalid_argument("fit_scaler: n_paths must be >= 1");
  const std::size_t width = train_rows.cols();
  ScalerSpec s;
  s.n_paths = n_paths;
  s.min.assign(width, std::numeric_limits<double>::infinity());
  s.max.assign(width, -std::numeric_limits<double>::infinity());
  s.fixed.assign(width, false);
  for (std::size_t f : fixed_indices) {
    if (f >= width) throw std::invalid_argument("fit_scaler: fixed index out of range");
    s.fixed[f] = true;
  }
  for (std::size_t r = 0; r < train_rows.rows(); ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      s.min[c] = std::min(s.min[c], train_rows(r, c));
      s.max[c] = std::max(s.max[c], train_rows(r, c));
    }
  }
  for (std::size_t c = 0; c < width; ++c) {
    if (!s.fixed[c] && !(s.max[c] > s.min[c])) {
      throw std::invalid_argument("fit_scaler: feature " + std::to_string(c) +
                                  " is constant over the training set");
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Windowing

std::vector<WindowedExample> make_windows(const Matrix& trajectory, std::size_t lag,
                                          std::size_t window, std::size_t stride,
                                          std::size_t trajectory_id, std::size_t row_offset) {
  if (lag == 0 || window == 0) throw std::invalid_argument("make_windows: L and P must be >= 1");
  if (stride == 0) throw std::invalid_argument("make_windows: stride must be >= 1");
  std::vector<WindowedExample> out;
  const std::size_t span = lag + window;
  if (trajectory.rows() < span) return out;
  const std::size_t cols = trajectory.cols();
  for (std::size_t s = 0; s + span <= trajectory.rows(); s += stride) {
    WindowedExample ex;
    ex.history = Matrix(lag, cols);
    ex.target = Matrix(window, cols);
    const auto src = trajectory.data();
    std::copy_n(src.begin() + s * cols, lag * cols, ex.history.data().begin());
    std::copy_n(src.begin() + (s + lag) * cols, window * cols, ex.target.data().begin());
    ex.trajectory = trajectory_id;
    ex.start = row_offset + s;
    out.push_back(std::move(ex));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

double smooth_l1(double y, double yhat, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("smooth_l1: beta must be positive");
  const double d = std::abs(y - yhat);
  return d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
}

LossWeights calibrate_weights(std::span<const chanstats::StatBundle> stats, double max_weight) {
  if (stats.empty()) throw std::invalid_argument("calibrate_weights: no statistics");
  double delay = 0.0, az = 0.0, zn = 0.0, gain = 0.0;
  std::size_t gain_count = 0;
  for (const auto& b : stats) {
    delay += std::abs(b.delay_spread);
    az += std::abs(b.az_dod_spread) + std::abs(b.az_doa_spread);
    zn += std::abs(b.zn_dod_spread) + std::abs(b.zn_doa_spread);
    for (double g : b.gains_db) gain += std::abs(g);
    gain_count += b.gains_db.size();
  }
  const double n = static_cast<double>(stats.size());
  auto reciprocal = [max_weight](double mean) {
    return mean > 0.0 ? std::min(max_weight, 1.0 / mean) : max_weight;
  };
  LossWeights w;
  w.delay = reciprocal(delay / n);
  w.azimuth = reciprocal(az / (2.0 * n));
  w.zenith = reciprocal(zn / (2.0 * n));
  w.gain = reciprocal(gain_count ? gain / static_cast<double>(gain_count) : 0.0);
  return w;
}

std::vector<chanstats::StatBundle> loss_unit_stats(const Matrix& unscaled_rows,
                                                   std::size_t n_paths) {
  std::vector<chanstats::StatBundle> out;
  out.reserve(unscaled_rows.rows());
  for (std::size_t r = 0; r < unscaled_rows.rows(); ++r) {
    auto b = chanstats::sample_stats(
        gscm::ChannelSample::from_features(unscaled_rows.row_span(r), n_paths));
    b.delay_spread *= 1e9;
    out.push_back(std::move(b));
  }
  return out;
}

StepStatistics step_statistics(ad::Var rows, std::size_t n_paths) {
  using namespace gscm::col;
  auto columns = [n_paths](std::size_t field) {
    std::vector<std::size_t> idx(n_paths);
    for (std::size_t n = 0; n < n_paths; ++n) idx[n] = path(n, field);
    return idx;
  };
  StepStatistics s;
  s.gains = ad::gather_cols(rows, columns(kGain));
  // 10^(g/10) normalized over paths is a softmax of g * ln(10) / 10.
  ad::Var w = ad::softmax_rows(ad::scale(s.gains, std::numbers::ln10 / 10.0));

  ad::Var delays = ad::gather_cols(rows, columns(kDelay));
  ad::Var mean_delay = ad::row_sum(ad::mul(w, delays));
  ad::Var delay_var = ad::row_sum(ad::mul(w, ad::square(ad::sub_col(delays, mean_delay))));
  s.delay_spread = ad::sqrt(ad::add_scalar(delay_var, kSpreadEps));

  auto angular = [&](std::size_t field) {
    ad::Var a = ad::scale(ad::gather_cols(rows, columns(field)), std::numbers::pi / 180.0);
    ad::Var c = ad::cos(a);
    ad::Var sn = ad::sin(a);
    ad::Var mc = ad::row_sum(ad::mul(w, c));
    ad::Var ms = ad::row_sum(ad::mul(w, sn));
    ad::Var dist = ad::add(ad::square(ad::sub_col(c, mc)), ad::square(ad::sub_col(sn, ms)));
    return ad::sqrt(ad::add_scalar(ad::row_sum(ad::mul(w, dist)), kSpreadEps));
  };
  s.az_dod = angular(kAzDod);
  s.az_doa = angular(kAzDoa);
  s.zn_dod = angular(kZnDod);
  s.zn_doa = angular(kZnDoa);
  return s;
}

ad::Var stats_loss(ad::Var true_scaled, ad::Var gen_scaled, const ScalerSpec& scaler,
                   const LossWeights& weights, double beta) {
  if (!true_scaled.value().same_shape(gen_scaled.value())) {
    throw ad::ShapeError("stats_loss: window shapes differ " +
                         true_scaled.value().shape_string() + " vs " +
                         gen_scaled.value().shape_string());
  }
  const std::size_t n = scaler.n_paths;
  const StepStatistics t = step_statistics(scaler.unscale(true_scaled), n);
  const StepStatistics g = step_statistics(scaler.unscale(gen_scaled), n);
  check_finite(g.gains, "gains");
  check_finite(g.delay_spread, "delay spread");
  check_finite(g.az_dod, "azimuth DoD spread");
  check_finite(g.az_doa, "azimuth DoA spread");
  check_finite(g.zn_dod, "zenith DoD spread");
  check_finite(g.zn_doa, "zenith DoA spread");

  // SmoothL1 acts on alpha-normalized statistics, so beta means the same
  // relative tolerance for every group.
  auto term = [beta](ad::Var a, ad::Var b, double alpha) {
    return ad::mean(ad::smooth_l1(ad::scale(a, alpha), ad::scale(b, alpha), beta));
  };
  ad::Var loss = term(t.delay_spread, g.delay_spread, weights.delay);
  loss = ad::add(loss, ad::add(term(t.az_dod, g.az_dod, weights.azimuth),
                               term(t.az_doa, g.az_doa, weights.azimuth)));
  loss = ad::add(loss, ad::add(term(t.zn_dod, g.zn_dod, weights.zenith),
                               term(t.zn_doa, g.zn_doa, weights.zenith)));
  loss = ad::add(loss, term(t.gains, g.gains, weights.gain));
  return loss;
}

double stats_loss(const Matrix& true_scaled, const Matrix& gen_scaled, const ScalerSpec& scaler,
                  const LossWeights& weights, double beta) {
  ad::Graph g;
  return stats_loss(g.constant(true_scaled), g.constant(gen_scaled), scaler, weights, beta)
      .value()[0];
}

ad::Var predictive_loss(ad::Var true_scaled, ad::Var gen_scaled, double beta) {
  return ad::mean(ad::smooth_l1(true_scaled, gen_scaled, beta));
}

double predictive_loss(const Matrix& true_scaled, const Matrix& gen_scaled, double beta) {
  ad::Graph g;
  return predictive_loss(g.constant(true_scaled), g.constant(gen_scaled), beta).value()[0];
}

// ---------------------------------------------------------------------------
// Optimizer

AdamW::AdamW(const ad::ParameterStore& params, AdamWConfig config) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.value.rows(), p.value.cols());
    v_.emplace_back(p.value.rows(), p.value.cols());
  }
}

void AdamW::step(ad::ParameterStore& params, double lr) {
  if (params.size() != m_.size()) throw std::logic_error("AdamW: parameter set changed");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = params[i];
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double grad = p.grad[k];
      m[k] = b1 * m[k] + (1.0 - b1) * grad;
      v[k] = b2 * v[k] + (1.0 - b2) * grad * grad;
      const double m_hat = m[k] / bias1;
      const double v_hat = v[k] / bias2;
      p.value[k] = p.value[k] * decay - lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void AdamW::save(ad::Checkpoint& ckpt) const {
  ckpt.meta["adam.t"] = std::to_string(t_);
  for (std::size_t i = 0; i < m_.size(); ++i) {
    ckpt.put("adam.m/" + std::to_string(i), m_[i]);
    ckpt.put("adam.v/" + std::to_string(i), v_[i]);
  }
}

void AdamW::load(const ad::Checkpoint& ckpt, const ad::ParameterStore& params) {
  t_ = std::stoul(ckpt.meta_at("adam.t"));
  m_.clear();
  v_.clear();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& m = ckpt.at("adam.m/" + std::to_string(i));
    const Matrix& v = ckpt.at("adam.v/" + std::to_string(i));
    if (!m.same_shape(params[i].value) || !v.same_shape(params[i].value)) {
      throw ad::CheckpointError("AdamW state does not match parameter " + params[i].name);
    }
    m_.push_back(m);
    v_.push_back(v);
  }
}

double lr_at_epoch(double base, std::size_t epoch, double decay, std::size_t every) {
  if (every == 0) return base;
  return base * std::pow(decay, static_cast<double>(epoch / every));
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(model::HybridTransformer& model, ScalerSpec scaler, LossWeights weights,
                 TrainConfig config)
    : model_(model),
      scaler_(std::move(scaler)),
      weights_(weights),
      config_(config),
      optimizer_(model.params(), config.optimizer) {
  if (config_.batch_size == 0) throw std::invalid_argument("Trainer: batch_size must be >= 1");
  if (scaler_.width() != model_.config().feature_dim()) {
    throw std::invalid_argument("Trainer: scaler width does not match the model");
  }
}

ad::Var Trainer::loss_on_graph(ad::Graph& g, const WindowedExample& ex, bool training,
                               std::uint64_t dropout_seed) {
  model::ForwardOptions opts;
  opts.training = training;
  opts.dropout_seed = dropout_seed;
  ad::Var gen = model_.forward(g, g.constant(ex.history), opts);
  ad::Var truth = g.constant(ex.target);
  if (config_.mode == LossMode::kStats) {
    return stats_loss(truth, gen, scaler_, weights_, config_.beta);
  }
  return predictive_loss(truth, gen, config_.beta);
}

double Trainer::example_loss(const WindowedExample& ex) {
  ad::Graph g;
  return loss_on_graph(g, ex, false, 0).value()[0];
}

double Trainer::mean_loss(std::span<const WindowedExample> examples) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) total += example_loss(ex);
  return total / static_cast<double>(examples.size());
}

EpochRecord Trainer::run_epoch(std::span<const WindowedExample> examples) {
  if (examples.empty()) throw std::invalid_argument("Trainer::run_epoch: no examples");
  const std::size_t epoch = epoch_;
  const double lr = lr_at_epoch(config_.lr, epoch, config_.lr_decay, config_.lr_decay_every);

  std::vector<Matrix> snapshot;
  snapshot.reserve(model_.params().size());
  for (const auto& p : model_.params()) snapshot.push_back(p.value);

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix(config_.seed, epoch));
  std::shuffle(order.begin(), order.end(), rng);

  ad::ParameterStore& params = model_.params();
  double total = 0.0;
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    const double inv_batch = 1.0 / static_cast<double>(end - begin);
    params.zero_grad();
    for (std::size_t i = begin; i < end; ++i) {
      auto diverge = [&](const std::string& why) {
        for (std::size_t k = 0; k < params.size(); ++k) params[k].value = snapshot[k];
        params.zero_grad();
        return DivergenceError(why + " in epoch " + std::to_string(epoch + 1), epoch + 1);
      };
      ad::Graph g;
      ad::Var loss;
      try {
        loss = loss_on_graph(g, examples[order[i]], true, mix(mix(config_.seed, epoch), i));
      } catch (const std::domain_error& e) {
        throw diverge(e.what());
      }
      const double value = loss.value()[0];
      if (!std::isfinite(value)) throw diverge("non-finite training loss");
      total += value;
      g.backward(loss, Matrix(1, 1, inv_batch));
    }
    if (config_.grad_clip > 0.0) {
      double norm2 = 0.0;
      for (const auto& p : params)
        for (double gv : p.grad.data()) norm2 += gv * gv;
      const double norm = std::sqrt(norm2);
      if (norm > config_.grad_clip) {
        const double s = config_.grad_clip / norm;
        for (auto& p : params)
          for (double& gv : p.grad.data()) gv *= s;
      }
    }
    optimizer_.step(params, lr);
  }
  ++epoch_;
  return EpochRecord{epoch_, total / static_cast<double>(examples.size()), lr};
}

std::vector<EpochRecord> Trainer::fit(std::span<const WindowedExample> examples,
                                      const std::function<void(const EpochRecord&)>& on_epoch) {
  std::vector<EpochRecord> trace;
  while (epoch_ < config_.epochs) {
    trace.push_back(run_epoch(examples));
    if (on_epoch) on_epoch(trace.back());
  }
  return trace;
}

void Trainer::save_state(ad::Checkpoint& ckpt) const {
  ad::store_parameters(ckpt, model_.params());
  optimizer_.save(ckpt);
  scaler_.save(ckpt);
  ckpt.meta["train.epoch"] = std::to_string(epoch_);
  ckpt.meta["loss.alpha_delay"] = format_double(weights_.delay);
  ckpt.meta["loss.alpha_azimuth"] = format_double(weights_.azimuth);
  ckpt.meta["loss.alpha_zenith"] = format_double(weights_.zenith);
  ckpt.meta["loss.alpha_gain"] = format_double(weights_.gain);
}

void Trainer::load_state(const ad::Checkpoint& ckpt) {
  ad::restore_parameters(ckpt, model_.params());
  optimizer_.load(ckpt, model_.params());
  scaler_ = ScalerSpec::load(ckpt);
  epoch_ = std::stoul(ckpt.meta_at("train.epoch"));
  weights_.delay = parse_double(ckpt.meta_at("loss.alpha_delay"));
  weights_.azimuth = parse_double(ckpt.meta_at("loss.alpha_azimuth"));
  weights_.zenith = parse_double(ckpt.meta_at("loss.alpha_zenith"));
  weights_.gain = parse_double(ckpt.meta_at("loss.alpha_gain"));
}

}  // namespace ddgen::train
