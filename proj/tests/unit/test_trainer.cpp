#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ddgen/ad/gradcheck.hpp"
#include "ddgen/ad/ops.hpp"
#include "ddgen/gscm.hpp"
#include "ddgen/pipeline.hpp"
#include "ddgen/trainer.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace ddgen;
using namespace ddgen::train;
using ad::Graph;
using ad::Matrix;
using testing::random_matrix;

namespace {

Matrix gscm_rows(std::size_t n_paths, std::size_t steps, std::uint64_t seed) {
  const auto field = gscm::place_scatterers(n_paths, gscm::Bounds{}, seed);
  gscm::TrajectoryConfig cfg;
  cfg.steps = steps;
  cfg.seed = seed;
  const auto traj = gscm::gen_trajectory(cfg, gscm::heading_angle_set(50));
  Matrix rows(steps, gscm::feature_dim(n_paths));
  for (std::size_t t = 0; t < steps; ++t) {
    const auto row = gscm::synthesize_sample(cfg.tx, traj[t], field, 2.4).flatten();
    std::copy(row.begin(), row.end(), rows.row_span(t).begin());
  }
  return rows;
}

RunConfig toy_config() {
  RunConfig c = desk_preset();
  for (auto [k, v] : std::initializer_list<std::pair<const char*, const char*>>{
           {"n_paths", "2"},   {"steps", "400"},     {"trajectory_steps", "100"},
           {"d_model", "8"},   {"heads", "2"},       {"layers", "1"},
           {"ff_dim", "8"},    {"low_rank", "3"},    {"bilstm_hidden", "3"},
           {"lag", "6"},       {"window", "4"},      {"batch_size", "8"},
           {"epochs", "3"},    {"train_stride", "6"}, {"eval_stride", "6"}}) {
    c.set(k, v);
  }
  c.validate();
  return c;
}

// Per-row statistics compared with SmoothL1, written out from the definitions.
double manual_stats_loss(const Matrix& truth, const Matrix& gen, std::size_t n,
                         const LossWeights& w, double beta) {
  const auto a = loss_unit_stats(truth, n);
  const auto b = loss_unit_stats(gen, n);
  auto l = [beta](double x, double y, double alpha) {
    return smooth_l1(alpha * x, alpha * y, beta);
  };
  double ds = 0, az = 0, zn = 0, gain = 0;
  for (std::size_t p = 0; p < a.size(); ++p) {
    ds += l(a[p].delay_spread, b[p].delay_spread, w.delay);
    az += l(a[p].az_dod_spread, b[p].az_dod_spread, w.azimuth) +
          l(a[p].az_doa_spread, b[p].az_doa_spread, w.azimuth);
    zn += l(a[p].zn_dod_spread, b[p].zn_dod_spread, w.zenith) +
          l(a[p].zn_doa_spread, b[p].zn_doa_spread, w.zenith);
    for (std::size_t k = 0; k < n; ++k) gain += l(a[p].gains_db[k], b[p].gains_db[k], w.gain);
  }
  const double P = static_cast<double>(a.size());
  return (ds + az + zn) / P + gain / (P * static_cast<double>(n));
}

}  // namespace

TEST_CASE("scaler") {
  Matrix rows{{0, 0, 1.5, -90, 1, 100, 10, -20, 5, 30, 40},
              {10, 4, 1.5, -70, 1, 300, 30, 20, 15, 50, 60}};
  const auto fixed = fixed_feature_indices(1);
  CHECK(fixed == std::vector<std::size_t>{2, 4});
  const ScalerSpec s = fit_scaler(rows, fixed, 1);
  CHECK(s.scale_value(0, 5.0) == 0.5);
  CHECK(s.scale_value(5, 200.0) == 0.5);
  CHECK(s.scale_value(4, 1.0) == 1.0);  // path id / N
  CHECK(s.scale_value(2, 1.5) == 1.5);

  const Matrix scaled = s.scale(rows);
  for (std::size_t c = 0; c < rows.cols(); ++c) {
    if (c == 2 || c == 4) continue;
    CHECK(scaled(0, c) == 0.0);
    CHECK(scaled(1, c) == 1.0);
  }
  CHECK(ad::max_abs_diff(s.unscale(scaled), rows) < 1e-12);
  CHECK(s.scale_value(3, -80.0) < s.scale_value(3, -75.0));

  Graph g;
  CHECK(ad::max_abs_diff(s.unscale(g.constant(scaled)).value(), rows) < 1e-12);

  ad::Checkpoint ck;
  s.save(ck);
  const ScalerSpec back = ScalerSpec::load(ck);
  CHECK(back.min == s.min);
  CHECK(back.max == s.max);
  CHECK(back.fixed == s.fixed);
  CHECK(back.n_paths == 1);

  rows(1, 7) = rows(0, 7);
  CHECK_THROWS_WITH_AS(fit_scaler(rows, fixed, 1), doctest::Contains("7"),
                       std::invalid_argument);
  CHECK_THROWS_AS(fit_scaler(Matrix(0, 11), fixed, 1), std::invalid_argument);
}

TEST_CASE("scaler over a generated trajectory") {
  const Matrix rows = gscm_rows(3, 10000, 4);
  const ScalerSpec s = fit_scaler(rows, fixed_feature_indices(3), 3);
  const Matrix scaled = s.scale(rows);
  for (std::size_t c = 0; c < rows.cols(); ++c) {
    if (s.fixed[c]) continue;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      CHECK(scaled(r, c) >= 0.0);
      CHECK(scaled(r, c) <= 1.0);
    }
  }
  CHECK(ad::max_abs_diff(s.unscale(scaled), rows) < 1e-9);
  CHECK(scaled(0, gscm::col::path(2, gscm::col::kPathId)) == 1.0);
}

TEST_CASE("make_windows") {
  const Matrix traj = random_matrix(10, 3, 1);
  auto one = make_windows(traj, 6, 4, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].history.rows() == 6);
  CHECK(one[0].target.rows() == 4);
  CHECK(one[0].target(0, 1) == traj(6, 1));
  CHECK(make_windows(random_matrix(19, 3, 1), 6, 4, 1).size() == 10);
  CHECK(make_windows(random_matrix(19, 3, 1), 6, 4, 3).size() == 4);
  CHECK(make_windows(random_matrix(9, 3, 1), 6, 4, 1).empty());
  auto offset = make_windows(random_matrix(12, 3, 1), 6, 4, 2, 7, 100);
  CHECK(offset.back().start == 102);
  CHECK(offset.back().trajectory == 7);
  CHECK_THROWS_AS(make_windows(traj, 0, 4, 1), std::invalid_argument);
  CHECK_THROWS_AS(make_windows(traj, 6, 4, 0), std::invalid_argument);
}

TEST_CASE("smooth_l1") {
  CHECK(smooth_l1(0.0, 0.5, 1.0) == 0.125);
  CHECK(smooth_l1(0.0, 3.0, 1.0) == 2.5);
  CHECK(smooth_l1(2.0, 2.0, 1.0) == 0.0);
  CHECK(smooth_l1(1.0, 0.0, 1.0) == 0.5);
  CHECK(smooth_l1(0.0, 0.1, 0.2) == doctest::Approx(0.025));
}

TEST_CASE("calibrate_weights") {
  std::vector<chanstats::StatBundle> stats(3);
  for (auto& s : stats) {
    s.delay_spread = 500.0;
    s.az_dod_spread = 0.2;
    s.az_doa_spread = 0.6;
    s.zn_dod_spread = 0.1;
    s.zn_doa_spread = 0.1;
    s.gains_db = {-100.0, -120.0};
  }
  const auto w = calibrate_weights(stats);
  CHECK(w.delay == doctest::Approx(1.0 / 500.0));
  CHECK(w.azimuth == doctest::Approx(1.0 / 0.4));
  CHECK(w.zenith == doctest::Approx(10.0));
  CHECK(w.gain == doctest::Approx(1.0 / 110.0));
  for (auto& s : stats) s.zn_dod_spread = s.zn_doa_spread = 0.0;
  CHECK(calibrate_weights(stats, 1e6).zenith == 1e6);

  // weighted means land near 1 on generated data
  const Matrix rows = gscm_rows(4, 2000, 8);
  const auto real = loss_unit_stats(rows, 4);
  const auto rw = calibrate_weights(real);
  double ds = 0.0;
  for (const auto& s : real) ds += s.delay_spread;
  ds /= static_cast<double>(real.size());
  CHECK(rw.delay * ds >= 0.5);
  CHECK(rw.delay * ds <= 2.0);
  CHECK(real[0].delay_spread ==
        doctest::Approx(chanstats::sample_stats(
                            gscm::ChannelSample::from_features(rows.row_span(0), 4))
                            .delay_spread *
                        1e9));
}

TEST_CASE("stats_loss") {
  const std::size_t n = 3;
  const Matrix rows = gscm_rows(n, 300, 12);
  const ScalerSpec s = fit_scaler(rows, fixed_feature_indices(n), n);
  const Matrix scaled = s.scale(rows);
  const LossWeights w = calibrate_weights(loss_unit_stats(rows, n));

  Matrix truth(5, rows.cols()), gen(5, rows.cols());
  for (std::size_t p = 0; p < 5; ++p)
    for (std::size_t c = 0; c < rows.cols(); ++c) {
      truth(p, c) = scaled(10 + p, c);
      gen(p, c) = scaled(200 + 7 * p, c);
    }

  CHECK(stats_loss(truth, truth, s, w, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  const double value = stats_loss(truth, gen, s, w, 1.0);
  CHECK(value > 0.0);
  CHECK(value == doctest::Approx(manual_stats_loss(s.unscale(truth), s.unscale(gen), n, w, 1.0))
                     .epsilon(1e-9));

  // only the gain term, one path off by 0.5 dB in one step of one
  LossWeights gain_only{0.0, 0.0, 0.0, 1.0};
  Matrix one_step(1, rows.cols());
  for (std::size_t c = 0; c < rows.cols(); ++c) one_step(0, c) = truth(0, c);
  Matrix shifted = s.unscale(one_step);
  shifted(0, gscm::col::path(0, gscm::col::kGain)) += 0.5;
  CHECK(stats_loss(one_step, s.scale(shifted), s, gain_only, 1.0) ==
        doctest::Approx(0.125 / 3.0).epsilon(1e-9));

  // delay spreads 0.5 apart in weighted units land in the quadratic branch
  const auto ts = loss_unit_stats(s.unscale(truth), n);
  const auto gs = loss_unit_stats(s.unscale(gen), n);
  LossWeights delay_only{0.5 / std::abs(ts[0].delay_spread - gs[0].delay_spread), 0.0, 0.0, 0.0};
  Matrix t0(1, rows.cols()), g0(1, rows.cols());
  for (std::size_t c = 0; c < rows.cols(); ++c) {
    t0(0, c) = truth(0, c);
    g0(0, c) = gen(0, c);
  }
  CHECK(stats_loss(t0, g0, s, delay_only, 1.0) == doctest::Approx(0.125).epsilon(1e-6));

  // reordering the paths leaves the spread terms unchanged
  LossWeights spreads_only = w;
  spreads_only.gain = 0.0;
  Matrix permuted = s.unscale(gen);
  for (std::size_t p = 0; p < permuted.rows(); ++p)
    for (std::size_t f = 0; f < 7; ++f) {
      if (f == gscm::col::kPathId) continue;
      std::swap(permuted(p, gscm::col::path(0, f)), permuted(p, gscm::col::path(2, f)));
    }
  CHECK(stats_loss(truth, s.scale(permuted), s, spreads_only, 1.0) ==
        doctest::Approx(stats_loss(truth, gen, s, spreads_only, 1.0)).epsilon(1e-9));

  CHECK_THROWS_AS(stats_loss(truth, one_step, s, w, 1.0), ad::ShapeError);
  Matrix broken = gen;
  broken(0, gscm::col::path(1, gscm::col::kGain)) = std::nan("");
  CHECK_THROWS_AS(stats_loss(truth, broken, s, w, 1.0), std::domain_error);
}

TEST_CASE("stats_loss is non-negative on random windows") {
  const std::size_t n = 2;
  const Matrix rows = gscm_rows(n, 200, 2);
  const ScalerSpec s = fit_scaler(rows, fixed_feature_indices(n), n);
  const LossWeights w = calibrate_weights(loss_unit_stats(rows, n));
  for (int trial = 0; trial < 20; ++trial) {
    Matrix a = random_matrix(4, rows.cols(), 100 + trial, 0.0, 1.0);
    Matrix b = random_matrix(4, rows.cols(), 200 + trial, 0.0, 1.0);
    CHECK(stats_loss(a, b, s, w, 1.0) >= 0.0);
  }
}

TEST_CASE("grad_check: stats_loss on a two-path toy") {
  const std::size_t n = 2;
  const Matrix rows = gscm_rows(n, 200, 21);
  const ScalerSpec s = fit_scaler(rows, fixed_feature_indices(n), n);
  const LossWeights w = calibrate_weights(loss_unit_stats(rows, n));
  const Matrix truth = s.scale(gscm_rows(n, 3, 22));
  auto block = [&](Graph& g, ad::Var x) { return stats_loss(g.constant(truth), x, s, w, 1.0); };
  const Matrix x = random_matrix(3, rows.cols(), 23, 0.1, 0.9);
  CHECK(ad::grad_check(block, x, nullptr).max_rel_error < 1e-4);
}

TEST_CASE("predictive_loss") {
  Matrix a(2, 3), b(2, 3);
  b(0, 0) = 3.0;  // 2.5
  b(1, 2) = 1.0;  // 0.5
  CHECK(predictive_loss(a, b, 1.0) == doctest::Approx(3.0 / 6.0));
  b = a;
  b(0, 0) = 0.5;
  b(1, 1) = -0.5;
  b(1, 2) = 2.0;
  CHECK(predictive_loss(a, b, 1.0) == doctest::Approx((0.125 + 0.125 + 1.5) / 6.0));
  Graph g;
  CHECK(predictive_loss(g.constant(a), g.constant(b), 1.0).value()[0] ==
        predictive_loss(a, b, 1.0));
}

TEST_CASE("AdamW") {
  ad::ParameterStore ps;
  ps.add("w", Matrix{{1.0, -2.0}, {0.5, 4.0}});
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamW opt(ps, cfg);
  opt.step(ps, 0.01);  // zero gradient: decay only
  const Matrix expect{{1.0 * 0.999, -2.0 * 0.999}, {0.5 * 0.999, 4.0 * 0.999}};
  CHECK(ps.get("w").value == expect);
  CHECK(opt.steps() == 1);

  // first step with a gradient moves each weight by about lr against its sign
  ad::ParameterStore q;
  q.add("w", Matrix{{0.0, 0.0}});
  AdamWConfig plain;
  plain.weight_decay = 0.0;
  AdamW o2(q, plain);
  q.get("w").grad = Matrix{{3.0, -0.2}};
  o2.step(q, 0.01);
  CHECK(q.get("w").value(0, 0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(q.get("w").value(0, 1) == doctest::Approx(0.01).epsilon(1e-6));

  ad::Checkpoint ck;
  o2.save(ck);
  AdamW o3(q, plain);
  o3.load(ck, q);
  CHECK(o3.steps() == 1);
}

TEST_CASE("lr_at_epoch") {
  CHECK(lr_at_epoch(5e-5, 0) == 5e-5);
  CHECK(lr_at_epoch(5e-5, 9) == 5e-5);
  CHECK(lr_at_epoch(5e-5, 10) == doctest::Approx(4.5e-5));
  CHECK(lr_at_epoch(1.0, 25, 0.5, 10) == 0.25);
}

TEST_CASE("trainer: loss decreases, resume matches, divergence restores") {
  const RunConfig cfg = toy_config();
  const Dataset ds = synthesize_dataset(cfg);
  const PreparedData data = prepare_data(cfg, ds);
  REQUIRE(!data.train_windows.empty());
  REQUIRE(!data.eval_windows.empty());

  const auto mc = model_config(cfg, cfg.n_paths);
  TrainConfig tc = cfg.training;
  tc.seed = 5;

  model::HybridTransformer straight(mc, 3);
  Trainer t1(straight, data.scaler, data.weights, tc);
  const auto trace = t1.fit(data.train_windows);
  REQUIRE(trace.size() == 3);
  CHECK(trace.back().mean_loss < trace.front().mean_loss);

  model::HybridTransformer first(mc, 3);
  Trainer t2(first, data.scaler, data.weights, tc);
  t2.run_epoch(data.train_windows);
  t2.run_epoch(data.train_windows);
  ad::Checkpoint ck;
  t2.save_state(ck);

  model::HybridTransformer resumed(mc, 99);
  Trainer t3(resumed, data.scaler, LossWeights{}, tc);
  t3.load_state(ck);
  CHECK(t3.completed_epochs() == 2);
  const auto rec = t3.run_epoch(data.train_windows);
  CHECK(rec.epoch == 3);
  CHECK(std::abs(rec.mean_loss - trace.back().mean_loss) < 1e-6);
  for (std::size_t k = 0; k < straight.params().size(); ++k)
    CHECK(ad::max_abs_diff(straight.params()[k].value, resumed.params()[k].value) < 1e-9);

  // absurd step size: parameters blow up after the first batch
  TrainConfig wild = tc;
  wild.lr = 1e300;
  wild.optimizer.weight_decay = 0.0;
  model::HybridTransformer m(mc, 3);
  std::vector<Matrix> before;
  for (const auto& p : m.params()) before.push_back(p.value);
  Trainer t4(m, data.scaler, data.weights, wild);
  CHECK_THROWS_AS(t4.run_epoch(data.train_windows), DivergenceError);
  for (std::size_t k = 0; k < before.size(); ++k) CHECK(m.params()[k].value == before[k]);
  CHECK(t4.completed_epochs() == 0);
}

TEST_CASE("predictive mode trains on the scaled values") {
  const RunConfig cfg = toy_config();
  const PreparedData data = prepare_data(cfg, synthesize_dataset(cfg));
  TrainConfig tc = cfg.training;
  tc.mode = LossMode::kPredictive;
  tc.epochs = 1;
  model::HybridTransformer m(model_config(cfg, cfg.n_paths), 3);
  Trainer t(m, data.scaler, data.weights, tc);
  const auto& ex = data.train_windows.front();
  const Matrix gen = m.generate(ex.history);
  CHECK(t.example_loss(ex) == doctest::Approx(predictive_loss(ex.target, gen, tc.beta)));
}
