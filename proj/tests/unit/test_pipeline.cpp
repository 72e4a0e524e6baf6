#include <filesystem>
#include <fstream>
#include <sstream>

#include "ddgen/config.hpp"
#include "ddgen/dataset.hpp"
#include "ddgen/pipeline.hpp"
#include "ddgen/report.hpp"
#include "doctest.h"

using namespace ddgen;
namespace fs = std::filesystem;

namespace {

RunConfig small_config() {
  RunConfig c = desk_preset();
  c.set("n_paths", "2");
  c.set("steps", "300");
  c.set("trajectory_steps", "60");
  c.set("lag", "6");
  c.set("window", "4");
  c.set("low_rank", "3");
  c.set("train_stride", "5");
  c.set("eval_stride", "5");
  c.validate();
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ddgen_unit_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("RunConfig set and validate") {
  RunConfig c;
  c.set("window", "40");
  c.set("delta2d", "1.5");
  c.set("mode", "pred");
  CHECK(c.model.window == 40);
  CHECK(c.delta2d == 1.5);
  CHECK(c.training.mode == train::LossMode::kPredictive);
  CHECK_THROWS_AS(c.set("windw", "4"), ConfigError);
  CHECK_THROWS_AS(c.set("window", "four"), ConfigError);
  CHECK_THROWS_AS(c.set("delta2d", "1.5x"), ConfigError);
  CHECK_THROWS_AS(c.set("mode", "both"), ConfigError);

  RunConfig bad;
  bad.train_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = RunConfig{};
  bad.model.heads = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const auto e = desk_preset().entries();
  CHECK(std::is_sorted(e.begin(), e.end()));
  CHECK(std::find(e.begin(), e.end(), std::pair<std::string, std::string>{"n_paths", "5"}) !=
        e.end());
}

TEST_CASE("load_config_file") {
  const fs::path dir = scratch("cfg");
  {
    std::ofstream out(dir / "run.cfg");
    out << "# a comment\n\nwindow = 12   # trailing\nseed=9\n";
  }
  RunConfig c;
  load_config_file(dir / "run.cfg", c);
  CHECK(c.model.window == 12);
  CHECK(c.seed == 9);
  {
    std::ofstream out(dir / "bad.cfg");
    out << "window 12\n";
  }
  CHECK_THROWS_AS(load_config_file(dir / "bad.cfg", c), ConfigError);
  CHECK_THROWS(load_config_file(dir / "missing.cfg", c));
}

TEST_CASE("trajectory_ranges and train_end_row") {
  const auto r = trajectory_ranges(250, 100);
  REQUIRE(r.size() == 3);
  CHECK(r[2].begin == 200);
  CHECK(r[2].end == 250);
  CHECK(trajectory_ranges(250, 0).size() == 1);
  CHECK(train_end_row(1000, 100, 0.8) == 800);
  CHECK(train_end_row(1000, 0, 0.8) == 800);
  CHECK(train_end_row(200, 100, 0.8) == 100);  // one trajectory each side
  CHECK(train_end_row(1000, 100, 0.85) == 800);
}

TEST_CASE("dataset synthesis, format and parse") {
  const RunConfig c = small_config();
  const Dataset ds = synthesize_dataset(c);
  CHECK(ds.rows.rows() == 300);
  CHECK(ds.rows.cols() == 18);
  CHECK(ds.header.trajectory_steps == 60);
  CHECK(ds.header.n_paths == 2);

  const std::string text = format_dataset(ds);
  CHECK(text.rfind("# ddgen-dataset v1", 0) == 0);
  const Dataset back = parse_dataset(text);
  CHECK(back.rows == ds.rows);
  CHECK(back.header.seed == ds.header.seed);
  CHECK(back.header.trajectory_steps == 60);
  CHECK(format_dataset(back) == text);
  CHECK(format_dataset(synthesize_dataset(c)) == text);

  // every trajectory starts at the configured point
  for (const auto& r : trajectory_ranges(300, 60)) {
    CHECK(ds.rows(r.begin, 0) == c.start_x);
    CHECK(ds.rows(r.begin, 1) == c.start_y);
  }

  CHECK_THROWS_AS(parse_dataset("not a dataset\n"), IoError);
  CHECK_THROWS_AS(parse_dataset(text.substr(0, text.size() / 2) + "x,y\n"), IoError);
  CHECK_THROWS_AS(read_dataset("/nonexistent/ddgen.csv"), IoError);
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
}

TEST_CASE("prepare_data keeps the segments apart") {
  const RunConfig c = small_config();
  const PreparedData d = prepare_data(c, synthesize_dataset(c));
  CHECK(d.train_end == 240);
  REQUIRE(!d.eval_windows.empty());
  for (const auto& w : d.train_windows) {
    CHECK(w.start + 10 <= d.train_end);
    CHECK(w.start / 60 == (w.start + 9) / 60);  // inside one trajectory
  }
  for (const auto& w : d.eval_windows) CHECK(w.start >= d.train_end);
  // scaler fitted on training rows only
  double max_x = -1e300;
  for (std::size_t r = 0; r < d.train_end; ++r) max_x = std::max(max_x, d.rows(r, 0));
  CHECK(d.scaler.max[0] == max_x);
  CHECK(d.weights.delay > 0.0);
}

TEST_CASE("evaluation pooling and comparison") {
  const RunConfig c = small_config();
  const PreparedData d = prepare_data(c, synthesize_dataset(c));
  const PooledStats truth = pool_truth(d);
  CHECK(truth.values[0].size() == d.eval_windows.size() * 4);
  CHECK(truth.values[5].size() == d.eval_windows.size() * 4 * 2);

  // a generator that replays the truth matches it exactly
  std::size_t next = 0;
  const PooledStats replay =
      pool_generated(d, [&](const ad::Matrix&) { return d.eval_windows[next++].target; });
  const auto cmp = compare_stats(truth, replay, 64, -120.0);
  REQUIRE(cmp.size() == kStatCount);
  for (const auto& s : cmp) {
    CHECK(s.mse_db == -120.0);
    CHECK(s.truth.grid.size() == 64);
  }

  PreparedData leaky = d;
  leaky.eval_windows.push_back(d.train_windows.front());
  CHECK_THROWS_AS(pool_generated(leaky, [](const ad::Matrix& h) { return h; }), std::logic_error);
}

TEST_CASE("report JSON, CDF export and table") {
  const RunConfig c = small_config();
  const PreparedData d = prepare_data(c, synthesize_dataset(c));
  const PooledStats truth = pool_truth(d);
  auto model = untrained_model(c, 2, 4);
  const PooledStats gen = pool_generated(d, model_generator(*model));

  EvalReport rep;
  rep.label = "gen";
  rep.window = 4;
  rep.lag = 6;
  rep.n_paths = 2;
  rep.delta2d = 1.0;
  rep.cdf_points = 32;
  rep.checkpoints = {"a.ckpt"};
  rep.config = c.entries();
  fill_report(rep, truth, {gen, gen}, 32, -120.0);
  REQUIRE(rep.runs_db.size() == 2);
  CHECK(rep.mse_db[0] == rep.runs_db[0][0]);
  CHECK(rep.mse_db[0] < 0.0);

  const std::string json = report_to_json(rep);
  const EvalReport back = report_from_json(json);
  CHECK(report_to_json(back) == json);
  CHECK(back.mse_db == rep.mse_db);
  CHECK(back.cdfs[2].model.values == rep.cdfs[2].model.values);

  const fs::path dir = scratch("export");
  const auto files = export_cdfs(rep, dir / "a", true);
  CHECK(files.size() == kStatCount * 3);
  export_cdfs(back, dir / "b", false);
  const std::string csv = slurp(dir / "a" / "delay_spread_gen.csv");
  CHECK(csv == slurp(dir / "b" / "delay_spread_gen.csv"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 33);
  CHECK(csv.rfind("grid,value\n", 0) == 0);

  EvalReport other = rep;
  other.label = "pred";
  other.window = 2;
  const auto table = make_table({rep, other});
  const auto first = table.csv.find('\n') + 1;
  CHECK(table.csv.substr(first, 2) == "2,");  // sorted by window first
  CHECK(table.text.find("delay_spread") != std::string::npos);
  CHECK_THROWS(report_from_json("{\"label\": 3}"));
}
