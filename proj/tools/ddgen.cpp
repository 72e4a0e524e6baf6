// ddgen: dataset synthesis, training, evaluation and reporting.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ddgen/ad/checkpoint.hpp"
#include "ddgen/config.hpp"
#include "ddgen/dataset.hpp"
#include "ddgen/pipeline.hpp"
#include "ddgen/report.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace ddgen;

namespace {

enum Exit { kOk = 0, kConfig = 1, kRuntime = 2, kIo = 3 };

struct CommonOptions {
  std::string config_file;
  std::string preset;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> lag, window, steps;
  std::optional<double> delta2d;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_file, "key=value configuration file");
  cmd->add_option("--preset", o.preset, "start from a named preset (desk)");
  cmd->add_option("--set", o.settings, "override one setting, key=value");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--mode", o.mode, "loss: gen (statistics-aided) or pred (SmoothL1)");
  cmd->add_option("--lag", o.lag, "history length L");
  cmd->add_option("--window", o.window, "generation window P");
  cmd->add_option("--delta2d", o.delta2d, "receiver step in meters");
  cmd->add_option("--steps", o.steps, "trajectory length in samples");
  cmd->add_option("--out", o.out, "output path");
}

RunConfig build_config(const CommonOptions& o) {
  RunConfig c;
  if (o.preset == "desk") {
    c = desk_preset();
  } else if (!o.preset.empty()) {
    throw ConfigError("unknown preset '" + o.preset + "'");
  }
  if (!o.config_file.empty()) load_config_file(o.config_file, c);
  for (const auto& s : o.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    c.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) c.seed = *o.seed;
  if (o.mode) c.set("mode", *o.mode);
  if (o.lag) c.model.lag = *o.lag;
  if (o.window) c.model.window = *o.window;
  if (o.steps) c.steps = *o.steps;
  if (o.delta2d) c.delta2d = *o.delta2d;
  c.validate();
  return c;
}

fs::path resolve(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv("DDGEN_OUT_ROOT"); root && *root) path = fs::path(root) / path;
  }
  return path;
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_file(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json config_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : c.entries()) j[k] = v;
  return j;
}

std::string mode_name(train::LossMode m) { return m == train::LossMode::kStats ? "gen" : "pred"; }

// ---------------------------------------------------------------------------

int cmd_gen_dataset(const CommonOptions& o) {
  const RunConfig c = build_config(o);
  const fs::path out = resolve(o.out.empty() ? "dataset.csv" : o.out);
  const Dataset ds = synthesize_dataset(c);
  const std::string text = format_dataset(ds);
  write_file(out, text);
  const std::string digest = fnv1a_hex(text);

  nlohmann::json m;
  m["command"] = "gen-dataset";
  m["config"] = config_json(c);
  m["seeds"] = {c.seed};
  m["dataset"] = out.filename().string();
  m["dataset_digest"] = digest;
  m["rows"] = ds.rows.rows();
  write_file(out.string() + ".manifest.json", m.dump(1) + "\n");

  const auto stats = train::loss_unit_stats(ds.rows, c.n_paths);
  double ds_mean = 0.0, az_mean = 0.0;
  for (const auto& b : stats) {
    ds_mean += b.delay_spread;
    az_mean += b.az_doa_spread;
  }
  std::printf("wrote %s: %zu rows x %zu columns (N=%zu, fc=%.3g GHz, delta2d=%.3g m)\n",
              out.string().c_str(), ds.rows.rows(), ds.rows.cols(), c.n_paths, c.fc_ghz, c.delta2d);
  std::printf("digest %s  mean delay spread %.3f ns  mean az DoA spread %.4f\n", digest.c_str(),
              ds_mean / static_cast<double>(stats.size()),
              az_mean / static_cast<double>(stats.size()));
  return kOk;
}

int cmd_train(const CommonOptions& o, const std::string& dataset_path,
              const std::string& resume_path, std::size_t checkpoint_every, bool quiet) {
  const RunConfig c = build_config(o);
  const fs::path dpath = resolve(dataset_path);
  const std::string text = read_file(dpath);
  const Dataset ds = parse_dataset(text);
  const PreparedData data = prepare_data(c, ds);
  const fs::path dir = resolve(o.out.empty() ? "run" : o.out);
  fs::create_directories(dir);
  const std::string mode = mode_name(c.training.mode);

  std::optional<ad::Checkpoint> resume;
  if (!resume_path.empty()) {
    if (c.runs != 1) throw ConfigError("--resume needs runs=1");
    resume = ad::load_checkpoint(resolve(resume_path));
  }

  nlohmann::json m;
  m["command"] = "train";
  m["mode"] = mode;
  m["config"] = config_json(c);
  m["dataset"] = dpath.string();
  m["dataset_digest"] = fnv1a_hex(text);
  m["train_end"] = data.train_end;
  m["train_windows"] = data.train_windows.size();
  m["loss_weights"] = {{"delay", data.weights.delay},
                       {"azimuth", data.weights.azimuth},
                       {"zenith", data.weights.zenith},
                       {"gain", data.weights.gain}};
  const std::string manifest_name = mode + ".manifest.json";

  int status = kOk;
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t r = 0; r < c.runs; ++r) {
    const std::uint64_t seed = c.seed + r;
    const std::string stem = mode + "_seed" + std::to_string(seed);
    std::string trace = "# manifest=" + manifest_name + "\nepoch,mean_loss,lr\n";

    TrainRequest req;
    req.seed = seed;
    req.mode = c.training.mode;
    req.resume = resume ? &*resume : nullptr;
    req.checkpoint_every = checkpoint_every;
    req.on_checkpoint = [&](const ad::Checkpoint& ckpt, std::size_t epoch) {
      ad::Checkpoint copy = ckpt;
      copy.meta["manifest"] = manifest_name;
      ad::save_checkpoint(dir / (stem + "_epoch" + std::to_string(epoch) + ".ckpt"), copy);
    };
    req.on_epoch = [&](const train::EpochRecord& e) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e.epoch, e.mean_loss, e.lr);
      trace += buf;
      if (!quiet) {
        std::printf("[%s seed %llu] epoch %zu  loss %.6g  lr %.3g\n", mode.c_str(),
                    static_cast<unsigned long long>(seed), e.epoch, e.mean_loss, e.lr);
        std::fflush(stdout);
      }
    };
    TrainResult res = train_model(c, data, req);
    res.checkpoint.meta["manifest"] = manifest_name;
    const fs::path ckpt_path = dir / (stem + ".ckpt");
    ad::save_checkpoint(ckpt_path, res.checkpoint);
    write_file(dir / (stem + ".trace.csv"), trace);
    runs.push_back({{"seed", seed},
                    {"checkpoint", ckpt_path.filename().string()},
                    {"trace", stem + ".trace.csv"},
                    {"diverged", res.diverged}});
    if (res.diverged) {
      std::fprintf(stderr, "training diverged: %s; last good state saved to %s\n",
                   res.error.c_str(), ckpt_path.string().c_str());
      status = kRuntime;
      break;
    }
  }
  m["runs"] = runs;
  write_file(dir / manifest_name, m.dump(1) + "\n");
  return status;
}

int cmd_evaluate(const CommonOptions& o, const std::string& dataset_path,
                 const std::vector<std::string>& checkpoints, std::string label, bool untrained,
                 bool truth) {
  RunConfig c = build_config(o);
  std::vector<ad::Checkpoint> ckpts;
  for (const auto& p : checkpoints) ckpts.push_back(ad::load_checkpoint(resolve(p)));
  if (!ckpts.empty()) {
    c.model.lag = std::stoull(ckpts.front().meta_at("model.lag"));
    c.model.window = std::stoull(ckpts.front().meta_at("model.window"));
    for (const auto& k : ckpts) {
      if (std::stoull(k.meta_at("model.lag")) != c.model.lag ||
          std::stoull(k.meta_at("model.window")) != c.model.window) {
        throw ConfigError("checkpoints disagree on lag/window");
      }
    }
    if (label.empty()) label = ckpts.front().meta_at("run.mode");
  }
  if (ckpts.empty() && !untrained && !truth) {
    throw ConfigError("evaluate needs --checkpoint, --untrained or --truth");
  }
  if (label.empty()) label = truth ? "truth" : "untrained";

  const fs::path dpath = resolve(dataset_path);
  const std::string text = read_file(dpath);
  const Dataset ds = parse_dataset(text);
  const PreparedData data = prepare_data(c, ds);
  if (data.eval_windows.empty()) {
    std::fprintf(stderr, "warning: evaluation segment (%zu rows) shorter than L+P=%zu; skipped\n",
                 ds.rows.rows() - data.train_end, c.model.lag + c.model.window);
    throw std::runtime_error("no evaluation windows");
  }

  const PooledStats truth_stats = pool_truth(data);
  std::vector<PooledStats> runs;
  if (truth) {
    runs.push_back(truth_stats);
  } else if (!ckpts.empty()) {
    for (const auto& k : ckpts) {
      LoadedModel lm = load_model(k);
      runs.push_back(pool_generated(data, model_generator(*lm.model)));
    }
  } else {
    for (std::size_t r = 0; r < c.runs; ++r) {
      auto m = untrained_model(c, ds.header.n_paths, c.seed + r);
      runs.push_back(pool_generated(data, model_generator(*m)));
    }
  }

  EvalReport rep;
  rep.label = label;
  rep.lag = c.model.lag;
  rep.window = c.model.window;
  rep.n_paths = ds.header.n_paths;
  rep.delta2d = ds.header.delta2d;
  rep.dataset_digest = fnv1a_hex(text);
  rep.checkpoints = checkpoints;
  rep.train_end = data.train_end;
  rep.eval_windows = data.eval_windows.size();
  rep.config = c.entries();
  fill_report(rep, truth_stats, runs, c.cdf_points, c.floor_db);

  const fs::path out = resolve(o.out.empty() ? "report_" + label + ".json" : o.out);
  rep.manifest = out.filename().string() + ".manifest.json";
  write_report(out, rep);
  nlohmann::json m;
  m["command"] = "evaluate";
  m["config"] = config_json(c);
  m["dataset"] = dpath.string();
  m["dataset_digest"] = rep.dataset_digest;
  m["checkpoints"] = checkpoints;
  m["report"] = out.filename().string();
  write_file(out.string() + ".manifest.json", m.dump(1) + "\n");

  std::printf("%s: L=%zu P=%zu delta2d=%.2f, %zu eval windows, %zu run(s)\n", label.c_str(),
              rep.lag, rep.window, rep.delta2d, rep.eval_windows, runs.size());
  for (std::size_t s = 0; s < kStatCount; ++s) {
    std::printf("  %-14s %10.4f dB\n", kStatNames[s], rep.mse_db[s]);
  }
  return kOk;
}

int cmd_export(const std::string& report_path, const std::string& out_dir, bool svg) {
  const EvalReport rep = read_report(resolve(report_path));
  const auto files = export_cdfs(rep, resolve(out_dir.empty() ? "cdfs" : out_dir), svg);
  for (const auto& f : files) std::printf("%s\n", f.string().c_str());
  return kOk;
}

int cmd_table(const std::vector<std::string>& reports, const std::string& out_prefix) {
  std::vector<EvalReport> reps;
  for (const auto& r : reports) reps.push_back(read_report(resolve(r)));
  const TableOutput t = make_table(std::move(reps));
  std::fputs(t.text.c_str(), stdout);
  if (!out_prefix.empty()) {
    const fs::path base = resolve(out_prefix);
    write_file(base.string() + ".txt", t.text);
    write_file(base.string() + ".csv", t.csv);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-directional channel dataset generation and hybrid Transformer training"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, eval_o;
  auto* gen = app.add_subcommand("gen-dataset", "synthesize a channel dataset");
  add_common(gen, gen_o);

  auto* tr = app.add_subcommand("train", "train the hybrid Transformer");
  add_common(tr, train_o);
  std::string train_dataset, resume;
  std::size_t ckpt_every = 0;
  std::optional<std::size_t> runs;
  bool quiet = false;
  tr->add_option("--dataset", train_dataset, "dataset file")->required();
  tr->add_option("--resume", resume, "continue from a checkpoint");
  tr->add_option("--runs", runs, "independent seeds (seed, seed+1, ...)");
  tr->add_option("--checkpoint-every", ckpt_every, "also save every N epochs");
  tr->add_flag("--quiet", quiet, "no per-epoch output");

  auto* ev = app.add_subcommand("evaluate", "CDF mean squared difference against ground truth");
  add_common(ev, eval_o);
  std::string eval_dataset, label;
  std::vector<std::string> checkpoints;
  bool eval_untrained = false, eval_truth = false;
  std::optional<std::size_t> eval_runs;
  ev->add_option("--dataset", eval_dataset, "dataset file")->required();
  ev->add_option("--checkpoint", checkpoints, "trained checkpoint(s); results are averaged");
  ev->add_option("--label", label, "model label in the report");
  ev->add_option("--runs", eval_runs, "seeds for --untrained");
  ev->add_flag("--untrained", eval_untrained, "evaluate freshly initialized models");
  ev->add_flag("--truth", eval_truth, "evaluate ground truth against itself");

  auto* ex = app.add_subcommand("export-cdfs", "write per-statistic CDF files from a report");
  std::string ex_report, ex_out;
  bool svg = false;
  ex->add_option("--report", ex_report, "report file")->required();
  ex->add_option("--out", ex_out, "output directory");
  ex->add_flag("--svg", svg, "also write SVG plots");

  auto* tb = app.add_subcommand("table", "aggregate reports into a table keyed by (P, delta2d)");
  std::vector<std::string> tb_reports;
  std::string tb_out;
  tb->add_option("--report", tb_reports, "report files")->required();
  tb->add_option("--out", tb_out, "write <out>.txt and <out>.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_gen_dataset(gen_o);
    if (*tr) {
      if (runs) train_o.settings.push_back("runs=" + std::to_string(*runs));
      return cmd_train(train_o, train_dataset, resume, ckpt_every, quiet);
    }
    if (*ev) {
      if (eval_runs) eval_o.settings.push_back("runs=" + std::to_string(*eval_runs));
      return cmd_evaluate(eval_o, eval_dataset, checkpoints, label, eval_untrained, eval_truth);
    }
    if (*ex) return cmd_export(ex_report, ex_out, svg);
    if (*tb) return cmd_table(tb_reports, tb_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const ad::CheckpointError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kOk;
}
