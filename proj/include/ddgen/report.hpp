#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ddgen/pipeline.hpp"

namespace ddgen {

/// Evaluation result of one model label (averaged over its runs).
struct EvalReport {
  std::string label;
  std::size_t lag = 0;
  std::size_t window = 0;
  std::size_t n_paths = 0;
  double delta2d = 0.0;
  std::size_t cdf_points = 0;
  std::string dataset_digest;
  std::string manifest;
  std::vector<std::string> checkpoints;
  std::size_t train_end = 0;
  std::size_t eval_windows = 0;
  std::vector<std::pair<std::string, std::string>> config;
  std::array<double, kStatCount> mse_db{};               // mean over runs
  std::vector<std::array<double, kStatCount>> runs_db;  // one entry per run
  std::vector<StatComparison> cdfs;  // truth vs all runs pooled
};

/// Compares each run against the truth and fills the CDF and dB fields.
void fill_report(EvalReport& report, const PooledStats& truth,
                 const std::vector<PooledStats>& runs, std::size_t cdf_points, double floor_db);

std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);
void write_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& path);

/// Writes <stat>_truth.csv and <stat>_<label>.csv (grid,value) per statistic,
/// plus <stat>_<label>.svg overlays when `svg` is set. Returns the files.
std::vector<std::filesystem::path> export_cdfs(const EvalReport& report,
                                               const std::filesystem::path& dir, bool svg);

struct TableOutput {
  std::string text;
  std::string csv;
};
/// One row per report keyed by (P, delta2d, label), one column per statistic.
TableOutput make_table(std::vector<EvalReport> reports);

}  // namespace ddgen
