#include "ddgen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ddgen/gscm.hpp"

namespace ddgen {
namespace {

constexpr const char* kMagic = "# ddgen-dataset v1";

void append_number(std::string& out, double v) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

Dataset synthesize_dataset(const RunConfig& config) {
  config.validate();
  const auto field = gscm::place_scatterers(config.n_paths, config.bounds, derive_seed(config.seed, 1));
  const auto headings = gscm::heading_angle_set(config.headings);

  Dataset ds;
  ds.header = {config.n_paths, config.fc_ghz, config.delta2d, config.h_rx, config.seed,
               config.trajectory_steps >= config.steps ? 0 : config.trajectory_steps};
  ds.rows = ad::Matrix(config.steps, gscm::feature_dim(config.n_paths));
  const std::uint64_t phase_base = derive_seed(config.seed, 3);
  const auto ranges = trajectory_ranges(config.steps, ds.header.trajectory_steps);
  for (std::size_t k = 0; k < ranges.size(); ++k) {
    auto tc = config.trajectory(k);
    tc.steps = ranges[k].end - ranges[k].begin;
    const auto traj = gscm::gen_trajectory(tc, headings);
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const std::size_t t = ranges[k].begin + i;
      const std::uint64_t phase_seed = derive_seed(phase_base, t);
      const auto row =
          gscm::synthesize_sample(config.tx, traj[i], field, config.fc_ghz, &phase_seed).flatten();
      std::copy(row.begin(), row.end(), ds.rows.row_span(t).begin());
    }
  }
  return ds;
}

std::string format_dataset(const Dataset& ds) {
  std::string out = kMagic;
  out += " N=" + std::to_string(ds.header.n_paths);
  out += " fc=";
  append_number(out, ds.header.fc_ghz);
  out += " delta2d=";
  append_number(out, ds.header.delta2d);
  out += " h_rx=";
  append_number(out, ds.header.h_rx);
  out += " seed=" + std::to_string(ds.header.seed);
  out += " trajectory_steps=" + std::to_string(ds.header.trajectory_steps);
  out += '\n';
  for (std::size_t r = 0; r < ds.rows.rows(); ++r) {
    for (std::size_t c = 0; c < ds.rows.cols(); ++c) {
      if (c) out += ',';
      append_number(out, ds.rows(r, c));
    }
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind(kMagic, 0) != 0) {
    throw IoError("dataset: missing '# ddgen-dataset v1' header");
  }
  Dataset ds;
  bool have_n = false;
  std::istringstream hs(line.substr(std::string(kMagic).size()));
  std::string tok;
  try {
    while (hs >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "N") {
        ds.header.n_paths = std::stoull(val);
        have_n = true;
      } else if (key == "fc") {
        ds.header.fc_ghz = std::stod(val);
      } else if (key == "delta2d") {
        ds.header.delta2d = std::stod(val);
      } else if (key == "h_rx") {
        ds.header.h_rx = std::stod(val);
      } else if (key == "seed") {
        ds.header.seed = std::stoull(val);
      } else if (key == "trajectory_steps") {
        ds.header.trajectory_steps = std::stoull(val);
      }
    }
  } catch (const std::exception&) {
    throw IoError("dataset: malformed header '" + line + "'");
  }
  if (!have_n || ds.header.n_paths == 0) throw IoError("dataset: header lacks N");
  const std::size_t width = gscm::feature_dim(ds.header.n_paths);

  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t cols = 0;
    const char* p = line.c_str();
    while (*p) {
      char* end = nullptr;
      const double v = std::strtod(p, &end);
      if (end == p) throw IoError("dataset: bad number on row " + std::to_string(rows + 1));
      values.push_back(v);
      ++cols;
      p = end;
      if (*p == ',') ++p;
    }
    if (cols != width) {
      throw IoError("dataset: row " + std::to_string(rows + 1) + " has " + std::to_string(cols) +
                    " columns, expected " + std::to_string(width));
    }
    ++rows;
  }
  ds.rows = ad::Matrix(rows, width, std::move(values));
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::string text = format_dataset(ds);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

std::vector<RowRange> trajectory_ranges(std::size_t rows, std::size_t trajectory_steps) {
  std::vector<RowRange> out;
  if (trajectory_steps == 0 || trajectory_steps >= rows) {
    out.push_back({0, rows});
    return out;
  }
  for (std::size_t b = 0; b < rows; b += trajectory_steps) {
    out.push_back({b, std::min(rows, b + trajectory_steps)});
  }
  return out;
}

std::size_t train_end_row(std::size_t rows, std::size_t trajectory_steps,
                          double train_fraction) {
  const auto ranges = trajectory_ranges(rows, trajectory_steps);
  if (ranges.size() < 2) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(rows) * train_fraction));
  }
  auto k = static_cast<std::size_t>(std::floor(static_cast<double>(ranges.size()) * train_fraction));
  k = std::clamp<std::size_t>(k, 1, ranges.size() - 1);
  return ranges[k].begin;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ddgen
