#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddgen/ad/matrix.hpp"
#include "ddgen/config.hpp"

namespace ddgen {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetHeader {
  std::size_t n_paths = 0;
  double fc_ghz = 0.0;
  double delta2d = 0.0;
  double h_rx = 0.0;
  std::uint64_t seed = 0;
  std::size_t trajectory_steps = 0;  // 0: all rows form one trajectory
};

/// One receiver trajectory in feature-vector form, one row per step.
struct Dataset {
  DatasetHeader header;
  ad::Matrix rows;  // steps x (4 + 7N), dataset units
};

Dataset synthesize_dataset(const RunConfig& config);

/// Text form: a header line then comma-separated rows at full precision.
std::string format_dataset(const Dataset& ds);
Dataset parse_dataset(const std::string& text);

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Consecutive trajectories of `trajectory_steps` rows (the last may be
/// shorter); a single range when trajectory_steps is 0.
std::vector<RowRange> trajectory_ranges(std::size_t rows, std::size_t trajectory_steps);

/// First row of the evaluation segment. With several trajectories the split
/// falls on the boundary after floor(count * train_fraction) of them (at
/// least one on each side); otherwise at floor(rows * train_fraction).
std::size_t train_end_row(std::size_t rows, std::size_t trajectory_steps,
                          double train_fraction);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace ddgen
