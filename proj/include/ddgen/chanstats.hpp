#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ddgen/gscm.hpp"

namespace ddgen::chanstats {

/// Statistics of one channel realization.
struct StatBundle {
  double delay_spread = 0.0;   // seconds
  double az_dod_spread = 0.0;  // [0, 1]
  double zn_dod_spread = 0.0;
  double az_doa_spread = 0.0;
  double zn_doa_spread = 0.0;
  std::vector<double> gains_db;
};

/// Power-weighted RMS delay spread. Weights need not be normalized; at least
/// one must be strictly positive. Zero-weight paths are kept.
double rms_delay_spread(std::span<const double> powers_linear, std::span<const double> delays);

/// Fleury angular spread sqrt(sum w_n |e^{j a_n} - mu|^2) with mu the
/// power-weighted mean phasor. Result lies in [0, 1].
double rms_angular_spread(std::span<const double> powers_linear,
                          std::span<const double> angles_rad);

std::vector<double> db_to_linear(std::span<const double> gains_db);

StatBundle sample_stats(const gscm::ChannelSample& sample);
std::vector<StatBundle> window_stats(std::span<const gscm::ChannelSample> window);

struct EmpiricalCdf {
  std::vector<double> grid;
  std::vector<double> values;
};

/// K equally spaced points over [lo, hi] (all equal to lo when lo == hi).
std::vector<double> linear_grid(double lo, double hi, std::size_t k);
/// Grid spanning the pooled min/max of both sample sets.
std::vector<double> shared_grid(std::span<const double> a, std::span<const double> b,
                                std::size_t k);

/// Fraction of samples <= each grid point.
EmpiricalCdf empirical_cdf(std::span<const double> samples, std::span<const double> grid);
/// Same, on a K-point grid over the samples' own min/max.
EmpiricalCdf empirical_cdf(std::span<const double> samples, std::size_t k);

inline constexpr double kDefaultFloorDb = -120.0;

/// 10*log10(mean squared pointwise difference), clamped below at floor_db.
/// Throws std::invalid_argument when the grids differ.
double cdf_mse_db(const EmpiricalCdf& a, const EmpiricalCdf& b,
                  double floor_db = kDefaultFloorDb);

}  // namespace ddgen::chanstats
