#include "ddgen/chanstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <stdexcept>

namespace ddgen::chanstats {
namespace {

// Normalized weights; rejects empty, negative or all-zero powers.
std::vector<double> normalized(std::span<const double> powers, std::size_t expected,
                               const char* op) {
  if (powers.size() != expected) {
    throw std::invalid_argument(std::string(op) + ": powers and values differ in length");
  }
  double total = 0.0;
  for (double p : powers) {
    if (!(p >= 0.0)) throw std::invalid_argument(std::string(op) + ": negative power");
    total += p;
  }
  if (!(total > 0.0)) throw std::invalid_argument(std::string(op) + ": all powers are zero");
  std::vector<double> w(powers.begin(), powers.end());
  for (double& x : w) x /= total;
  return w;
}

}  // namespace

double rms_delay_spread(std::span<const double> powers_linear, std::span<const double> delays) {
  const auto w = normalized(powers_linear, delays.size(), "rms_delay_spread");
  double mean = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) mean += w[n] * delays[n];
  double var = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    const double d = delays[n] - mean;
    var += w[n] * d * d;
  }
  return std::sqrt(var);
}

double rms_angular_spread(std::span<const double> powers_linear,
                          std::span<const double> angles_rad) {
  const auto w = normalized(powers_linear, angles_rad.size(), "rms_angular_spread");
  double mu_re = 0.0, mu_im = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    mu_re += w[n] * std::cos(angles_rad[n]);
    mu_im += w[n] * std::sin(angles_rad[n]);
  }
  double var = 0.0;
  for (std::size_t n = 0; n < w.size(); ++n) {
    const double re = std::cos(angles_rad[n]) - mu_re;
    const double im = std::sin(angles_rad[n]) - mu_im;
    var += w[n] * (re * re + im * im);
  }
  return std::min(1.0, std::sqrt(var));
}

std::vector<double> db_to_linear(std::span<const double> gains_db) {
  std::vector<double> out(gains_db.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::pow(10.0, gains_db[i] / 10.0);
  return out;
}

StatBundle sample_stats(const gscm::ChannelSample& sample) {
  const std::size_t n = sample.paths.size();
  std::vector<double> gains(n), delays(n), az_dod(n), zn_dod(n), az_doa(n), zn_doa(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = sample.paths[i];
    gains[i] = p.gain_db;
    delays[i] = p.delay;
    az_dod[i] = p.az_dod;
    zn_dod[i] = p.zn_dod;
    az_doa[i] = p.az_doa;
    zn_doa[i] = p.zn_doa;
  }
  // Weights are relative, so shift by the strongest path before converting
  // from dB to keep them representable.
  std::vector<double> rel(gains);
  if (!rel.empty()) {
    const double peak = *std::max_element(rel.begin(), rel.end());
    for (double& g : rel) g -= peak;
  }
  const auto powers = db_to_linear(rel);
  StatBundle b;
  b.delay_spread = rms_delay_spread(powers, delays);
  b.az_dod_spread = rms_angular_spread(powers, az_dod);
  b.zn_dod_spread = rms_angular_spread(powers, zn_dod);
  b.az_doa_spread = rms_angular_spread(powers, az_doa);
  b.zn_doa_spread = rms_angular_spread(powers, zn_doa);
  b.gains_db = std::move(gains);
  return b;
}

std::vector<StatBundle> window_stats(std::span<const gscm::ChannelSample> window) {
  if (window.empty()) throw std::invalid_argument("window_stats: empty window");
  std::vector<StatBundle> out;
  out.reserve(window.size());
  for (const auto& s : window) out.push_back(sample_stats(s));
  return out;
}

std::vector<double> linear_grid(double lo, double hi, std::size_t k) {
  if (k < 2) throw std::invalid_argument("linear_grid: need at least 2 points");
  if (hi < lo) throw std::invalid_argument("linear_grid: hi < lo");
  std::vector<double> grid(k);
  for (std::size_t i = 0; i < k; ++i) {
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
  }
  grid.back() = hi;
  return grid;
}

std::vector<double> shared_grid(std::span<const double> a, std::span<const double> b,
                                std::size_t k) {
  if (a.empty() && b.empty()) throw std::invalid_argument("shared_grid: no samples");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (auto s : {a, b}) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  return linear_grid(lo, hi, k);
}

EmpiricalCdf empirical_cdf(std::span<const double> samples, std::span<const double> grid) {
  if (samples.empty()) throw std::invalid_argument("empirical_cdf: no samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  EmpiricalCdf cdf;
  cdf.grid.assign(grid.begin(), grid.end());
  cdf.values.reserve(grid.size());
  const double n = static_cast<double>(sorted.size());
  for (double g : grid) {
    const auto count = std::upper_bound(sorted.begin(), sorted.end(), g) - sorted.begin();
    cdf.values.push_back(static_cast<double>(count) / n);
  }
  return cdf;
}

EmpiricalCdf empirical_cdf(std::span<const double> samples, std::size_t k) {
  if (samples.empty()) throw std::invalid_argument("empirical_cdf: no samples");
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  return empirical_cdf(samples, linear_grid(*lo, *hi, k));
}

double cdf_mse_db(const EmpiricalCdf& a, const EmpiricalCdf& b, double floor_db) {
  if (a.grid != b.grid || a.values.size() != b.values.size() || a.values.empty()) {
    throw std::invalid_argument("cdf_mse_db: CDFs are not on the same grid");
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    const double d = a.values[k] - b.values[k];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.values.size());
  if (mse <= 0.0) return floor_db;
  return std::max(floor_db, 10.0 * std::log10(mse));
}

}  // namespace ddgen::chanstats
