#include "ddgen/gscm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace ddgen::gscm {
namespace {

constexpr double kPi = std::numbers::pi;

double rad_to_deg(double r) { return r * 180.0 / kPi; }
double deg_to_rad(double d) { return d * kPi / 180.0; }

// atan2 mapped onto (-pi, pi]; -pi only arises from a negative-zero ordinate.
double angle(double num, double den) {
  const double a = std::atan2(num, den);
  return a == -kPi ? kPi : a;
}

void check_range(const Range& r, const char* axis) {
  if (!(r.min <= r.max)) {
    throw std::invalid_argument(std::string("place_scatterers: invalid ") + axis +
                                " range (min > max)");
  }
}

}  // namespace

double distance_2d(const Vec3& a, const Vec3& b) { return std::hypot(a.x - b.x, a.y - b.y); }

double distance_3d(const Vec3& a, const Vec3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

bool Bounds::contains(const Vec3& p) const {
  return p.x >= x.min && p.x <= x.max && p.y >= y.min && p.y <= y.max && p.z >= z.min &&
         p.z <= z.max;
}

ScattererField place_scatterers(std::size_t n, const Bounds& bounds, std::uint64_t seed) {
  check_range(bounds.x, "x");
  check_range(bounds.y, "y");
  check_range(bounds.z, "z");
  std::mt19937_64 rng(seed);
  // uniform_real_distribution is half-open; a degenerate range yields its min.
  auto draw = [&rng](const Range& r) {
    if (r.min == r.max) return r.min;
    return std::uniform_real_distribution<double>(r.min, r.max)(rng);
  };
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 p;
    p.x = draw(bounds.x);
    p.y = draw(bounds.y);
    p.z = draw(bounds.z);
    pts.push_back(p);
  }
  return ScattererField(std::move(pts), seed);
}

std::vector<double> heading_angle_set(std::size_t count) {
  if (count < 2) throw std::invalid_argument("heading_angle_set: need at least 2 headings");
  std::vector<double> out(count);
  const double span = 2.0 * kPi - 0.1 * kPi;
  for (std::size_t i = 0; i < count; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(count - 1);
    out[i] = 2.0 * kPi * std::sin(0.1 * kPi + frac * span);
  }
  return out;
}

TrajectoryPoint step_rx(const TrajectoryPoint& from, double theta, double delta2d) {
  TrajectoryPoint next = from;
  next.position.x += delta2d * std::cos(theta);
  next.position.y += delta2d * std::sin(theta);
  next.heading = theta;
  next.step_index = from.step_index + 1;
  return next;
}

std::vector<TrajectoryPoint> gen_trajectory(const TrajectoryConfig& config,
                                            std::span<const double> headings) {
  if (config.steps == 0) throw std::invalid_argument("gen_trajectory: steps must be >= 1");
  if (headings.empty()) throw std::invalid_argument("gen_trajectory: empty heading set");
  if (!(config.delta2d > 0.0)) throw std::invalid_argument("gen_trajectory: delta2d must be > 0");
  if (config.hold_min > config.hold_max) {
    throw std::invalid_argument("gen_trajectory: hold_min > hold_max");
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, headings.size() - 1);
  std::uniform_int_distribution<std::size_t> hold_dist(config.hold_min, config.hold_max);

  std::vector<TrajectoryPoint> out;
  out.reserve(config.steps);
  TrajectoryPoint cur{config.start, headings[pick(rng)], 0};
  std::size_t hold = hold_dist(rng);
  out.push_back(cur);

  const Vec3& tx = config.tx;
  auto reduces = [&](double theta) {
    const TrajectoryPoint next = step_rx(cur, theta, config.delta2d);
    return distance_2d(tx, next.position) < distance_2d(tx, cur.position);
  };

  while (out.size() < config.steps) {
    double theta = cur.heading;
    if (hold == 0) {
      theta = headings[pick(rng)];
      hold = hold_dist(rng);
    }
    if (distance_2d(tx, cur.position) > config.max_distance_2d && !reduces(theta)) {
      bool found = false;
      for (std::size_t k = 0; k < config.max_redraws && !found; ++k) {
        theta = headings[pick(rng)];
        found = reduces(theta);
      }
      if (!found) theta = std::atan2(tx.y - cur.position.y, tx.x - cur.position.x);
      hold = hold_dist(rng);
    }
    cur = step_rx(cur, theta, config.delta2d);
    --hold;
    out.push_back(cur);
  }
  return out;
}

double pathloss_db(double d3d, double fc_ghz, double h_rx) {
  if (!(d3d > 0.0)) throw std::invalid_argument("pathloss_db: distance must be positive");
  if (!(fc_ghz > 0.0)) throw std::invalid_argument("pathloss_db: frequency must be positive");
  const double dh = h_rx - 1.5;
  return 13.54 + 39.08 * std::log10(d3d) + 20.0 * std::log10(fc_ghz) - 0.6 * dh * dh;
}

MpcGeometry mpc_geometry(const Vec3& tx, const Vec3& rx, const Vec3& sc) {
  const double d_tx_sc = distance_3d(tx, sc);
  const double d_sc_rx = distance_3d(sc, rx);
  if (d_tx_sc == 0.0 || d_sc_rx == 0.0) {
    throw std::invalid_argument("mpc_geometry: scatterer coincides with an endpoint");
  }
  const double d2d_sc_rx = distance_2d(sc, rx);
  MpcGeometry g;
  g.delay = (d_tx_sc + d_sc_rx) / kSpeedOfLight;
  g.az_dod = angle(sc.y - rx.y, sc.x - rx.x);
  g.az_doa = angle(rx.y - sc.y, rx.x - sc.x);
  g.zn_dod = angle(d2d_sc_rx, rx.z - sc.z);
  g.zn_doa = angle(d2d_sc_rx, sc.z - rx.z);
  return g;
}

double total_gain_db(std::span<const double> gains_db) {
  if (gains_db.empty()) throw std::invalid_argument("total_gain_db: no paths");
  // Factor out the strongest path so very weak gains do not underflow.
  const double peak = *std::max_element(gains_db.begin(), gains_db.end());
  double acc = 0.0;
  for (double g : gains_db) acc += std::pow(10.0, (g - peak) / 10.0);
  return peak + 10.0 * std::log10(acc);
}

std::vector<double> ChannelSample::flatten() const {
  std::vector<double> row;
  row.reserve(feature_dim(paths.size()));
  row.push_back(rx_position.x);
  row.push_back(rx_position.y);
  row.push_back(rx_position.z);
  row.push_back(total_gain_db);
  for (const MpcFeatures& p : paths) {
    row.push_back(static_cast<double>(p.path_id));
    row.push_back(p.gain_db);
    row.push_back(p.delay * 1e9);
    row.push_back(rad_to_deg(p.az_dod));
    row.push_back(rad_to_deg(p.zn_dod));
    row.push_back(rad_to_deg(p.az_doa));
    row.push_back(rad_to_deg(p.zn_doa));
  }
  return row;
}

ChannelSample ChannelSample::from_features(std::span<const double> row, std::size_t n_paths) {
  if (row.size() != feature_dim(n_paths)) {
    throw std::invalid_argument("ChannelSample::from_features: expected " +
                                std::to_string(feature_dim(n_paths)) + " values, got " +
                                std::to_string(row.size()));
  }
  ChannelSample s;
  s.rx_position = {row[col::kX], row[col::kY], row[col::kZ]};
  s.total_gain_db = row[col::kTotalGain];
  s.paths.resize(n_paths);
  for (std::size_t n = 0; n < n_paths; ++n) {
    MpcFeatures& p = s.paths[n];
    p.path_id = static_cast<std::size_t>(std::llround(row[col::path(n, col::kPathId)]));
    p.gain_db = row[col::path(n, col::kGain)];
    p.delay = row[col::path(n, col::kDelay)] * 1e-9;
    p.az_dod = deg_to_rad(row[col::path(n, col::kAzDod)]);
    p.zn_dod = deg_to_rad(row[col::path(n, col::kZnDod)]);
    p.az_doa = deg_to_rad(row[col::path(n, col::kAzDoa)]);
    p.zn_doa = deg_to_rad(row[col::path(n, col::kZnDoa)]);
  }
  return s;
}

ChannelSample synthesize_sample(const Vec3& tx, const TrajectoryPoint& rx,
                                const ScattererField& field, double fc_ghz,
                                const std::uint64_t* phase_seed) {
  if (field.empty()) throw std::invalid_argument("synthesize_sample: empty scatterer field");
  std::mt19937_64 rng(phase_seed ? *phase_seed : 0);
  std::uniform_real_distribution<double> phase_dist(-2.0 * kPi, 2.0 * kPi);

  ChannelSample s;
  s.rx_position = rx.position;
  s.paths.reserve(field.size());
  std::vector<double> gains;
  gains.reserve(field.size());
  std::size_t id = 1;
  for (const Vec3& sc : field.positions()) {
    const MpcGeometry geo = mpc_geometry(tx, rx.position, sc);
    const double unfolded = distance_3d(tx, sc) + distance_3d(sc, rx.position);
    MpcFeatures p;
    p.path_id = id++;
    p.gain_db = 0.0 - pathloss_db(unfolded, fc_ghz, rx.position.z);
    p.delay = geo.delay;
    p.az_dod = geo.az_dod;
    p.zn_dod = geo.zn_dod;
    p.az_doa = geo.az_doa;
    p.zn_doa = geo.zn_doa;
    if (phase_seed) p.phase = phase_dist(rng);
    gains.push_back(p.gain_db);
    s.paths.push_back(p);
  }
  s.total_gain_db = total_gain_db(gains);
  return s;
}

}  // namespace ddgen::gscm
