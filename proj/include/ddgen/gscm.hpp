#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

// Geometry-based stochastic channel model: static scatterers, a moving
// receiver and single-bounce multipath components derived from geometry.
namespace ddgen::gscm {

inline constexpr double kSpeedOfLight = 3.0e8;  // m/s

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

double distance_2d(const Vec3& a, const Vec3& b);
double distance_3d(const Vec3& a, const Vec3& b);

struct Range {
  double min = 0.0;
  double max = 0.0;
};

struct Bounds {
  Range x{-550.0, 500.0};
  Range y{-550.0, 500.0};
  Range z{0.0, 30.0};

  bool contains(const Vec3& p) const;
};

/// Fixed scatterer positions for one simulation world.
class ScattererField {
 public:
  ScattererField(std::vector<Vec3> positions, std::uint64_t seed)
      : positions_(std::move(positions)), seed_(seed) {}

  std::span<const Vec3> positions() const { return positions_; }
  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }
  std::uint64_t seed() const { return seed_; }

 private:
  std::vector<Vec3> positions_;
  std::uint64_t seed_;
};

/// n scatterers i.i.d. uniform over `bounds`. Throws std::invalid_argument
/// when a range has min > max.
ScattererField place_scatterers(std::size_t n, const Bounds& bounds, std::uint64_t seed);

struct TrajectoryPoint {
  Vec3 position;
  double heading = 0.0;  // radians
  std::size_t step_index = 0;
};

/// theta_i = 2*pi*sin(0.1*pi + (i-1)/(A-1) * (2*pi - 0.1*pi)), i = 1..A.
std::vector<double> heading_angle_set(std::size_t count);

/// One horizontal move of `delta2d` meters along `theta`; z is unchanged.
TrajectoryPoint step_rx(const TrajectoryPoint& from, double theta, double delta2d);

struct TrajectoryConfig {
  Vec3 tx{0.0, 0.0, 25.0};
  Vec3 start{100.0, 100.0, 1.5};
  std::size_t steps = 1;
  double delta2d = 1.0;
  std::size_t hold_min = 100;
  std::size_t hold_max = 500;
  double max_distance_2d = 600.0;
  std::size_t max_redraws = 100;
  std::uint64_t seed = 0;
};

/// Random-walk receiver trajectory of `config.steps` points (the first is the
/// start). A heading from `headings` is held for H ~ U{hold_min..hold_max}
/// steps. While the receiver is beyond `max_distance_2d` from the TX, a
/// heading that does not strictly reduce that distance is redrawn, up to
/// `max_redraws` times, after which the receiver heads straight for the TX.
std::vector<TrajectoryPoint> gen_trajectory(const TrajectoryConfig& config,
                                            std::span<const double> headings);

/// 3GPP urban-macro pathloss in dB: d3d in meters, fc in GHz, h_rx in meters.
double pathloss_db(double d3d, double fc_ghz, double h_rx);

struct MpcGeometry {
  double delay = 0.0;   // seconds
  double az_dod = 0.0;  // radians, all angles in (-pi, pi]
  double zn_dod = 0.0;
  double az_doa = 0.0;
  double zn_doa = 0.0;
};

/// Delay and angles of the single-bounce path tx -> sc -> rx. The azimuth
/// angles use the scatterer-minus-receiver vector (departure) and its
/// negation (arrival); zenith angles use the scatterer/receiver horizontal
/// distance against the height difference.
MpcGeometry mpc_geometry(const Vec3& tx, const Vec3& rx, const Vec3& sc);

struct MpcFeatures {
  std::size_t path_id = 0;  // 1..N
  double gain_db = 0.0;
  double delay = 0.0;  // seconds
  double az_dod = 0.0;
  double zn_dod = 0.0;
  double az_doa = 0.0;
  double zn_doa = 0.0;
  double phase = 0.0;  // sampled, not part of the feature vector
};

/// Width of the flattened feature vector for n paths.
constexpr std::size_t feature_dim(std::size_t n_paths) { return 4 + 7 * n_paths; }

/// Column layout of the flattened feature vector.
namespace col {
inline constexpr std::size_t kX = 0, kY = 1, kZ = 2, kTotalGain = 3;
inline constexpr std::size_t kPathId = 0, kGain = 1, kDelay = 2, kAzDod = 3, kZnDod = 4,
                             kAzDoa = 5, kZnDoa = 6;
constexpr std::size_t path(std::size_t n, std::size_t field) { return 4 + 7 * n + field; }
}  // namespace col

struct ChannelSample {
  Vec3 rx_position;
  double total_gain_db = 0.0;
  std::vector<MpcFeatures> paths;

  /// Dataset units: meters, dB, then per path id, dB, ns, degrees x4.
  std::vector<double> flatten() const;
  /// Inverse of flatten() (phases are not recoverable and read as 0).
  static ChannelSample from_features(std::span<const double> row, std::size_t n_paths);
};

/// 10*log10(sum 10^(g_n/10)).
double total_gain_db(std::span<const double> gains_db);

/// Channel at one receiver position. Per-path gain is -PL over the unfolded
/// tx -> sc -> rx distance (0 dBm transmit power). Throws on an empty field.
/// Phases are drawn uniformly from [-2pi, 2pi] when `phase_seed` is given.
ChannelSample synthesize_sample(const Vec3& tx, const TrajectoryPoint& rx,
                                const ScattererField& field, double fc_ghz,
                                const std::uint64_t* phase_seed = nullptr);

}  // namespace ddgen::gscm
