#include "ddgen/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>

namespace ddgen {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string show(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
std::string show(std::size_t v) { return std::to_string(v); }
std::string show(std::uint64_t v, int) { return std::to_string(v); }

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": not a number: '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v[0] != '-') out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) {
    throw ConfigError(key + ": not a non-negative integer: '" + v + "'");
  }
  return out;
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& key, const std::string&)> set;
};

template <class T>
Field real_field(T RunConfig::*owner, double T::*member) {
  return {[=](const RunConfig& c) { return show(c.*owner.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*owner.*member = parse_real(k, v);
          }};
}
Field real_field(double RunConfig::*member) {
  return {[=](const RunConfig& c) { return show(c.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_real(k, v);
          }};
}
template <class T>
Field size_field(T RunConfig::*owner, std::size_t T::*member) {
  return {[=](const RunConfig& c) { return show(c.*owner.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*owner.*member = parse_uint(k, v);
          }};
}
Field size_field(std::size_t RunConfig::*member) {
  return {[=](const RunConfig& c) { return show(c.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*member = parse_uint(k, v);
          }};
}
Field range_field(gscm::Range gscm::Bounds::*axis, double gscm::Range::*end) {
  return {[=](const RunConfig& c) { return show(c.bounds.*axis.*end); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.bounds.*axis.*end = parse_real(k, v);
          }};
}

const std::map<std::string, Field>& fields() {
  using M = model::ModelConfig;
  using T = train::TrainConfig;
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    f["n_paths"] = size_field(&RunConfig::n_paths);
    f["fc_ghz"] = real_field(&RunConfig::fc_ghz);
    f["delta2d"] = real_field(&RunConfig::delta2d);
    f["h_rx"] = real_field(&RunConfig::h_rx);
    f["tx_x"] = real_field(&RunConfig::tx, &gscm::Vec3::x);
    f["tx_y"] = real_field(&RunConfig::tx, &gscm::Vec3::y);
    f["tx_z"] = real_field(&RunConfig::tx, &gscm::Vec3::z);
    f["start_x"] = real_field(&RunConfig::start_x);
    f["start_y"] = real_field(&RunConfig::start_y);
    f["bounds_x_min"] = range_field(&gscm::Bounds::x, &gscm::Range::min);
    f["bounds_x_max"] = range_field(&gscm::Bounds::x, &gscm::Range::max);
    f["bounds_y_min"] = range_field(&gscm::Bounds::y, &gscm::Range::min);
    f["bounds_y_max"] = range_field(&gscm::Bounds::y, &gscm::Range::max);
    f["bounds_z_min"] = range_field(&gscm::Bounds::z, &gscm::Range::min);
    f["bounds_z_max"] = range_field(&gscm::Bounds::z, &gscm::Range::max);
    f["headings"] = size_field(&RunConfig::headings);
    f["hold_min"] = size_field(&RunConfig::hold_min);
    f["hold_max"] = size_field(&RunConfig::hold_max);
    f["max_distance_2d"] = real_field(&RunConfig::max_distance_2d);
    f["max_redraws"] = size_field(&RunConfig::max_redraws);
    f["steps"] = size_field(&RunConfig::steps);
    f["trajectory_steps"] = size_field(&RunConfig::trajectory_steps);
    f["seed"] = {[](const RunConfig& c) { return show(c.seed, 0); },
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   c.seed = parse_uint(k, v);
                 }};
    f["train_fraction"] = real_field(&RunConfig::train_fraction);
    f["train_stride"] = size_field(&RunConfig::train_stride);
    f["eval_stride"] = size_field(&RunConfig::eval_stride);

    f["d_model"] = size_field(&RunConfig::model, &M::d_model);
    f["heads"] = size_field(&RunConfig::model, &M::heads);
    f["layers"] = size_field(&RunConfig::model, &M::layers);
    f["ff_dim"] = size_field(&RunConfig::model, &M::ff_dim);
    f["low_rank"] = size_field(&RunConfig::model, &M::low_rank);
    f["bilstm_hidden"] = size_field(&RunConfig::model, &M::bilstm_hidden);
    f["lag"] = size_field(&RunConfig::model, &M::lag);
    f["window"] = size_field(&RunConfig::model, &M::window);
    f["dropout"] = real_field(&RunConfig::model, &M::dropout);

    f["epochs"] = size_field(&RunConfig::training, &T::epochs);
    f["batch_size"] = size_field(&RunConfig::training, &T::batch_size);
    f["lr"] = real_field(&RunConfig::training, &T::lr);
    f["lr_decay"] = real_field(&RunConfig::training, &T::lr_decay);
    f["lr_decay_every"] = size_field(&RunConfig::training, &T::lr_decay_every);
    f["smooth_l1_beta"] = real_field(&RunConfig::training, &T::beta);
    f["grad_clip"] = real_field(&RunConfig::training, &T::grad_clip);
    f["adam_beta1"] = {
        [](const RunConfig& c) { return show(c.training.optimizer.beta1); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.training.optimizer.beta1 = parse_real(k, v);
        }};
    f["adam_beta2"] = {
        [](const RunConfig& c) { return show(c.training.optimizer.beta2); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.training.optimizer.beta2 = parse_real(k, v);
        }};
    f["adam_eps"] = {[](const RunConfig& c) { return show(c.training.optimizer.eps); },
                     [](RunConfig& c, const std::string& k, const std::string& v) {
                       c.training.optimizer.eps = parse_real(k, v);
                     }};
    f["weight_decay"] = {
        [](const RunConfig& c) { return show(c.training.optimizer.weight_decay); },
        [](RunConfig& c, const std::string& k, const std::string& v) {
          c.training.optimizer.weight_decay = parse_real(k, v);
        }};
    f["mode"] = {[](const RunConfig& c) {
                   return std::string(c.training.mode == train::LossMode::kStats ? "gen" : "pred");
                 },
                 [](RunConfig& c, const std::string& k, const std::string& v) {
                   if (v == "gen") {
                     c.training.mode = train::LossMode::kStats;
                   } else if (v == "pred") {
                     c.training.mode = train::LossMode::kPredictive;
                   } else {
                     throw ConfigError(k + ": expected gen or pred, got '" + v + "'");
                   }
                 }};
    f["max_loss_weight"] = real_field(&RunConfig::max_loss_weight);
    f["cdf_points"] = size_field(&RunConfig::cdf_points);
    f["floor_db"] = real_field(&RunConfig::floor_db);
    f["runs"] = size_field(&RunConfig::runs);
    return f;
  }();
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown configuration key '" + key + "'");
  it->second.set(*this, key, value);
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, f] : fields()) out.emplace_back(k, f.get(*this));
  return out;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (n_paths == 0) fail("n_paths must be >= 1");
  if (!(fc_ghz > 0.0)) fail("fc_ghz must be positive");
  if (!(delta2d > 0.0)) fail("delta2d must be positive");
  if (headings < 2) fail("headings must be >= 2");
  if (hold_min == 0 || hold_min > hold_max) fail("hold_min must be in 1..hold_max");
  if (steps == 0) fail("steps must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must be in (0, 1)");
  if (train_stride == 0 || eval_stride == 0) fail("strides must be >= 1");
  if (cdf_points < 2) fail("cdf_points must be >= 2");
  if (runs == 0) fail("runs must be >= 1");
  if (training.batch_size == 0) fail("batch_size must be >= 1");
  if (!(training.lr > 0.0)) fail("lr must be positive");
  if (!(training.beta > 0.0)) fail("smooth_l1_beta must be positive");
  for (const gscm::Range* r : {&bounds.x, &bounds.y, &bounds.z}) {
    if (r->min > r->max) fail("bounds: min exceeds max");
  }
  model::ModelConfig m = model;
  m.n_paths = n_paths;
  try {
    m.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

gscm::TrajectoryConfig RunConfig::trajectory(std::size_t index) const {
  gscm::TrajectoryConfig t;
  t.tx = tx;
  t.start = {start_x, start_y, h_rx};
  t.steps = trajectory_steps ? std::min(trajectory_steps, steps) : steps;
  t.delta2d = delta2d;
  t.hold_min = hold_min;
  t.hold_max = hold_max;
  t.max_distance_2d = max_distance_2d;
  t.max_redraws = max_redraws;
  t.seed = derive_seed(derive_seed(seed, 2), index);
  return t;
}

void load_config_file(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

RunConfig desk_preset() {
  RunConfig c;
  c.n_paths = 5;
  c.steps = 2000;
  c.trajectory_steps = 200;
  c.model.d_model = 32;
  c.model.heads = 2;
  c.model.layers = 2;
  c.model.ff_dim = 64;
  c.model.low_rank = 8;
  c.model.bilstm_hidden = 16;
  c.model.lag = 20;
  c.model.window = 10;
  c.training.epochs = 30;
  c.training.batch_size = 64;
  c.training.lr = 5e-4;
  c.training.grad_clip = 1.0;
  c.train_stride = 2;
  c.eval_stride = 2;
  c.runs = 3;
  return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream * 0xD1B54A32D192ED03ULL +
                    0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace ddgen
