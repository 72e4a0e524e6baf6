#include "ddgen/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace ddgen {
namespace {

using nlohmann::json;

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string cdf_csv(const chanstats::EmpiricalCdf& cdf) {
  std::string out = "grid,value\n";
  char buf[80];
  for (std::size_t k = 0; k < cdf.grid.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", cdf.grid[k], cdf.values[k]);
    out += buf;
  }
  return out;
}

std::string svg_plot(const StatComparison& c, const std::string& label) {
  constexpr double kW = 480, kH = 320, kPad = 40;
  const double lo = c.truth.grid.front(), hi = c.truth.grid.back();
  const double span = hi > lo ? hi - lo : 1.0;
  auto polyline = [&](const chanstats::EmpiricalCdf& cdf, const char* colour) {
    std::string pts;
    char buf[64];
    for (std::size_t k = 0; k < cdf.grid.size(); ++k) {
      const double x = kPad + (cdf.grid[k] - lo) / span * (kW - 2 * kPad);
      const double y = kH - kPad - cdf.values[k] * (kH - 2 * kPad);
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
      pts += buf;
    }
    return "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" points=\"" + pts +
           "\"/>\n";
  };
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<line x1=\"40\" y1=\"280\" x2=\"440\" y2=\"280\" stroke=\"black\"/>\n";
  s += "<line x1=\"40\" y1=\"40\" x2=\"40\" y2=\"280\" stroke=\"black\"/>\n";
  s += "<text x=\"40\" y=\"24\" font-size=\"13\">" + c.name + ": truth (black) vs " + label +
       " (red), " + fixed(c.mse_db, 2) + " dB</text>\n";
  s += "<text x=\"40\" y=\"300\" font-size=\"11\">" + fixed(lo, 4) + "</text>\n";
  s += "<text x=\"380\" y=\"300\" font-size=\"11\">" + fixed(hi, 4) + "</text>\n";
  s += polyline(c.truth, "black");
  s += polyline(c.model, "red");
  s += "</svg>\n";
  return s;
}

json cdf_json(const chanstats::EmpiricalCdf& c) {
  return json{{"grid", c.grid}, {"values", c.values}};
}

chanstats::EmpiricalCdf cdf_from(const json& j) {
  chanstats::EmpiricalCdf c;
  c.grid = j.at("grid").get<std::vector<double>>();
  c.values = j.at("values").get<std::vector<double>>();
  return c;
}

}  // namespace

void fill_report(EvalReport& report, const PooledStats& truth,
                 const std::vector<PooledStats>& runs, std::size_t cdf_points, double floor_db) {
  if (runs.empty()) throw std::invalid_argument("fill_report: no runs");
  report.cdf_points = cdf_points;
  report.runs_db.clear();
  report.mse_db.fill(0.0);
  PooledStats pooled;
  for (const auto& run : runs) {
    const auto cmp = compare_stats(truth, run, cdf_points, floor_db);
    std::array<double, kStatCount> db{};
    for (std::size_t s = 0; s < kStatCount; ++s) {
      db[s] = cmp[s].mse_db;
      report.mse_db[s] += db[s] / static_cast<double>(runs.size());
    }
    report.runs_db.push_back(db);
    pooled.append(run);
  }
  report.cdfs = compare_stats(truth, pooled, cdf_points, floor_db);
}

std::string report_to_json(const EvalReport& r) {
  json j;
  j["label"] = r.label;
  j["lag"] = r.lag;
  j["window"] = r.window;
  j["n_paths"] = r.n_paths;
  j["delta2d"] = r.delta2d;
  j["cdf_points"] = r.cdf_points;
  j["dataset_digest"] = r.dataset_digest;
  j["manifest"] = r.manifest;
  j["checkpoints"] = r.checkpoints;
  j["train_end"] = r.train_end;
  j["eval_windows"] = r.eval_windows;
  json cfg = json::object();
  for (const auto& [k, v] : r.config) cfg[k] = v;
  j["config"] = cfg;
  json mse = json::object();
  json runs = json::object();
  for (std::size_t s = 0; s < kStatCount; ++s) {
    mse[kStatNames[s]] = r.mse_db[s];
    std::vector<double> per;
    for (const auto& run : r.runs_db) per.push_back(run[s]);
    runs[kStatNames[s]] = per;
  }
  j["mse_db"] = mse;
  j["mse_db_runs"] = runs;
  json cdfs = json::object();
  for (const auto& c : r.cdfs) {
    cdfs[c.name] = {{"truth", cdf_json(c.truth)}, {"model", cdf_json(c.model)}, {"mse_db", c.mse_db}};
  }
  j["cdfs"] = cdfs;
  return j.dump(1) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const json j = json::parse(text);
    r.label = j.at("label").get<std::string>();
    r.lag = j.at("lag").get<std::size_t>();
    r.window = j.at("window").get<std::size_t>();
    r.n_paths = j.at("n_paths").get<std::size_t>();
    r.delta2d = j.at("delta2d").get<double>();
    r.cdf_points = j.at("cdf_points").get<std::size_t>();
    r.dataset_digest = j.at("dataset_digest").get<std::string>();
    r.manifest = j.value("manifest", std::string{});
    r.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
    r.train_end = j.at("train_end").get<std::size_t>();
    r.eval_windows = j.at("eval_windows").get<std::size_t>();
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    const auto& runs = j.at("mse_db_runs");
    std::size_t n_runs = runs.at(kStatNames[0]).size();
    r.runs_db.assign(n_runs, {});
    for (std::size_t s = 0; s < kStatCount; ++s) {
      r.mse_db[s] = j.at("mse_db").at(kStatNames[s]).get<double>();
      const auto per = runs.at(kStatNames[s]).get<std::vector<double>>();
      for (std::size_t i = 0; i < n_runs && i < per.size(); ++i) r.runs_db[i][s] = per[i];
    }
    for (const char* name : kStatNames) {
      const auto& c = j.at("cdfs").at(name);
      StatComparison sc;
      sc.name = name;
      sc.truth = cdf_from(c.at("truth"));
      sc.model = cdf_from(c.at("model"));
      sc.mse_db = c.at("mse_db").get<double>();
      r.cdfs.push_back(std::move(sc));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return r;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  write_text(path, report_to_json(report));
}

EvalReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

std::vector<std::filesystem::path> export_cdfs(const EvalReport& report,
                                               const std::filesystem::path& dir, bool svg) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> files;
  for (const auto& c : report.cdfs) {
    files.push_back(dir / (c.name + "_truth.csv"));
    write_text(files.back(), cdf_csv(c.truth));
    files.push_back(dir / (c.name + "_" + report.label + ".csv"));
    write_text(files.back(), cdf_csv(c.model));
    if (svg) {
      files.push_back(dir / (c.name + "_" + report.label + ".svg"));
      write_text(files.back(), svg_plot(c, report.label));
    }
  }
  return files;
}

TableOutput make_table(std::vector<EvalReport> reports) {
  std::sort(reports.begin(), reports.end(), [](const EvalReport& a, const EvalReport& b) {
    return std::tie(a.window, a.delta2d, a.label) < std::tie(b.window, b.delta2d, b.label);
  });
  TableOutput out;
  out.csv = "P,delta2d,label,runs";
  for (const char* s : kStatNames) out.csv += std::string(",") + s;
  out.csv += "\n";

  char buf[64];
  std::snprintf(buf, sizeof buf, "%6s %8s %-10s", "P", "delta2d", "model");
  out.text = buf;
  for (const char* s : kStatNames) {
    std::snprintf(buf, sizeof buf, " %14s", s);
    out.text += buf;
  }
  out.text += "\n";
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%6zu %8s %-10s", r.window, fixed(r.delta2d, 2).c_str(),
                  r.label.c_str());
    out.text += buf;
    out.csv += std::to_string(r.window) + "," + fixed(r.delta2d, 2) + "," + r.label + "," +
               std::to_string(r.runs_db.size());
    for (double db : r.mse_db) {
      std::snprintf(buf, sizeof buf, " %14s", fixed(db, 4).c_str());
      out.text += buf;
      std::snprintf(buf, sizeof buf, ",%.6f", db);
      out.csv += buf;
    }
    out.text += "\n";
    out.csv += "\n";
  }
  return out;
}

}  // namespace ddgen
