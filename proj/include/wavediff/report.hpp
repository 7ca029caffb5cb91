#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wavediff/errors.hpp"
#include "wavediff/metrics.hpp"

namespace wavediff {

inline constexpr const char* kVersion = "0.1.0";

// ============================================================================
// Run artifacts shared by every command: per-sample metric tables, plot data,
// and a machine-readable record of the exact configuration that produced an
// output directory. Numbers are printed with %.17g so re-parsing them loses
// nothing and byte-level comparisons of reruns are meaningful. Run records
// carry no timestamps for the same reason.
// ============================================================================

namespace detail {

inline std::string num17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// ----------------------------------------------------------------------------
// Metric tables: sample_id,mse,mae,linf,rel_l2
// ----------------------------------------------------------------------------

inline void write_metrics_csv(const std::filesystem::path& path,
                              const std::vector<std::pair<std::size_t, Metrics>>& rows) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "sample_id,mse,mae,linf,rel_l2\n";
  for (const auto& [id, m] : rows)
    os << id << ',' << detail::num17(m.mse) << ',' << detail::num17(m.mae) << ','
       << detail::num17(m.linf) << ',' << detail::num17(m.rel_l2) << '\n';
  if (!os.good()) throw IoError("failed writing " + path.string());
}

inline std::vector<std::pair<std::size_t, Metrics>> read_metrics_csv(
    const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "sample_id,mse,mae,linf,rel_l2")
    throw IoError(path.string() + ": bad metrics header");
  std::vector<std::pair<std::size_t, Metrics>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::pair<std::size_t, Metrics> row;
    try {
      std::getline(ls, field, ',');
      row.first = std::stoull(field);
      std::getline(ls, field, ',');
      row.second.mse = std::stod(field);
      std::getline(ls, field, ',');
      row.second.mae = std::stod(field);
      std::getline(ls, field, ',');
      row.second.linf = std::stod(field);
      std::getline(ls, field, ',');
      row.second.rel_l2 = std::stod(field);
    } catch (const std::exception&) {
      throw IoError(path.string() + ": bad metrics row '" + line + "'");
    }
    rows.push_back(row);
  }
  return rows;
}

// ----------------------------------------------------------------------------
// Plot data: series,x,y (one row per point, series interleaving allowed)
// ----------------------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

inline void write_plot_csv(const std::filesystem::path& path,
                           const std::vector<PlotSeries>& series) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "series,x,y\n";
  for (const auto& s : series) {
    require(s.name.find(',') == std::string::npos, "plot series names must not contain commas");
    for (const auto& [x, y] : s.points)
      os << s.name << ',' << detail::num17(x) << ',' << detail::num17(y) << '\n';
  }
  if (!os.good()) throw IoError("failed writing " + path.string());
}

// ----------------------------------------------------------------------------
// Run records
// ----------------------------------------------------------------------------

/// FNV-1a over the canonical (sorted-key) JSON dump.
inline std::uint64_t config_hash(const nlohmann::json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline void write_run_record(const std::filesystem::path& path, const std::string& command,
                             const nlohmann::json& config) {
  nlohmann::json rec = {{"command", command},
                        {"config", config},
                        {"config_hash", config_hash(config)},
                        {"version", kVersion}};
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << rec.dump(2) << '\n';
  if (!os.good()) throw IoError("failed writing " + path.string());
}

}  // namespace wavediff
