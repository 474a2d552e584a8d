#pragma once

// CSV and JSON artifacts. Every file starts with a schema-version header;
// numbers are written in shortest round-trip form so identical inputs give
// byte-identical files.

#include "stoman/errors.hpp"
#include "stoman/integrator.hpp"
#include "stoman/linalg.hpp"
#include "stoman/model.hpp"
#include "stoman/perron.hpp"
#include "stoman/smooth.hpp"
#include "stoman/stochastics.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace stoman {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// In-memory CSV table: `# key: value` metadata lines, a column header and
/// numeric rows.
struct CsvTable {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(std::vector<double> r) {
    if (r.size() != columns.size()) {
      throw InputError("csv: row has " + std::to_string(r.size()) + " values, expected " +
                       std::to_string(columns.size()));
    }
    rows.push_back(std::move(r));
  }

  std::string str() const {
    std::string out = "# schema_version: " + std::to_string(kSchemaVersion) + "\n";
    for (const auto& [k, v] : meta) out += "# " + k + ": " + v + "\n";
    for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
    out += "\n";
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) {
        if (c) out += ',';
        out += format_double(r[c]);
      }
      out += '\n';
    }
    return out;
  }
};

inline void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::binary);
  if (!os) throw InputError("cannot open " + file.string() + " for writing");
  os << text;
  if (!os) throw InputError("write failed: " + file.string());
}

inline void write_csv(const std::filesystem::path& file, const CsvTable& t) { write_text(file, t.str()); }

/// JSON document with the schema version as its first key.
inline Json json_document(const std::string& kind) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = kind;
  return j;
}

inline void write_json(const std::filesystem::path& file, const Json& j) { write_text(file, j.dump(2) + "\n"); }

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json to_json(const GapReport& g) {
  Json j = json_document("gap_report");
  j["eta"] = g.eta;
  j["order"] = g.order;
  j["K"] = g.K;
  j["lip"] = g.lip;
  j["alpha"] = g.alpha;
  j["beta"] = g.beta;
  Json vals = Json::array();
  for (double v : g.per_order_values) vals.push_back(std::isfinite(v) ? Json(v) : Json(nullptr));
  j["per_order_values"] = vals;
  j["admissible"] = g.admissible;
  j["eta_window"] = g.eta_window_lo ? Json::array({*g.eta_window_lo, *g.eta_window_hi}) : Json(nullptr);
  j["optimal_eta"] = g.optimal_eta;
  j["failure"] = g.failure;
  return j;
}

/// Columns t, channel_0, ..., channel_{m-1}.
inline CsvTable path_csv(const WienerPath& path) {
  CsvTable t;
  t.meta = {{"content", "wiener_path"}, {"seed", std::to_string(path.seed())}};
  t.columns.push_back("t");
  for (std::size_t c = 0; c < path.channels(); ++c) t.columns.push_back("channel_" + std::to_string(c));
  const TimeGrid& g = path.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const std::int64_t k = g.first_index() + static_cast<std::int64_t>(i);
    std::vector<double> r{g.time_at(k)};
    for (std::size_t c = 0; c < path.channels(); ++c) r.push_back(path.at_index(c, k));
    t.add_row(std::move(r));
  }
  return t;
}

/// Columns t, z.
inline CsvTable ou_csv(const OUSample& ou) {
  CsvTable t;
  t.meta = {{"content", "ou_process"}, {"error_bound", format_double(ou.error_bound())}};
  t.columns = {"t", "z"};
  for (std::size_t i = 0; i < ou.grid().size(); ++i) {
    const std::int64_t k = ou.grid().first_index() + static_cast<std::int64_t>(i);
    t.add_row({ou.grid().time_at(k), ou.at_index(k)});
  }
  return t;
}

/// Columns t, u_1, ..., u_n.
inline CsvTable trajectory_csv(const Trajectory& tr) {
  CsvTable t;
  t.meta = {{"content", "trajectory"}, {"scheme", to_string(tr.scheme)},
            {"method_order", std::to_string(tr.method_order)}};
  t.columns.push_back("t");
  for (Eigen::Index j = 0; j < tr.states.rows(); ++j) t.columns.push_back("u_" + std::to_string(j + 1));
  for (std::size_t i = 0; i < tr.size(); ++i) {
    std::vector<double> r{tr.grid.time(i)};
    for (Eigen::Index j = 0; j < tr.states.rows(); ++j) r.push_back(tr.states(j, static_cast<Eigen::Index>(i)));
    t.add_row(std::move(r));
  }
  return t;
}

/// Columns xi_1..xi_p (base coordinates), h_1..h_q (complementary ones).
inline CsvTable graph_csv(const ManifoldGraph& g, const SpectralModel& model) {
  const auto& base = g.kind == ManifoldKind::stable ? model.minus_modes() : model.plus_modes();
  const auto& comp = g.kind == ManifoldKind::stable ? model.plus_modes() : model.minus_modes();
  CsvTable t;
  t.meta = {{"content", std::string("graph_") + to_string(g.kind)}, {"omega_seed", std::to_string(g.omega_seed)}};
  for (std::size_t a = 0; a < base.size(); ++a) t.columns.push_back("xi_" + std::to_string(a + 1));
  for (std::size_t a = 0; a < comp.size(); ++a) t.columns.push_back("h_" + std::to_string(a + 1));
  for (std::size_t i = 0; i < g.base_points.size(); ++i) {
    std::vector<double> r;
    for (std::size_t j : base) r.push_back(g.base_points[i](static_cast<Eigen::Index>(j)));
    for (std::size_t j : comp) r.push_back(g.values[i](static_cast<Eigen::Index>(j)));
    t.add_row(std::move(r));
  }
  return t;
}

/// Sidecar for graph_csv.
inline Json graph_sidecar(const ManifoldGraph& g, const PerronConfig& c) {
  Json j = json_document("graph_sidecar");
  j["manifold"] = to_string(g.kind);
  j["omega_seed"] = g.omega_seed;
  j["eta"] = c.eta;
  j["T_max"] = c.T_max;
  j["step"] = c.step;
  j["fixed_point_tol"] = c.fixed_point_tol;
  j["tail_tol"] = c.tail_tol;
  j["rho"] = g.rho;
  j["max_iterations"] = g.max_iterations;
  j["measured_lipschitz"] = g.measured_lipschitz;
  j["theoretical_lipschitz"] = g.theoretical_lipschitz;
  j["max_fixed_point_error"] = g.max_fixed_point_error;
  j["max_tail_error"] = g.max_tail_error;
  j["scale"] = g.scale;
  return j;
}

/// D^k h at the base points: one row per (point, complementary mode), one
/// column per flattened multi-index. The layout line documents the index.
inline CsvTable derivative_csv(const std::vector<std::pair<Vector, Matrix>>& at_points, int order, std::size_t p,
                               ManifoldKind kind) {
  CsvTable t;
  std::string layout = "column j = j_1";
  std::size_t w = 1;
  for (int r = 2; r <= order; ++r) {
    w *= p;
    layout += " + " + std::to_string(w) + "*j_" + std::to_string(r);
  }
  t.meta = {{"content", std::string("graph_derivative_") + to_string(kind)},
            {"order", std::to_string(order)},
            {"index_layout", layout + " (0-based base coordinates)"}};
  t.columns = {"point", "row"};
  std::size_t cols = 1;
  for (int r = 0; r < order; ++r) cols *= p;
  for (std::size_t c = 0; c < cols; ++c) t.columns.push_back("d_" + std::to_string(c));
  for (std::size_t i = 0; i < at_points.size(); ++i) {
    const Matrix& D = at_points[i].second;
    for (Eigen::Index r = 0; r < D.rows(); ++r) {
      std::vector<double> row{static_cast<double>(i), static_cast<double>(r)};
      for (Eigen::Index c = 0; c < D.cols(); ++c) row.push_back(D(r, c));
      t.add_row(std::move(row));
    }
  }
  return t;
}

/// Parses a CSV produced by CsvTable::str (metadata lines are returned as
/// key/value pairs).
inline CsvTable read_csv(const std::string& text) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto colon = line.find(": ");
      if (colon == std::string::npos) throw InputError("csv: malformed metadata line: " + line);
      t.meta.emplace_back(line.substr(2, colon - 2), line.substr(colon + 2));
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!header) {
      t.columns = std::move(cells);
      header = true;
      continue;
    }
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(std::stod(c));
    t.add_row(std::move(r));
  }
  if (t.meta.empty() || t.meta.front().first != "schema_version") throw InputError("csv: missing schema_version header");
  t.meta.erase(t.meta.begin());
  return t;
}

}  // namespace stoman
