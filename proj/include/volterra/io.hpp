#pragma once

// Emission layer: CSV tables with embedded metadata, JSON documents with
// stable key order, and (de)serialization of the types that cross process
// boundaries (oracle reports, fitted control rules).

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "volterra/control.hpp"
#include "volterra/features.hpp"
#include "volterra/scenarios.hpp"

namespace volterra {

using json = nlohmann::ordered_json;

// File-level I/O problem (open/write failure), as opposed to bad content.
class IoFailure : public Error {
 public:
  explicit IoFailure(const std::string& msg) : Error(msg) {}
};

// Full-precision, locale-independent number text: round-trips any double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// Run identity stamped into every artifact; deliberately excludes anything a
// rerun may legitimately vary (worker count, wall time), so equal settings
// mean byte-identical files.
struct ArtifactMeta {
  std::uint64_t seed = 0;
  double horizon = 0.0;
  std::size_t cells = 0;
  std::size_t paths = 0;
};

inline json to_json(const ArtifactMeta& m) {
  json j;
  j["seed"] = m.seed;
  j["horizon"] = m.horizon;
  j["cells"] = m.cells;
  j["paths"] = m.paths;
  j["version"] = kVersion;
  return j;
}

// CSV: '#'-prefixed metadata lines, then a header row, then data rows,
// comma-separated with '.' decimals.
inline void write_csv(const std::string& path, const ArtifactMeta& meta,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  out << "# seed=" << meta.seed << "\n";
  out << "# horizon=" << format_double(meta.horizon) << "\n";
  out << "# cells=" << meta.cells << "\n";
  out << "# paths=" << meta.paths << "\n";
  out << "# version=" << kVersion << "\n";
  for (std::size_t c = 0; c < header.size(); ++c)
    out << header[c] << (c + 1 < header.size() ? "," : "\n");
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw InvalidArgument("write_csv: ragged row in " + path);
    for (std::size_t c = 0; c < row.size(); ++c)
      out << format_double(row[c]) << (c + 1 < row.size() ? "," : "\n");
  }
  if (!out) throw IoFailure("write failed: " + path);
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoFailure("write failed: " + path);
}

// Throws IoFailure when the file cannot be opened; malformed content
// propagates the parser's own error so callers can classify it separately.
inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open for reading: " + path);
  return json::parse(in);
}

// --- oracle reports -------------------------------------------------------

inline json to_json(const OracleResult& o) {
  json j;
  j["name"] = o.name;
  j["tolerance"] = o.tolerance;
  j["margin"] = o.margin;
  j["pass"] = o.pass;
  j["note"] = o.note;
  j["reference"] = o.reference;
  j["observed"] = o.observed;
  return j;
}

inline json to_json(const ScenarioReport& rep) {
  json j;
  j["all_pass"] = rep.all_pass();
  json arr = json::array();
  for (const auto& o : rep.oracles) arr.push_back(to_json(o));
  j["oracles"] = std::move(arr);
  return j;
}

// Profiles in long format: one row per (profile, node) pair.
inline void write_profiles_csv(const std::string& path, const ArtifactMeta& meta,
                               const ScenarioReport& rep) {
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < rep.profiles.size(); ++k) {
    const auto& prof = rep.profiles[k].second;
    for (std::size_t i = 0; i < prof.size(); ++i) {
      const double t = i < rep.nodes.size() ? rep.nodes[i] : 0.0;
      rows.push_back({static_cast<double>(k), static_cast<double>(i), t, prof[i]});
    }
  }
  write_csv(path, meta, {"profile", "node", "t", "value"}, rows);
}

inline json profile_names_json(const ScenarioReport& rep) {
  json j = json::array();
  for (const auto& pr : rep.profiles) j.push_back(pr.first);
  return j;
}

// --- information levels by name ------------------------------------------

inline InformationLevel level_by_name(const std::string& name, std::size_t jump_marks) {
  if (name == "trivial") return level_trivial();
  if (name == "state") return InformationLevel{Flow::kNoise, {feat::state()}};
  if (name == "noise") return level_noise(jump_marks);
  if (name == "noise-state") return level_noise_state(jump_marks);
  if (name == "full") return level_full(jump_marks, false);
  if (name == "full-state") return level_full(jump_marks, true);
  if (name == "time-change") return level_time_change();
  throw InvalidArgument("unknown information level: " + name);
}

// --- regression and control serialization --------------------------------

inline std::string family_name(RegressionBasis::Family f) {
  return f == RegressionBasis::Family::kPolynomial ? "polynomial" : "hinge";
}

inline RegressionBasis::Family family_by_name(const std::string& s) {
  if (s == "polynomial") return RegressionBasis::Family::kPolynomial;
  if (s == "hinge") return RegressionBasis::Family::kPiecewiseLinear;
  throw InvalidArgument("unknown basis family: " + s);
}

inline json to_json(const RegressionBasis& b) {
  json j;
  j["family"] = family_name(b.family);
  j["degree"] = b.degree;
  j["knots"] = b.knots;
  j["ridge"] = b.ridge;
  return j;
}

inline RegressionBasis basis_from_json(const json& j) {
  RegressionBasis b;
  b.family = family_by_name(j.at("family").get<std::string>());
  b.degree = j.at("degree").get<int>();
  b.knots = j.at("knots").get<int>();
  b.ridge = j.at("ridge").get<double>();
  return b;
}

inline json to_json(const BasisExpansion& e) {
  json j;
  j["basis"] = to_json(e.basis);
  j["kept"] = e.kept;
  j["mean"] = e.mean;
  j["sd"] = e.sd;
  j["knots"] = e.knots;
  j["col_center"] = e.col_center;
  return j;
}

inline BasisExpansion expansion_from_json(const json& j) {
  BasisExpansion e;
  e.basis = basis_from_json(j.at("basis"));
  j.at("kept").get_to(e.kept);
  j.at("mean").get_to(e.mean);
  j.at("sd").get_to(e.sd);
  j.at("knots").get_to(e.knots);
  j.at("col_center").get_to(e.col_center);
  return e;
}

inline json to_json(const CellRule& r) {
  json j;
  j["beta"] = r.beta;
  // A constant rule travels without its (empty) expansion.
  if (r.expansion.kept.empty())
    j["expansion"] = nullptr;
  else
    j["expansion"] = to_json(r.expansion);
  return j;
}

inline CellRule rule_from_json(const json& j) {
  CellRule r;
  j.at("beta").get_to(r.beta);
  if (!j.at("expansion").is_null()) r.expansion = expansion_from_json(j.at("expansion"));
  return r;
}

inline json to_json(const ControlProcess& c, const std::string& level_tag) {
  json j;
  j["player"] = c.player;
  j["box"] = {{"lo", c.box.lo}, {"hi", c.box.hi}};
  j["level"] = level_tag;
  json rules = json::array();
  for (const auto& r : c.rules) rules.push_back(to_json(r));
  j["rules"] = std::move(rules);
  return j;
}

inline ControlProcess control_from_json(const json& j, std::size_t jump_marks) {
  ControlProcess c;
  c.player = j.at("player").get<std::size_t>();
  c.box.lo = j.at("box").at("lo").get<double>();
  c.box.hi = j.at("box").at("hi").get<double>();
  c.level = level_by_name(j.at("level").get<std::string>(), jump_marks);
  for (const auto& rj : j.at("rules")) c.rules.push_back(rule_from_json(rj));
  if (c.rules.empty()) throw InvalidArgument("control rules empty in candidate");
  return c;
}

}  // namespace volterra
