#pragma once

// Command-line front end: strict configuration parsing, a registry of the
// built-in scenarios, and the simulate / solve / verify / list-scenarios
// commands. Kept header-only so tests can drive the commands in-process;
// the installed binary is a thin wrapper around run_cli().

#include <array>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "volterra/io.hpp"

namespace volterra {
namespace cli {

// Content problems: unknown keys, bad values, unresolvable scenario names.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Exit-code taxonomy: configuration / numerical / file-access failures map
// to distinct codes so scripts can branch on the failure class.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

struct RunConfig {
  std::string scenario;
  double horizon = 1.0;
  std::size_t cells = 32;
  std::size_t paths = 1000;
  std::uint64_t seed = 7451;
  std::size_t workers = 1;
  RegressionBasis basis;
  double opt_step = 0.5;
  double opt_tol = 1e-3;
  std::size_t opt_rounds = 25;
  std::string out_dir = ".";
  bool want_csv = true;
  bool want_json = true;
  double verify_residual_tol = 5e-2;
  double verify_gain_tol = 1e-3;
  std::string candidate_path;
  json params = json::object();
};

namespace detail {

inline void require_keys(const json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("'" + (where.empty() ? std::string("config") : where) +
                      "' must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key '" + (where.empty() ? item.key() : where + "." + item.key()) +
                        "'");
  }
}

template <class T>
T get_field(const json& j, const std::string& where, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for '" + where + key + "'");
  }
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  using detail::get_field;
  using detail::require_keys;
  require_keys(j, "", {"scenario", "grid", "paths", "seed", "workers", "basis", "optimizer",
                       "output", "verify", "params"});
  RunConfig cfg;
  cfg.scenario = get_field<std::string>(j, "", "scenario", "");
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    require_keys(g, "grid", {"horizon", "cells"});
    cfg.horizon = get_field(g, "grid.", "horizon", cfg.horizon);
    cfg.cells = get_field(g, "grid.", "cells", cfg.cells);
  }
  cfg.paths = get_field(j, "", "paths", cfg.paths);
  cfg.seed = get_field(j, "", "seed", cfg.seed);
  cfg.workers = get_field(j, "", "workers", cfg.workers);
  if (j.contains("basis")) {
    const json& b = j.at("basis");
    require_keys(b, "basis", {"family", "degree", "knots", "ridge"});
    if (b.contains("family"))
      cfg.basis.family = family_by_name(get_field<std::string>(b, "basis.", "family", "polynomial"));
    cfg.basis.degree = get_field(b, "basis.", "degree", cfg.basis.degree);
    cfg.basis.knots = get_field(b, "basis.", "knots", cfg.basis.knots);
    cfg.basis.ridge = get_field(b, "basis.", "ridge", cfg.basis.ridge);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    require_keys(o, "optimizer", {"step", "tol", "max_rounds"});
    cfg.opt_step = get_field(o, "optimizer.", "step", cfg.opt_step);
    cfg.opt_tol = get_field(o, "optimizer.", "tol", cfg.opt_tol);
    cfg.opt_rounds = get_field(o, "optimizer.", "max_rounds", cfg.opt_rounds);
  }
  if (j.contains("output")) {
    const json& o = j.at("output");
    require_keys(o, "output", {"dir", "formats"});
    cfg.out_dir = get_field<std::string>(o, "output.", "dir", cfg.out_dir);
    if (o.contains("formats")) {
      cfg.want_csv = cfg.want_json = false;
      for (const auto& f : o.at("formats")) {
        const std::string s = f.get<std::string>();
        if (s == "csv")
          cfg.want_csv = true;
        else if (s == "json")
          cfg.want_json = true;
        else
          throw ConfigError("bad value for 'output.formats': " + s);
      }
    }
  }
  if (j.contains("verify")) {
    const json& v = j.at("verify");
    require_keys(v, "verify", {"residual_tol", "gain_tol", "candidate"});
    cfg.verify_residual_tol = get_field(v, "verify.", "residual_tol", cfg.verify_residual_tol);
    cfg.verify_gain_tol = get_field(v, "verify.", "gain_tol", cfg.verify_gain_tol);
    cfg.candidate_path = get_field<std::string>(v, "verify.", "candidate", cfg.candidate_path);
  }
  if (j.contains("params")) {
    if (!j.at("params").is_object()) throw ConfigError("'params' must be an object");
    cfg.params = j.at("params");
  }
  return cfg;
}

inline void validate_config(const RunConfig& cfg) {
  if (cfg.scenario.empty()) throw ConfigError("'scenario' is required");
  if (cfg.cells == 0) throw ConfigError("'grid.cells' must be positive");
  if (!(cfg.horizon > 0.0)) throw ConfigError("'grid.horizon' must be positive");
  if (cfg.paths == 0) throw ConfigError("'paths' must be positive");
  if (cfg.workers == 0) throw ConfigError("'workers' must be positive");
  if (cfg.basis.degree < 1) throw ConfigError("'basis.degree' must be positive");
  if (cfg.basis.knots < 1) throw ConfigError("'basis.knots' must be positive");
  if (cfg.basis.ridge < 0.0) throw ConfigError("'basis.ridge' must be nonnegative");
  if (!(cfg.opt_step > 0.0)) throw ConfigError("'optimizer.step' must be positive");
  if (!(cfg.opt_tol > 0.0)) throw ConfigError("'optimizer.tol' must be positive");
  if (cfg.opt_rounds == 0) throw ConfigError("'optimizer.max_rounds' must be positive");
  if (!cfg.want_csv && !cfg.want_json) throw ConfigError("'output.formats' must not be empty");
}

// --- scenario registry ----------------------------------------------------

enum class ScenarioKind { kLagged, kRecursive, kToy };

struct ScenarioEntry {
  std::string name;
  std::string summary;
  ScenarioKind kind;
  std::array<std::string, 2> level_tags{"trivial", "trivial"};
};

inline const std::vector<ScenarioEntry>& scenario_registry() {
  static const std::vector<ScenarioEntry> reg = {
      {"consumption-game",
       "zero-sum consumption of a cash flow with lagged drift and jump loadings",
       ScenarioKind::kLagged,
       {"noise-state", "noise-state"}},
      {"recursive-utility",
       "logarithmic recursive-utility consumption on a multiplicative jump cash flow",
       ScenarioKind::kRecursive,
       {"state", "trivial"}},
      {"decoupled-quadratic", "independent time-varying target tracking for both controls",
       ScenarioKind::kToy,
       {"trivial", "trivial"}},
      {"quadratic-saddle", "zero-sum quadratic game with an interior saddle",
       ScenarioKind::kToy,
       {"trivial", "trivial"}},
      {"feedback-rate", "control-free dynamics, state-feedback targets, live backward value",
       ScenarioKind::kToy,
       {"state", "state"}},
      {"martingale-terminal", "martingale state with terminal couplings on both equations",
       ScenarioKind::kToy,
       {"state", "state"}},
      {"jump-only", "pure-jump noise model with quadratic targets", ScenarioKind::kToy,
       {"trivial", "trivial"}},
  };
  return reg;
}

// Resolves a selector that is either a registry name or a path to a JSON
// file of the form {"scenario": <name>, "params": {...}}. Config-level
// params override file-level ones key by key.
inline ScenarioEntry resolve_scenario(RunConfig& cfg) {
  for (const auto& e : scenario_registry())
    if (e.name == cfg.scenario) return e;
  const json doc = read_json_file(cfg.scenario);  // IoFailure when absent
  detail::require_keys(doc, "scenario-file", {"scenario", "params"});
  const std::string name = detail::get_field<std::string>(doc, "scenario-file.", "scenario", "");
  json params = doc.contains("params") ? doc.at("params") : json::object();
  if (!params.is_object()) throw ConfigError("'scenario-file.params' must be an object");
  for (const auto& item : cfg.params.items()) params[item.key()] = item.value();
  cfg.params = std::move(params);
  cfg.scenario = name;
  for (const auto& e : scenario_registry())
    if (e.name == name) return e;
  throw ConfigError("unknown scenario '" + name + "'");
}

inline Scenario51 scenario51_from(const RunConfig& cfg) {
  detail::require_keys(cfg.params, "params",
                       {"alpha0", "alpha1", "gamma0", "eta0", "terminal_slope", "rho", "c_floor",
                        "c_max", "x0", "lambda_b", "lambda_h", "dense_scale", "q_tol",
                        "variance_tol", "residual_tol", "probe_tol"});
  using detail::get_field;
  Scenario51 sp;
  sp.horizon = cfg.horizon;
  const json& p = cfg.params;
  sp.alpha0 = get_field(p, "params.", "alpha0", sp.alpha0);
  sp.alpha1 = get_field(p, "params.", "alpha1", sp.alpha1);
  sp.gamma0 = get_field(p, "params.", "gamma0", sp.gamma0);
  sp.eta0 = get_field(p, "params.", "eta0", sp.eta0);
  sp.terminal_slope = get_field(p, "params.", "terminal_slope", sp.terminal_slope);
  sp.rho = get_field(p, "params.", "rho", sp.rho);
  sp.c_floor = get_field(p, "params.", "c_floor", sp.c_floor);
  sp.c_max = get_field(p, "params.", "c_max", sp.c_max);
  sp.x0 = get_field(p, "params.", "x0", sp.x0);
  sp.lambda_b = get_field(p, "params.", "lambda_b", sp.lambda_b);
  sp.lambda_h = get_field(p, "params.", "lambda_h", sp.lambda_h);
  sp.dense_scale = get_field(p, "params.", "dense_scale", sp.dense_scale);
  sp.q_tol = get_field(p, "params.", "q_tol", sp.q_tol);
  sp.variance_tol = get_field(p, "params.", "variance_tol", sp.variance_tol);
  sp.residual_tol = get_field(p, "params.", "residual_tol", sp.residual_tol);
  sp.probe_tol = get_field(p, "params.", "probe_tol", sp.probe_tol);
  return sp;
}

inline Scenario52 scenario52_from(const RunConfig& cfg) {
  detail::require_keys(cfg.params, "params",
                       {"alpha", "pi", "gamma", "x0", "c_min", "c_max", "lambda_b", "lambda_h",
                        "check_fraction", "ratio_tol", "residual_tol", "projection_tol",
                        "rate_tol"});
  using detail::get_field;
  Scenario52 sp;
  sp.horizon = cfg.horizon;
  const json& p = cfg.params;
  sp.alpha = get_field(p, "params.", "alpha", sp.alpha);
  sp.pi = get_field(p, "params.", "pi", sp.pi);
  sp.gamma = get_field(p, "params.", "gamma", sp.gamma);
  sp.x0 = get_field(p, "params.", "x0", sp.x0);
  sp.c_min = get_field(p, "params.", "c_min", sp.c_min);
  sp.c_max = get_field(p, "params.", "c_max", sp.c_max);
  sp.lambda_b = get_field(p, "params.", "lambda_b", sp.lambda_b);
  sp.lambda_h = get_field(p, "params.", "lambda_h", sp.lambda_h);
  sp.check_fraction = get_field(p, "params.", "check_fraction", sp.check_fraction);
  sp.ratio_tol = get_field(p, "params.", "ratio_tol", sp.ratio_tol);
  sp.residual_tol = get_field(p, "params.", "residual_tol", sp.residual_tol);
  sp.projection_tol = get_field(p, "params.", "projection_tol", sp.projection_tol);
  sp.rate_tol = get_field(p, "params.", "rate_tol", sp.rate_tol);
  return sp;
}

struct PreparedScenario {
  ScenarioEntry entry;
  BuiltScenario built;
  std::array<double, 2> start{};
};

inline PreparedScenario prepare_scenario(RunConfig& cfg) {
  PreparedScenario out;
  out.entry = resolve_scenario(cfg);
  switch (out.entry.kind) {
    case ScenarioKind::kLagged:
      out.built = build_scenario_51(scenario51_from(cfg));
      out.start = {1.0, 0.0};
      break;
    case ScenarioKind::kRecursive:
      out.built = build_scenario_52(scenario52_from(cfg), cfg.cells);
      out.start = {1.0, 0.0};
      break;
    case ScenarioKind::kToy: {
      if (!cfg.params.empty())
        throw ConfigError("scenario '" + out.entry.name + "' takes no params");
      bool found = false;
      for (auto& f : toy_corpus())
        if (f.name == out.entry.name) {
          out.built = BuiltScenario{f.model, f.marks, std::move(f.game), f.options};
          out.start = f.start;
          found = true;
          break;
        }
      if (!found) throw ConfigError("fixture missing for scenario '" + out.entry.name + "'");
      break;
    }
  }
  // Shared run settings reach every nested solver.
  GameOptions& go = out.built.options;
  go.forward.workers = go.backward.workers = go.adjoint.workers = cfg.workers;
  go.backward.basis = cfg.basis;
  go.backward.theta_basis = cfg.basis;
  go.adjoint.basis = cfg.basis;
  go.adjoint.q_basis = cfg.basis;
  for (std::size_t m = 0; m < 2; ++m) out.built.game.players[m].basis = cfg.basis;
  return out;
}

// --- commands -------------------------------------------------------------

namespace detail {

inline std::string out_path(const RunConfig& cfg, const std::string& file) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoFailure("cannot create output directory: " + cfg.out_dir);
  return (fs::path(cfg.out_dir) / file).string();
}

inline ArtifactMeta meta_of(const RunConfig& cfg) {
  return ArtifactMeta{cfg.seed, cfg.horizon, cfg.cells, cfg.paths};
}

inline void write_table(const RunConfig& cfg, const std::string& stem,
                        const std::vector<std::string>& header,
                        const std::vector<std::vector<double>>& rows, std::ostream& log) {
  const ArtifactMeta meta = meta_of(cfg);
  if (cfg.want_csv) {
    const std::string p = out_path(cfg, stem + ".csv");
    write_csv(p, meta, header, rows);
    log << "wrote " << p << "\n";
  }
  if (cfg.want_json) {
    json j;
    j["meta"] = to_json(meta);
    j["header"] = header;
    j["rows"] = rows;
    const std::string p = out_path(cfg, stem + ".json");
    write_json_file(p, j);
    log << "wrote " << p << "\n";
  }
}

}  // namespace detail

inline void cmd_list(std::ostream& out) {
  for (const auto& e : scenario_registry()) out << e.name << "  -  " << e.summary << "\n";
}

inline void cmd_simulate(RunConfig cfg, std::ostream& log) {
  validate_config(cfg);
  PreparedScenario ps = prepare_scenario(cfg);
  const TimeGrid grid = build_grid(cfg.horizon, cfg.cells);
  const PathEnsemble ens =
      sample_ensemble(ps.built.model, grid, ps.built.marks, cfg.paths, cfg.seed, cfg.workers);
  ControlProcess c0 = ControlProcess::constant(0, ps.start[0], cfg.cells,
                                               ps.built.game.players[0].box);
  ControlProcess c1 = ControlProcess::constant(1, ps.start[1], cfg.cells,
                                               ps.built.game.players[1].box);
  const ForwardSolution fsol =
      solve_fsvie(ps.built.game.fwd, ens, {&c0, &c1}, ps.built.game.x0, ps.built.options.forward);

  const std::size_t K = ens.marks.size();
  std::vector<std::string> nh = {"path", "cell", "t", "dt", "lambda_b", "lambda_h", "dB"};
  for (std::size_t k = 0; k < K; ++k) nh.push_back("dH_" + std::to_string(k + 1));
  nh.push_back("w_brownian");
  for (std::size_t k = 0; k < K; ++k) nh.push_back("w_jump_" + std::to_string(k + 1));
  std::vector<std::vector<double>> nrows;
  nrows.reserve(cfg.paths * cfg.cells);
  for (std::size_t p = 0; p < cfg.paths; ++p)
    for (std::size_t j = 0; j < cfg.cells; ++j) {
      std::vector<double> row = {static_cast<double>(p),     static_cast<double>(j),
                                 grid.node(j),               grid.dt(j),
                                 ens.tc[p].lambda_b[j],      ens.tc[p].lambda_h[j],
                                 ens.increment(p, j, 0)};
      for (std::size_t k = 0; k < K; ++k) row.push_back(ens.increment(p, j, k + 1));
      row.push_back(ens.weight(p, j, 0));
      for (std::size_t k = 0; k < K; ++k) row.push_back(ens.weight(p, j, k + 1));
      nrows.push_back(std::move(row));
    }
  detail::write_table(cfg, "noise", nh, nrows, log);

  std::vector<std::vector<double>> srows;
  srows.reserve(cfg.paths * (cfg.cells + 1));
  for (std::size_t p = 0; p < cfg.paths; ++p)
    for (std::size_t i = 0; i <= cfg.cells; ++i)
      srows.push_back({static_cast<double>(p), static_cast<double>(i), grid.node(i),
                       fsol.x[p][i]});
  detail::write_table(cfg, "state", {"path", "node", "t", "x"}, srows, log);
}

inline void cmd_solve(RunConfig cfg, std::ostream& log) {
  validate_config(cfg);
  PreparedScenario ps = prepare_scenario(cfg);
  const TimeGrid grid = build_grid(cfg.horizon, cfg.cells);
  const PathEnsemble ens =
      sample_ensemble(ps.built.model, grid, ps.built.marks, cfg.paths, cfg.seed, cfg.workers);
  std::array<ControlProcess, 2> init = {
      ControlProcess::constant(0, ps.start[0], cfg.cells, ps.built.game.players[0].box,
                               ps.built.game.players[0].level),
      ControlProcess::constant(1, ps.start[1], cfg.cells, ps.built.game.players[1].box,
                               ps.built.game.players[1].level)};
  NashOptions no;
  no.step = cfg.opt_step;
  no.tol = cfg.opt_tol;
  no.max_rounds = cfg.opt_rounds;
  no.game = ps.built.options;
  const NashReport rep = find_nash(ps.built.game, ens, std::move(init), no);
  const PerformanceReport perf =
      estimate_performance(ps.built.game, ens, rep.solution.fwd, rep.solution.bwd);

  json cand;
  cand["meta"] = to_json(detail::meta_of(cfg));
  cand["scenario"] = ps.entry.name;
  cand["converged"] = rep.converged;
  cand["rounds"] = rep.rounds;
  cand["performance"] = {{"value", {perf.value[0], perf.value[1]}},
                         {"se", {perf.se[0], perf.se[1]}}};
  json players = json::array();
  for (std::size_t m = 0; m < 2; ++m)
    players.push_back(to_json(rep.controls[m], ps.entry.level_tags[m]));
  cand["players"] = std::move(players);
  const std::string cpath = detail::out_path(cfg, "candidate.json");
  write_json_file(cpath, cand);
  log << "wrote " << cpath << "\n";

  std::vector<std::vector<double>> trows;
  for (std::size_t r = 0; r < rep.residual_history.size(); ++r)
    trows.push_back({static_cast<double>(r), rep.residual_history[r][0],
                     rep.residual_history[r][1]});
  detail::write_table(cfg, "trace", {"round", "residual_0", "residual_1"}, trows, log);
  log << (rep.converged ? "converged" : "stopped") << " after " << rep.rounds << " round(s)\n";
}

inline void cmd_verify(RunConfig cfg, std::ostream& log) {
  validate_config(cfg);
  ScenarioEntry entry = resolve_scenario(cfg);
  const RunSettings rs{cfg.cells, cfg.paths, cfg.seed, cfg.workers};

  if (cfg.candidate_path.empty()) {
    ScenarioReport rep;
    if (entry.kind == ScenarioKind::kLagged)
      rep = run_scenario_5_1(scenario51_from(cfg), rs);
    else if (entry.kind == ScenarioKind::kRecursive)
      rep = run_scenario_5_2(scenario52_from(cfg), rs);
    else
      throw ConfigError("scenario '" + entry.name +
                        "' has no oracle suite; pass a candidate file (--candidate)");
    json j;
    j["meta"] = to_json(detail::meta_of(cfg));
    j["scenario"] = entry.name;
    j["kind"] = "oracle-suite";
    j["all_pass"] = rep.all_pass();
    json arr = json::array();
    for (const auto& o : rep.oracles) arr.push_back(to_json(o));
    j["oracles"] = std::move(arr);
    j["profiles"] = profile_names_json(rep);
    const std::string rpath = detail::out_path(cfg, "report.json");
    write_json_file(rpath, j);
    log << "wrote " << rpath << "\n";
    if (cfg.want_csv) {
      const std::string ppath = detail::out_path(cfg, "profiles.csv");
      write_profiles_csv(ppath, detail::meta_of(cfg), rep);
      log << "wrote " << ppath << "\n";
    }
    for (const auto& o : rep.oracles)
      log << (o.pass ? "pass  " : "FAIL  ") << o.name << "  margin " << format_double(o.margin)
          << "  tol " << format_double(o.tolerance) << "\n";
    return;
  }

  // Candidate checks: re-solve at the stored controls, then test
  // stationarity, conditional maximality, concavity, and deviation gains.
  RunConfig build_cfg = cfg;
  PreparedScenario ps = prepare_scenario(build_cfg);
  const json cand = read_json_file(cfg.candidate_path);
  if (!cand.contains("players") || !cand.at("players").is_array() ||
      cand.at("players").size() != 2)
    throw ConfigError("candidate file needs a two-entry 'players' array");
  std::array<ControlProcess, 2> ctrl = {
      control_from_json(cand.at("players").at(0), ps.built.marks.size()),
      control_from_json(cand.at("players").at(1), ps.built.marks.size())};
  for (std::size_t m = 0; m < 2; ++m) {
    ctrl[m].player = m;
    if (ctrl[m].rules.size() != cfg.cells)
      throw ConfigError("candidate rules cover " + std::to_string(ctrl[m].rules.size()) +
                        " cells, run uses " + std::to_string(cfg.cells));
  }
  const TimeGrid grid = build_grid(cfg.horizon, cfg.cells);
  const PathEnsemble ens =
      sample_ensemble(ps.built.model, grid, ps.built.marks, cfg.paths, cfg.seed, cfg.workers);
  const GameSolution g = solve_game(ps.built.game, ens, {&ctrl[0], &ctrl[1]}, ps.built.options);

  struct Check {
    std::string name;
    double observed;
    double tolerance;
    bool pass;
  };
  std::vector<Check> checks;
  const auto add = [&](std::string name, double obs, double tol) {
    checks.push_back({std::move(name), obs, tol, obs <= tol});
  };
  for (std::size_t m = 0; m < 2; ++m) {
    const ResidualField r = necessary_residual(ps.built.game, ens, g, m);
    add("stationarity-" + std::to_string(m + 1), r.max_abs, cfg.verify_residual_tol);
  }
  const SufficientReport suff =
      sufficient_check(ps.built.game, ens, g, {0.25, 0.75}, ps.built.options);
  double half = 0.0;
  for (std::size_t m = 0; m < 2; ++m) {
    const double w = ps.built.game.players[m].box.width();
    half = std::max(half, std::isfinite(w) && w < 1e6 ? 0.5 * w : 1.0);
  }
  if (half == 0.0) half = 1.0;
  const std::vector<double> shifts = {0.1 * half, -0.1 * half, 0.3 * half, -0.3 * half};
  const SaddleReport sad = saddle_check(ps.built.game, ens, {&ctrl[0], &ctrl[1]}, shifts,
                                        ps.built.options);
  for (std::size_t m = 0; m < 2; ++m) {
    add("probe-gain-" + std::to_string(m + 1), std::max(suff.worst_probe_gain[m], 0.0),
        cfg.verify_gain_tol);
    add("concavity-" + std::to_string(m + 1), std::max(suff.worst_bulge[m], 0.0),
        cfg.verify_gain_tol);
    add("deviation-gain-" + std::to_string(m + 1), std::max(sad.worst_gain[m], 0.0),
        cfg.verify_gain_tol);
  }

  json j;
  j["meta"] = to_json(detail::meta_of(cfg));
  j["scenario"] = entry.name;
  j["kind"] = "candidate-checks";
  j["candidate"] = cfg.candidate_path;
  bool all = true;
  json arr = json::array();
  for (const auto& c : checks) {
    all = all && c.pass;
    json cj;
    cj["name"] = c.name;
    cj["observed"] = c.observed;
    cj["tolerance"] = c.tolerance;
    cj["pass"] = c.pass;
    arr.push_back(std::move(cj));
  }
  j["all_pass"] = all;
  j["checks"] = std::move(arr);
  const std::string rpath = detail::out_path(cfg, "report.json");
  write_json_file(rpath, j);
  log << "wrote " << rpath << "\n";
  for (const auto& c : checks)
    log << (c.pass ? "pass  " : "FAIL  ") << c.name << "  observed " << format_double(c.observed)
        << "  tol " << format_double(c.tolerance) << "\n";
}

// --- entry point ----------------------------------------------------------

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"stochastic Volterra game toolkit"};
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths, grid_n, workers;
    std::optional<std::string> outdir, format, candidate;
  };

  const auto attach = [](CLI::App* sub, Flags& f, bool with_candidate) {
    sub->add_option("--config", f.config, "run configuration file (JSON)")->required();
    sub->add_option("--seed", f.seed, "override the ensemble seed");
    sub->add_option("--paths", f.paths, "override the ensemble size");
    sub->add_option("--grid-n", f.grid_n, "override the number of grid cells");
    sub->add_option("--out", f.outdir, "override the output directory");
    sub->add_option("--workers", f.workers, "override the worker count");
    sub->add_option("--format", f.format, "restrict output format")
        ->check(CLI::IsMember({"csv", "json"}));
    if (with_candidate)
      sub->add_option("--candidate", f.candidate, "candidate file to verify");
  };

  Flags fsim, fsolve, fverify;
  CLI::App* sim = app.add_subcommand("simulate", "sample noise and state ensembles to disk");
  attach(sim, fsim, false);
  CLI::App* slv = app.add_subcommand("solve", "search for a stationary control pair");
  attach(slv, fsolve, false);
  CLI::App* ver = app.add_subcommand("verify", "run oracle or candidate checks");
  attach(ver, fverify, true);
  CLI::App* lst = app.add_subcommand("list-scenarios", "print the built-in scenarios");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (lst->parsed()) {
      cmd_list(out);
      return kExitOk;
    }
    const Flags& f = sim->parsed() ? fsim : (slv->parsed() ? fsolve : fverify);
    RunConfig cfg = parse_config(read_json_file(f.config));
    if (f.seed) cfg.seed = *f.seed;
    if (f.paths) cfg.paths = *f.paths;
    if (f.grid_n) cfg.cells = *f.grid_n;
    if (f.workers) cfg.workers = *f.workers;
    if (f.outdir) cfg.out_dir = *f.outdir;
    if (f.format) {
      cfg.want_csv = *f.format == "csv";
      cfg.want_json = *f.format == "json";
    }
    if (f.candidate) cfg.candidate_path = *f.candidate;
    if (sim->parsed())
      cmd_simulate(std::move(cfg), out);
    else if (slv->parsed())
      cmd_solve(std::move(cfg), out);
    else
      cmd_verify(std::move(cfg), out);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const json::exception& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoFailure& e) {
    err << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace cli
}  // namespace volterra
