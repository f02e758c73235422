#pragma once

// Batch front door: JSON run configs, subcommand dispatch, and
// deterministic report writing.  Reports carry the fully resolved config
// (defaults included) so a run is reproducible from its own output; wall
// times and timestamps go to a separate metadata file so report.json is
// byte-identical for identical config bytes.
//
// Exit codes: 0 success, 2 solver non-convergence, 3 config error (with a
// line-numbered diagnostic on stderr).

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "mingraph/barriers.hpp"
#include "mingraph/boundary.hpp"
#include "mingraph/continuation.hpp"
#include "mingraph/criteria.hpp"
#include "mingraph/domain.hpp"
#include "mingraph/errors.hpp"
#include "mingraph/flow.hpp"
#include "mingraph/io.hpp"
#include "mingraph/lemma_lab.hpp"

namespace mingraph {

using Json = nlohmann::ordered_json;

enum class RunMode { flow, continuation, conditions, lemmas, nonexistence };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::flow: return "flow";
    case RunMode::continuation: return "continuation";
    case RunMode::conditions: return "conditions";
    case RunMode::lemmas: return "lemmas";
    case RunMode::nonexistence: return "nonexistence";
  }
  return "?";
}

namespace detail_cli {

// Best-effort line number for a diagnostic: the first line whose text
// contains the quoted key (good enough for hand-written configs).
inline int line_of_key(const std::string& text, const std::string& key) {
  const std::string needle = "\"" + key + "\"";
  const size_t pos = text.find(needle);
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

inline int line_of_offset(const std::string& text, size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n'));
}

[[noreturn]] inline void config_fail(const std::string& text, const std::string& key,
                                     const std::string& what) {
  const int line = line_of_key(text, key);
  throw Error("ConfigError",
              (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + what);
}

inline void check_keys(const Json& obj, const std::vector<std::string>& allowed,
                       const std::string& where, const std::string& text) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool ok = false;
    for (const auto& a : allowed)
      if (key == a) ok = true;
    if (!ok) config_fail(text, key, "unknown key \"" + key + "\" in " + where);
  }
}

inline double get_num(const Json& obj, const std::string& text, const std::string& key,
                      double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) config_fail(text, key, "\"" + key + "\" must be a number");
  return obj[key].get<double>();
}

inline int64_t get_int(const Json& obj, const std::string& text, const std::string& key,
                       int64_t fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) config_fail(text, key, "\"" + key + "\" must be an integer");
  return obj[key].get<int64_t>();
}

inline bool get_bool(const Json& obj, const std::string& text, const std::string& key,
                     bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean()) config_fail(text, key, "\"" + key + "\" must be a boolean");
  return obj[key].get<bool>();
}

// Optional numeric: absent or null both mean "not set".
inline std::optional<double> get_opt(const Json& obj, const std::string& text,
                                     const std::string& key) {
  if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
  if (!obj[key].is_number()) config_fail(text, key, "\"" + key + "\" must be a number or null");
  return obj[key].get<double>();
}

// Non-finite doubles have no JSON number form; report values fall back to
// strings so nothing silently becomes null.
inline Json jnum(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline Json opt_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

}  // namespace detail_cli

// Geometry overrides: any field set here replaces the numerically sampled
// value.  When the band curvature, the regularity width, and the summary
// spacing are all pinned, the distance-field computation is skipped
// entirely and the summary is assembled from the domain's closed forms
// (this is how golden configs reproduce hand-derived constants exactly).
struct GeometryOverrides {
  std::optional<double> band;
  std::optional<double> lambda_minus;
  std::optional<double> d0_regularity;
  std::optional<double> min_boundary_h;
  std::optional<double> r_omega;
  std::optional<double> summary_h;
  std::optional<bool> mean_convex;
  std::optional<bool> convex;

  bool analytic() const { return lambda_minus && d0_regularity && summary_h; }
};

struct SolverConfig {
  // flow
  double sigma = 0.9;
  double tol = 1e-8;
  int64_t max_steps = 200000;
  std::optional<double> psi_cap;   // null: no cap
  std::optional<double> beta0;     // null: no det-g trip; conditions default to 4
  double blowup_threshold = 1e3;
  std::optional<double> tol_mp;    // null: 5h
  double eps_margin = 0.05;
  // newton / continuation
  double newton_tol = 1e-10;
  int64_t newton_max_iters = 50;
  int64_t steps = 8;
  double t_min_step = 1.0 / 1024.0;
  bool track_lambda = false;
  // conditions
  double safety = 0.5;
};

struct LemmaConfig {
  int64_t trials = 100000;
  std::vector<std::pair<int, int>> dims;  // (n, m); empty = {2,3,4} x {1,2,3}
  double big_k = 1.0;
  double tol = 1e-9;
};

struct NonexistenceConfig {
  double eps = 1.0;
  double margin = 1.0;
  double peak_scale = 1.0;
};

struct OutputConfig {
  bool dump_field = false;
  bool field_csv = false;
  bool barrier_csv = false;
};

struct RunConfig {
  RunMode mode = RunMode::flow;
  DomainSpec domain;
  std::vector<std::string> boundary;  // expressions; empty string = zero
  std::optional<double> grid_h;
  SolverConfig solver;
  GeometryOverrides geometry;
  LemmaConfig lemmas;
  NonexistenceConfig nonexistence;
  OutputConfig output;
  uint64_t seed = 0;

  Json resolved;  // the full config with defaults filled in, for the report
};

namespace detail_cli {

inline DomainSpec parse_domain(const Json& dom, const std::string& text) {
  if (!dom.is_object()) config_fail(text, "domain", "\"domain\" must be an object");
  if (!dom.contains("kind") || !dom["kind"].is_string())
    config_fail(text, "domain", "\"domain\" needs a string \"kind\"");
  const std::string kind = dom["kind"].get<std::string>();
  const int n = static_cast<int>(get_int(dom, text, "n", 2));
  try {
    if (kind == "ball") {
      check_keys(dom, {"kind", "n", "radius"}, "domain", text);
      return DomainSpec::ball(n, get_num(dom, text, "radius", 1.0));
    }
    if (kind == "rounded-box") {
      check_keys(dom, {"kind", "n", "half_widths", "corner_radius"}, "domain", text);
      if (!dom.contains("half_widths") || !dom["half_widths"].is_array())
        config_fail(text, "half_widths", "rounded-box needs a \"half_widths\" array");
      std::vector<double> hw;
      for (const auto& v : dom["half_widths"]) hw.push_back(v.get<double>());
      return DomainSpec::rounded_box(n, hw, get_num(dom, text, "corner_radius", 0.0));
    }
    if (kind == "ellipsoid") {
      check_keys(dom, {"kind", "n", "semi_axes"}, "domain", text);
      if (!dom.contains("semi_axes") || !dom["semi_axes"].is_array())
        config_fail(text, "semi_axes", "ellipsoid needs a \"semi_axes\" array");
      std::vector<double> ax;
      for (const auto& v : dom["semi_axes"]) ax.push_back(v.get<double>());
      return DomainSpec::ellipsoid(n, ax);
    }
    if (kind == "catenoid-neck") {
      check_keys(dom, {"kind", "n", "waist", "cap_radius"}, "domain", text);
      return DomainSpec::catenoid_neck(n, get_num(dom, text, "waist", 1.0),
                                       get_num(dom, text, "cap_radius", 1.0));
    }
    if (kind == "custom") {
      check_keys(dom, {"kind", "n", "level_set", "diameter", "r_omega", "convex"}, "domain", text);
      if (!dom.contains("level_set") || !dom["level_set"].is_string())
        config_fail(text, "level_set", "custom domain needs a string \"level_set\"");
      return DomainSpec::custom(n, dom["level_set"].get<std::string>(),
                                get_num(dom, text, "diameter", 0.0),
                                get_num(dom, text, "r_omega", 0.0),
                                get_bool(dom, text, "convex", false));
    }
  } catch (const Error& err) {
    if (err.code() == "ConfigError") throw;
    config_fail(text, "domain", err.what());
  } catch (const ExprError& err) {
    config_fail(text, "level_set", err.what());
  }
  config_fail(text, "kind", "unknown domain kind \"" + kind + "\"");
}

inline Json domain_echo(const DomainSpec& spec) {
  Json d;
  d["kind"] = to_string(spec.kind);
  d["n"] = spec.n;
  switch (spec.kind) {
    case DomainKind::kBall:
      d["radius"] = spec.params[0];
      break;
    case DomainKind::kRoundedBox: {
      Json hw = Json::array();
      for (int i = 0; i < spec.n; ++i) hw.push_back(spec.params[static_cast<size_t>(i)]);
      d["half_widths"] = hw;
      d["corner_radius"] = spec.params[static_cast<size_t>(spec.n)];
      break;
    }
    case DomainKind::kEllipsoid: {
      Json ax = Json::array();
      for (int i = 0; i < spec.n; ++i) ax.push_back(spec.params[static_cast<size_t>(i)]);
      d["semi_axes"] = ax;
      break;
    }
    case DomainKind::kCatenoidNeck:
      d["waist"] = spec.params[0];
      d["cap_radius"] = spec.params[1];
      break;
    case DomainKind::kCustomLevelSet:
      d["diameter"] = spec.custom_diameter;
      d["r_omega"] = spec.custom_r_omega;
      d["convex"] = spec.custom_convex;
      break;
  }
  return d;
}

}  // namespace detail_cli

inline RunConfig parse_config(const std::string& text) {
  using namespace detail_cli;
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error("ConfigError",
                "line " + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
  if (!root.is_object()) throw Error("ConfigError", "line 1: config must be a JSON object");
  check_keys(root,
             {"mode", "domain", "boundary", "grid", "solver", "geometry", "lemmas",
              "nonexistence", "output", "seed"},
             "the top level", text);

  RunConfig cfg;
  if (!root.contains("mode") || !root["mode"].is_string())
    config_fail(text, "mode", "config needs a string \"mode\"");
  const std::string mode = root["mode"].get<std::string>();
  if (mode == "flow") cfg.mode = RunMode::flow;
  else if (mode == "continuation") cfg.mode = RunMode::continuation;
  else if (mode == "conditions") cfg.mode = RunMode::conditions;
  else if (mode == "lemmas") cfg.mode = RunMode::lemmas;
  else if (mode == "nonexistence") cfg.mode = RunMode::nonexistence;
  else config_fail(text, "mode", "unknown mode \"" + mode + "\"");

  const int64_t seed = get_int(root, text, "seed", 0);
  if (seed < 0) config_fail(text, "seed", "\"seed\" must be non-negative");
  cfg.seed = static_cast<uint64_t>(seed);

  // Domain: every mode except lemmas works on a domain.
  if (cfg.mode != RunMode::lemmas) {
    if (!root.contains("domain")) config_fail(text, "mode", "this mode needs a \"domain\" block");
    cfg.domain = parse_domain(root["domain"], text);
  } else if (root.contains("domain")) {
    config_fail(text, "domain", "lemma verification takes no \"domain\" block");
  }

  // Boundary data: flow, continuation, and conditions read it from the
  // config; the nonexistence mode constructs its own.
  if (root.contains("boundary")) {
    const Json& b = root["boundary"];
    if (!b.is_object()) config_fail(text, "boundary", "\"boundary\" must be an object");
    check_keys(b, {"components"}, "boundary", text);
    if (!b.contains("components") || !b["components"].is_array())
      config_fail(text, "components", "\"boundary\" needs a \"components\" array");
    for (const auto& c : b["components"]) {
      if (!c.is_string())
        config_fail(text, "components", "boundary components must be expression strings");
      cfg.boundary.push_back(c.get<std::string>());
    }
  }
  const bool needs_boundary = cfg.mode == RunMode::flow || cfg.mode == RunMode::continuation ||
                              cfg.mode == RunMode::conditions;
  if (needs_boundary && cfg.boundary.empty())
    config_fail(text, "mode", "this mode needs boundary data with at least one component");
  if (!needs_boundary && !cfg.boundary.empty())
    config_fail(text, "boundary", "this mode takes no \"boundary\" block");

  if (root.contains("grid")) {
    const Json& g = root["grid"];
    if (!g.is_object()) config_fail(text, "grid", "\"grid\" must be an object");
    check_keys(g, {"h"}, "grid", text);
    cfg.grid_h = get_opt(g, text, "h");
  }
  const bool needs_grid = cfg.mode == RunMode::flow || cfg.mode == RunMode::continuation ||
                          cfg.mode == RunMode::nonexistence;
  if (needs_grid && !cfg.grid_h) config_fail(text, "mode", "this mode needs \"grid\": {\"h\": ...}");

  if (root.contains("solver")) {
    const Json& s = root["solver"];
    if (!s.is_object()) config_fail(text, "solver", "\"solver\" must be an object");
    check_keys(s,
               {"sigma", "tol", "max_steps", "psi_cap", "beta0", "blowup_threshold", "tol_mp",
                "eps_margin", "newton_tol", "newton_max_iters", "steps", "t_min_step",
                "track_lambda", "safety"},
               "solver", text);
    SolverConfig& sv = cfg.solver;
    sv.sigma = get_num(s, text, "sigma", sv.sigma);
    sv.tol = get_num(s, text, "tol", sv.tol);
    sv.max_steps = get_int(s, text, "max_steps", sv.max_steps);
    sv.psi_cap = get_opt(s, text, "psi_cap");
    sv.beta0 = get_opt(s, text, "beta0");
    sv.blowup_threshold = get_num(s, text, "blowup_threshold", sv.blowup_threshold);
    sv.tol_mp = get_opt(s, text, "tol_mp");
    sv.eps_margin = get_num(s, text, "eps_margin", sv.eps_margin);
    sv.newton_tol = get_num(s, text, "newton_tol", sv.newton_tol);
    sv.newton_max_iters = get_int(s, text, "newton_max_iters", sv.newton_max_iters);
    sv.steps = get_int(s, text, "steps", sv.steps);
    sv.t_min_step = get_num(s, text, "t_min_step", sv.t_min_step);
    sv.track_lambda = get_bool(s, text, "track_lambda", sv.track_lambda);
    sv.safety = get_num(s, text, "safety", sv.safety);
  }

  if (root.contains("geometry")) {
    const Json& g = root["geometry"];
    if (!g.is_object()) config_fail(text, "geometry", "\"geometry\" must be an object");
    check_keys(g,
               {"band", "lambda_minus", "d0_regularity", "min_boundary_H", "r_omega",
                "summary_h", "mean_convex", "convex"},
               "geometry", text);
    GeometryOverrides& geo = cfg.geometry;
    geo.band = get_opt(g, text, "band");
    geo.lambda_minus = get_opt(g, text, "lambda_minus");
    geo.d0_regularity = get_opt(g, text, "d0_regularity");
    geo.min_boundary_h = get_opt(g, text, "min_boundary_H");
    geo.r_omega = get_opt(g, text, "r_omega");
    geo.summary_h = get_opt(g, text, "summary_h");
    if (g.contains("mean_convex")) geo.mean_convex = get_bool(g, text, "mean_convex", false);
    if (g.contains("convex")) geo.convex = get_bool(g, text, "convex", false);
  }

  if (root.contains("lemmas")) {
    if (cfg.mode != RunMode::lemmas)
      config_fail(text, "lemmas", "\"lemmas\" block is only for mode \"lemmas\"");
    const Json& l = root["lemmas"];
    if (!l.is_object()) config_fail(text, "lemmas", "\"lemmas\" must be an object");
    check_keys(l, {"trials", "dims", "big_k", "tol"}, "lemmas", text);
    cfg.lemmas.trials = get_int(l, text, "trials", cfg.lemmas.trials);
    cfg.lemmas.big_k = get_num(l, text, "big_k", cfg.lemmas.big_k);
    cfg.lemmas.tol = get_num(l, text, "tol", cfg.lemmas.tol);
    if (l.contains("dims")) {
      if (!l["dims"].is_array()) config_fail(text, "dims", "\"dims\" must be an array of [n, m]");
      for (const auto& d : l["dims"]) {
        if (!d.is_array() || d.size() != 2)
          config_fail(text, "dims", "each \"dims\" entry must be a pair [n, m]");
        cfg.lemmas.dims.emplace_back(d[0].get<int>(), d[1].get<int>());
      }
    }
  }
  if (cfg.lemmas.dims.empty())
    for (int n = 2; n <= 4; ++n)
      for (int m = 1; m <= 3; ++m) cfg.lemmas.dims.emplace_back(n, m);

  if (root.contains("nonexistence")) {
    if (cfg.mode != RunMode::nonexistence)
      config_fail(text, "nonexistence", "\"nonexistence\" block is only for mode \"nonexistence\"");
    const Json& x = root["nonexistence"];
    if (!x.is_object()) config_fail(text, "nonexistence", "\"nonexistence\" must be an object");
    check_keys(x, {"eps", "margin", "peak_scale"}, "nonexistence", text);
    cfg.nonexistence.eps = get_num(x, text, "eps", cfg.nonexistence.eps);
    cfg.nonexistence.margin = get_num(x, text, "margin", cfg.nonexistence.margin);
    cfg.nonexistence.peak_scale = get_num(x, text, "peak_scale", cfg.nonexistence.peak_scale);
  }

  if (root.contains("output")) {
    const Json& o = root["output"];
    if (!o.is_object()) config_fail(text, "output", "\"output\" must be an object");
    check_keys(o, {"dump_field", "field_csv", "barrier_csv"}, "output", text);
    cfg.output.dump_field = get_bool(o, text, "dump_field", false);
    cfg.output.field_csv = get_bool(o, text, "field_csv", false);
    cfg.output.barrier_csv = get_bool(o, text, "barrier_csv", false);
  }

  // Full resolved echo (defaults included) for the report.
  using detail_cli::opt_json;
  Json r;
  r["mode"] = to_string(cfg.mode);
  r["seed"] = cfg.seed;
  if (cfg.mode != RunMode::lemmas) r["domain"] = detail_cli::domain_echo(cfg.domain);
  if (!cfg.boundary.empty()) r["boundary"] = Json{{"components", cfg.boundary}};
  r["grid"] = Json{{"h", opt_json(cfg.grid_h)}};
  {
    const SolverConfig& sv = cfg.solver;
    Json s;
    s["sigma"] = sv.sigma;
    s["tol"] = sv.tol;
    s["max_steps"] = sv.max_steps;
    s["psi_cap"] = opt_json(sv.psi_cap);
    s["beta0"] = opt_json(sv.beta0);
    s["blowup_threshold"] = sv.blowup_threshold;
    s["tol_mp"] = opt_json(sv.tol_mp);
    s["eps_margin"] = sv.eps_margin;
    s["newton_tol"] = sv.newton_tol;
    s["newton_max_iters"] = sv.newton_max_iters;
    s["steps"] = sv.steps;
    s["t_min_step"] = sv.t_min_step;
    s["track_lambda"] = sv.track_lambda;
    s["safety"] = sv.safety;
    r["solver"] = s;
  }
  {
    const GeometryOverrides& g = cfg.geometry;
    Json s;
    s["band"] = opt_json(g.band);
    s["lambda_minus"] = opt_json(g.lambda_minus);
    s["d0_regularity"] = opt_json(g.d0_regularity);
    s["min_boundary_H"] = opt_json(g.min_boundary_h);
    s["r_omega"] = opt_json(g.r_omega);
    s["summary_h"] = opt_json(g.summary_h);
    s["mean_convex"] = g.mean_convex ? Json(*g.mean_convex) : Json(nullptr);
    s["convex"] = g.convex ? Json(*g.convex) : Json(nullptr);
    r["geometry"] = s;
  }
  if (cfg.mode == RunMode::lemmas) {
    Json dims = Json::array();
    for (const auto& [n, m] : cfg.lemmas.dims) dims.push_back(Json::array({n, m}));
    r["lemmas"] = Json{{"trials", cfg.lemmas.trials},
                       {"dims", dims},
                       {"big_k", cfg.lemmas.big_k},
                       {"tol", cfg.lemmas.tol}};
  }
  if (cfg.mode == RunMode::nonexistence)
    r["nonexistence"] = Json{{"eps", cfg.nonexistence.eps},
                             {"margin", cfg.nonexistence.margin},
                             {"peak_scale", cfg.nonexistence.peak_scale}};
  r["output"] = Json{{"dump_field", cfg.output.dump_field},
                     {"field_csv", cfg.output.field_csv},
                     {"barrier_csv", cfg.output.barrier_csv}};
  cfg.resolved = std::move(r);
  return cfg;
}

namespace detail_cli {

inline void write_text(const std::string& path, const std::string& content) {
  detail_io::File f(path, "wb");
  f.print(content);
}

inline void write_report(const std::string& out_dir, const Json& report) {
  write_text(out_dir + "/report.json", report.dump(2) + "\n");
}

// Everything time-dependent lives here, never in report.json.
inline void write_meta(const std::string& out_dir, double wall_seconds) {
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  Json meta;
  meta["wall_seconds"] = wall_seconds;
  meta["finished_at"] = stamp;
  write_text(out_dir + "/meta.json", meta.dump(2) + "\n");
}

inline Json verdict_json(const Verdict& v) {
  Json j;
  j["applicable"] = v.applicable;
  j["holds"] = v.holds;
  j["lhs"] = jnum(v.lhs);
  j["rhs"] = jnum(v.rhs);
  j["margin"] = jnum(v.margin);
  j["note"] = v.note;
  return j;
}

inline Json monitor_json(const MonitorSample& row) {
  Json j;
  j["sup_v2"] = jnum(row.sup_v2);
  j["min_theta_interior"] = jnum(row.min_theta_interior);
  j["min_theta_band"] = jnum(row.min_theta_band);
  j["min_theta_parabolic"] = jnum(row.min_theta_parabolic);
  j["max_wedge2"] = jnum(row.max_wedge2);
  j["sup_residual"] = jnum(row.sup_residual);
  j["band_grad"] = jnum(row.band_grad);
  return j;
}

inline Json flow_verdict_json(const MonitorVerdict& v) {
  Json j;
  j["min_principle"] = v.min_principle;
  j["v2_monotone"] = v.v2_monotone;
  j["worst_theta_gap"] = jnum(v.worst_theta_gap);
  j["worst_v2_rise"] = jnum(v.worst_v2_rise);
  j["settled_step"] = v.settled_step;
  return j;
}

inline void write_flow_monitors_csv(const std::string& path,
                                    const std::vector<MonitorSample>& rows) {
  detail_io::File f(path, "wb");
  f.print(
      "step,sup_v2,min_theta_interior,min_theta_band,min_theta_parabolic,"
      "max_wedge2,sup_residual,band_grad\n");
  for (size_t k = 0; k < rows.size(); ++k) {
    const MonitorSample& r = rows[k];
    f.print(std::to_string(k) + "," + detail_io::num(r.sup_v2) + "," +
            detail_io::num(r.min_theta_interior) + "," + detail_io::num(r.min_theta_band) + "," +
            detail_io::num(r.min_theta_parabolic) + "," + detail_io::num(r.max_wedge2) + "," +
            detail_io::num(r.sup_residual) + "," + detail_io::num(r.band_grad) + "\n");
  }
}

inline FlowConfig flow_config(const SolverConfig& sv, int threads) {
  FlowConfig fc;
  fc.sigma = sv.sigma;
  fc.tol = sv.tol;
  fc.max_steps = sv.max_steps;
  if (sv.psi_cap) fc.psi_cap = *sv.psi_cap;
  if (sv.beta0) fc.beta0 = *sv.beta0;
  fc.blowup_threshold = sv.blowup_threshold;
  if (sv.tol_mp) fc.tol_mp = *sv.tol_mp;
  fc.eps_margin = sv.eps_margin;
  fc.threads = threads;
  return fc;
}

// Geometry summary for the conditions mode: fully pinned configs skip the
// distance field; otherwise it is sampled on the config grid (or, when no
// grid is given, on diameter/64) and the overrides are applied on top.
inline GeometrySummary resolve_geometry(const RunConfig& cfg, int threads) {
  const DomainSpec& spec = cfg.domain;
  GeometrySummary geo;
  if (cfg.geometry.analytic()) {
    geo.l = spec.diameter();
    geo.r_omega = cfg.geometry.r_omega ? *cfg.geometry.r_omega : spec.exterior_ball_radius();
    geo.convex = cfg.geometry.convex ? *cfg.geometry.convex : spec.convex();
    geo.lambda_minus = *cfg.geometry.lambda_minus;
    geo.d0_regularity = *cfg.geometry.d0_regularity;
    geo.min_boundary_H = 0.0;
    geo.h = *cfg.geometry.summary_h;
    geo.mean_convex = cfg.geometry.mean_convex ? *cfg.geometry.mean_convex : geo.convex;
    if (cfg.geometry.min_boundary_h) geo.min_boundary_H = *cfg.geometry.min_boundary_h;
    return geo;
  }
  const double h = cfg.grid_h ? *cfg.grid_h : spec.diameter() / 64.0;
  const Grid grid = build_grid(spec, h, threads);
  const double band = cfg.geometry.band ? *cfg.geometry.band : spec.diameter() / 8.0;
  const DistanceField df = distance_field(spec, grid, band, threads);
  geo = geometry_summary(spec, grid, df);
  if (cfg.geometry.lambda_minus) geo.lambda_minus = *cfg.geometry.lambda_minus;
  if (cfg.geometry.d0_regularity) geo.d0_regularity = *cfg.geometry.d0_regularity;
  if (cfg.geometry.min_boundary_h) geo.min_boundary_H = *cfg.geometry.min_boundary_h;
  if (cfg.geometry.r_omega) geo.r_omega = *cfg.geometry.r_omega;
  if (cfg.geometry.summary_h) geo.h = *cfg.geometry.summary_h;
  if (cfg.geometry.mean_convex) geo.mean_convex = *cfg.geometry.mean_convex;
  if (cfg.geometry.convex) geo.convex = *cfg.geometry.convex;
  return geo;
}

inline int run_conditions(const RunConfig& cfg, const std::string& out_dir, int threads) {
  const BoundaryData bd = boundary_from_exprs(cfg.domain, cfg.boundary);
  const GeometrySummary geo = resolve_geometry(cfg, threads);
  const double beta0 = cfg.solver.beta0 ? *cfg.solver.beta0 : 4.0;
  const ConditionReport rep = condition_report(bd, geo, beta0, cfg.solver.safety);

  Json report;
  report["command"] = "check-conditions";
  report["config"] = cfg.resolved;
  Json g;
  g["l"] = jnum(geo.l);
  g["r_omega"] = jnum(geo.r_omega);
  g["lambda_minus"] = jnum(geo.lambda_minus);
  g["d0_regularity"] = jnum(geo.d0_regularity);
  g["min_boundary_H"] = jnum(geo.min_boundary_H);
  g["h"] = jnum(geo.h);
  g["mean_convex"] = geo.mean_convex;
  g["convex"] = geo.convex;
  g["source"] = cfg.geometry.analytic() ? "pinned" : "sampled";
  report["geometry"] = g;
  Json band;
  band["nu"] = jnum(rep.band.nu);
  band["kappa"] = jnum(rep.band.kappa);
  band["d0"] = jnum(rep.band.d0);
  band["psi_cap"] = jnum(rep.band.psi_cap);
  report["band_constants"] = band;
  report["beta0"] = beta0;
  report["safety"] = rep.safety;
  Json conds;
  conds["wang"] = verdict_json(rep.wang);
  conds["convex_condition"] = verdict_json(rep.convex_condition);
  conds["main_condition"] = verdict_json(rep.main_condition);
  conds["continuation_condition"] = verdict_json(rep.continuation_condition);
  report["conditions"] = conds;
  report["thresholds"] = Json{{"eps1", jnum(rep.eps1)},
                              {"eps2", jnum(rep.eps2)},
                              {"delta1", jnum(rep.delta1)},
                              {"delta2", jnum(rep.delta2)}};
  write_report(out_dir, report);

  if (cfg.output.barrier_csv) {
    const Barrier b = log_distance_barrier(rep.band.nu, rep.band.kappa, rep.band.d0,
                                           bd.dphi0() * geo.l);
    dump_barrier_csv(b, out_dir + "/barrier_log_distance.csv");
  }
  return 0;
}

inline int run_flow_mode(const RunConfig& cfg, const std::string& out_dir, int threads) {
  const BoundaryData bd = boundary_from_exprs(cfg.domain, cfg.boundary);
  const Grid grid = build_grid(cfg.domain, *cfg.grid_h, threads);
  const DiffOps ops(grid);
  const FlowResult res = flow_run(ops, bd, flow_config(cfg.solver, threads));

  Json report;
  report["command"] = "solve-flow";
  report["config"] = cfg.resolved;
  report["outcome"] = to_string(res.outcome);
  report["note"] = res.note;
  report["steps"] = res.steps;
  report["inside_nodes"] = grid.inside_count();
  report["final"] = monitor_json(res.monitors.back());
  report["verdict"] = flow_verdict_json(res.verdict);
  // The beta0 certificate: granted only when the convex-domain smallness
  // condition actually holds for the data AND the run converged inside the
  // det-g cap.  A run on data that violates the condition still executes
  // and records its outcome, but the certificate is withheld.
  if (cfg.solver.beta0) {
    const GeometrySummary geo = resolve_geometry(cfg, threads);
    const Verdict cond = check_convex_condition(bd, geo, *cfg.solver.beta0);
    const bool inside = res.outcome == FlowOutcome::converged &&
                        res.monitors.back().sup_v2 < *cfg.solver.beta0;
    report["beta0_certificate"] =
        Json{{"granted", cond.holds && inside},
             {"condition", verdict_json(cond)},
             {"beta0", *cfg.solver.beta0},
             {"final_sup_v2", jnum(res.monitors.back().sup_v2)}};
  }
  write_report(out_dir, report);
  write_flow_monitors_csv(out_dir + "/monitors.csv", res.monitors);
  if (cfg.output.dump_field) dump_field(res.f, out_dir + "/field.bin");
  if (cfg.output.field_csv) dump_field_csv(res.f, out_dir + "/field.csv");
  return res.outcome == FlowOutcome::converged ? 0 : 2;
}

inline int run_continuation_mode(const RunConfig& cfg, const std::string& out_dir, int threads) {
  const BoundaryData bd = boundary_from_exprs(cfg.domain, cfg.boundary);
  const Grid grid = build_grid(cfg.domain, *cfg.grid_h, threads);
  const DiffOps ops(grid);

  ContinuationOptions opts;
  opts.newton.tol = cfg.solver.newton_tol;
  opts.newton.max_iters = static_cast<int>(cfg.solver.newton_max_iters);
  opts.newton.threads = threads;
  if (cfg.solver.psi_cap) opts.psi_cap = *cfg.solver.psi_cap;
  opts.t_min_step = cfg.solver.t_min_step;
  opts.track_lambda = cfg.solver.track_lambda;

  Json report;
  report["command"] = "solve-continuation";
  report["config"] = cfg.resolved;
  report["inside_nodes"] = grid.inside_count();
  std::vector<ContinuationState> path;
  try {
    path = continuation_run(ops, bd, static_cast<int>(cfg.solver.steps), opts);
  } catch (const Error& err) {
    if (err.code() != "PathStuck" && err.code() != "NoConvergence") throw;
    report["outcome"] = err.code();
    report["note"] = err.what();
    write_report(out_dir, report);
    return 2;
  }
  report["outcome"] = "converged";
  Json states = Json::array();
  for (const auto& st : path) {
    Json s;
    s["t"] = jnum(st.t);
    s["sup_v2"] = jnum(st.sup_v2);
    s["min_theta"] = jnum(st.min_theta);
    s["lambda_star"] = jnum(st.lambda_star);
    states.push_back(s);
  }
  report["path"] = states;
  report["final_residual"] = jnum(sup_norm(residual(ops, path.back().u, threads)));
  write_report(out_dir, report);

  detail_io::File f(out_dir + "/monitors.csv", "wb");
  f.print("t,sup_v2,min_theta,lambda_star\n");
  for (const auto& st : path)
    f.print(detail_io::num(st.t) + "," + detail_io::num(st.sup_v2) + "," +
            detail_io::num(st.min_theta) + "," + detail_io::num(st.lambda_star) + "\n");
  if (cfg.output.dump_field) dump_field(path.back().u, out_dir + "/field.bin");
  if (cfg.output.field_csv) dump_field_csv(path.back().u, out_dir + "/field.csv");
  return 0;
}

inline int run_lemmas_mode(const RunConfig& cfg, const std::string& out_dir, int threads) {
  Json entries = Json::array();
  int64_t total_violations = 0;
  for (const LemmaId id :
       {LemmaId::det_sum_bound, LemmaId::det_nine_bound, LemmaId::pair_product_bound}) {
    for (const auto& [n, m] : cfg.lemmas.dims) {
      if (id == LemmaId::pair_product_bound && m < 2) continue;  // outside its hypotheses
      const LemmaReport rep = verify_lemma(id, n, m, cfg.lemmas.trials, cfg.seed,
                                           cfg.lemmas.big_k, threads, cfg.lemmas.tol);
      total_violations += rep.violations;
      Json e;
      e["lemma"] = to_string(id);
      e["n"] = n;
      e["m"] = m;
      e["trials"] = rep.trials;
      e["violations"] = rep.violations;
      e["invalid_samples"] = rep.invalid_samples;
      e["min_slack"] = jnum(rep.min_slack);
      e["worst_quantity"] = jnum(rep.worst_quantity);
      entries.push_back(e);
    }
  }
  Json report;
  report["command"] = "verify-lemmas";
  report["config"] = cfg.resolved;
  report["results"] = entries;
  report["total_violations"] = total_violations;
  report["all_hold"] = total_violations == 0;
  write_report(out_dir, report);
  return 0;
}

inline int run_nonexistence_mode(const RunConfig& cfg, const std::string& out_dir, int threads) {
  const NonexistenceConfig& nx = cfg.nonexistence;
  const NonexistenceData nd = make_nonexistence_data(cfg.domain, nx.eps, nx.margin, *cfg.grid_h,
                                                     cfg.seed != 0 ? cfg.seed : 20240824,
                                                     nx.peak_scale);
  const Grid grid = build_grid(cfg.domain, *cfg.grid_h, threads);
  const DiffOps ops(grid);
  const FlowResult res = flow_run(ops, nd.data, flow_config(cfg.solver, threads));

  Json report;
  report["command"] = "nonexistence-demo";
  report["config"] = cfg.resolved;
  Json c;
  c["a"] = jnum(nd.a);
  c["threshold"] = jnum(nd.threshold);
  c["peak"] = jnum(nd.peak);
  c["conclusive"] = nd.conclusive;
  Json q = Json::array(), dir = Json::array();
  for (int i = 0; i < cfg.domain.n; ++i) {
    q.push_back(nd.q[i]);
    dir.push_back(nd.direction[i]);
  }
  c["q"] = q;
  c["direction"] = dir;
  c["certificate_points"] = nd.certificate.size();
  report["construction"] = c;
  report["outcome"] = to_string(res.outcome);
  report["note"] = res.note;
  report["steps"] = res.steps;
  report["final"] = monitor_json(res.monitors.back());
  write_report(out_dir, report);
  write_flow_monitors_csv(out_dir + "/monitors.csv", res.monitors);
  if (cfg.output.dump_field) dump_field(res.f, out_dir + "/field.bin");
  if (cfg.output.field_csv) dump_field_csv(res.f, out_dir + "/field.csv");
  // The demo succeeds when the flow reaches any definitive outcome; only
  // an exhausted step budget (neither existence nor breakdown observed)
  // counts as non-convergence.
  return res.outcome == FlowOutcome::max_steps ? 2 : 0;
}

}  // namespace detail_cli

inline int run_cli(const std::vector<std::string>& args) {
  using namespace detail_cli;
  static const std::string usage =
      "usage: mingraph <solve-flow|solve-continuation|check-conditions|verify-lemmas|"
      "nonexistence-demo> --config PATH [--out DIR] [--seed N] [--threads N]\n";
  if (args.empty()) {
    std::cerr << usage;
    return 3;
  }
  const std::string sub = args[0];
  RunMode want;
  if (sub == "solve-flow") want = RunMode::flow;
  else if (sub == "solve-continuation") want = RunMode::continuation;
  else if (sub == "check-conditions") want = RunMode::conditions;
  else if (sub == "verify-lemmas") want = RunMode::lemmas;
  else if (sub == "nonexistence-demo") want = RunMode::nonexistence;
  else {
    std::cerr << "unknown subcommand \"" << sub << "\"\n" << usage;
    return 3;
  }

  std::string config_path, out_dir = ".";
  std::optional<uint64_t> seed_override;
  int threads = 0;
  for (size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    auto next = [&]() -> const std::string& {
      if (i + 1 >= args.size()) throw Error("ConfigError", a + " needs a value");
      return args[++i];
    };
    try {
      if (a == "--config") config_path = next();
      else if (a == "--out") out_dir = next();
      else if (a == "--seed") seed_override = std::stoull(next());
      else if (a == "--threads") threads = std::stoi(next());
      else throw Error("ConfigError", "unknown flag \"" + a + "\"");
    } catch (const Error& err) {
      std::cerr << err.what() << "\n" << usage;
      return 3;
    } catch (const std::exception&) {
      std::cerr << a << " needs a numeric value\n";
      return 3;
    }
  }
  if (threads <= 0) {
    if (const char* env = std::getenv("MINGRAPH_THREADS")) threads = std::atoi(env);
  }
  if (config_path.empty()) {
    std::cerr << "--config is required\n" << usage;
    return 3;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw Error("ConfigError", "cannot read config " + config_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    RunConfig cfg = parse_config(text);
    if (cfg.mode != want)
      throw Error("ConfigError", "config mode \"" + std::string(to_string(cfg.mode)) +
                                     "\" does not match subcommand \"" + sub + "\"");
    if (seed_override) {
      cfg.seed = *seed_override;
      cfg.resolved["seed"] = cfg.seed;
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error("IoFailure", "cannot create output directory " + out_dir);

    int rc = 0;
    switch (cfg.mode) {
      case RunMode::flow: rc = run_flow_mode(cfg, out_dir, threads); break;
      case RunMode::continuation: rc = run_continuation_mode(cfg, out_dir, threads); break;
      case RunMode::conditions: rc = run_conditions(cfg, out_dir, threads); break;
      case RunMode::lemmas: rc = run_lemmas_mode(cfg, out_dir, threads); break;
      case RunMode::nonexistence: rc = run_nonexistence_mode(cfg, out_dir, threads); break;
    }
    write_meta(out_dir,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return rc;
  } catch (const Error& err) {
    std::cerr << err.what() << "\n";
    if (err.code() == "NoConvergence" || err.code() == "PathStuck") return 2;
    return 3;
  } catch (const ExprError& err) {
    std::cerr << "boundary expression: " << err.what() << "\n";
    return 3;
  } catch (const std::exception& err) {
    std::cerr << err.what() << "\n";
    return 3;
  }
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace mingraph
