// SPDX-License-Identifier: Apache-2.0
//
// JSON job configurations and the spectrum / sweep / dof / verify runners
// behind the command-line tool.
#pragma once

#include "dofkit/dof.hpp"
#include "dofkit/error.hpp"
#include "dofkit/geometry.hpp"
#include "dofkit/kernel.hpp"
#include "dofkit/operator.hpp"
#include "dofkit/spectrum.hpp"

#include "json.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace dofkit {

inline constexpr const char *kVersion = "0.1.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int check_failed = 1;
inline constexpr int config = 2;
inline constexpr int numerical = 3;
inline constexpr int partial_sweep = 4;
} // namespace exit_code

// ---------------------------------------------------------------------------
// Configuration

struct SurfaceConfig {
  std::string kind = "sphere"; ///< sphere | cylinder | spheroid | area
  double radius = 0.0;
  double height = 0.0;
  double a = 0.0;
  double c = 0.0;
  double value = 0.0;
  bool operator==(const SurfaceConfig &) const = default;
};

struct GeometryConfig {
  /// interval_band | boxes | circular | spherical | modulated_circular |
  /// modulated_spherical | modulated_rotational | rotational
  std::string kind;
  double omega = 0.0;
  double duration = 0.0;
  double radius = 0.0;
  double omega_1 = 0.0;
  double omega_2 = 0.0;
  std::vector<double> p_lower, p_upper, q_half_widths;
  SurfaceConfig surface;
  bool operator==(const GeometryConfig &) const = default;
};

struct ScalingConfig {
  std::string kind = "none"; ///< none | landau | anisotropic | diagonal
  std::vector<double> betas;
  std::vector<double> taus, rhos;
  std::string mode = "grid"; ///< grid | paired
  std::vector<double> a, b;  ///< diagonal entries
  bool operator==(const ScalingConfig &) const = default;
};

struct ResolutionConfig {
  double oversampling = 2.0;
  std::vector<std::size_t> points;
  bool enforce_nyquist = true;
  std::string dense = "auto"; ///< auto | always | never
  std::optional<std::size_t> dense_cap;
  bool operator==(const ResolutionConfig &) const = default;
};

struct EigenConfig {
  std::size_t count = 0; ///< 0 = all (dense only)
  std::string method = "auto"; ///< auto | dense | matrix_free
  double tolerance = 1e-10;
  std::size_t max_cycles = 200;
  bool operator==(const EigenConfig &) const = default;
};

struct DofConfig {
  double epsilon = std::numbers::sqrt2 / 2.0;
  bool empirical = true;
  /// When set, |relative_gap| above this at any empirical point fails the run (exit 1).
  std::optional<double> max_relative_gap;
  bool operator==(const DofConfig &) const = default;
};

struct VerifyConfig {
  std::size_t kernel_offsets = 100;
  double range_tolerance = 1e-6;
  double trace_tolerance = 1e-2;
  double agreement_tolerance = 1e-8;
  double kernel_tolerance = 1e-9;
  double heuristic_tolerance = 1e-8;
  bool operator==(const VerifyConfig &) const = default;
};

struct OutputConfig {
  std::string dir = "out";
  bool dump_matrix = false;
  bool operator==(const OutputConfig &) const = default;
};

struct JobConfig {
  std::string command; ///< spectrum | sweep | dof | verify (may be given on the command line)
  GeometryConfig geometry;
  ScalingConfig scaling;
  ResolutionConfig resolution;
  EigenConfig eigen;
  std::vector<double> epsilons = default_epsilons();
  DofConfig dof;
  VerifyConfig verify;
  OutputConfig output;
  std::uint64_t seed = 1;
  bool operator==(const JobConfig &) const = default;
};

namespace detail {

using json = nlohmann::ordered_json;

inline void reject_unknown(const json &obj, const std::string &where, std::initializer_list<const char *> keys) {
  if (!obj.is_object())
    throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char *k : keys)
      known = known || it.key() == k;
    if (!known)
      throw ConfigError(where + ": unknown field '" + it.key() + "'");
  }
}

inline std::string field(const std::string &where, const char *key) {
  return where.empty() ? std::string(key) : where + "." + key;
}

inline double get_number(const json &obj, const std::string &where, const char *key, double fallback) {
  if (!obj.contains(key))
    return fallback;
  const auto &v = obj.at(key);
  if (!v.is_number())
    throw ConfigError(field(where, key) + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d))
    throw ConfigError(field(where, key) + ": must be finite");
  return d;
}

inline std::size_t get_count(const json &obj, const std::string &where, const char *key, std::size_t fallback) {
  if (!obj.contains(key))
    return fallback;
  const auto &v = obj.at(key);
  if (!v.is_number_unsigned())
    throw ConfigError(field(where, key) + ": expected a nonnegative integer");
  return v.get<std::size_t>();
}

inline bool get_bool(const json &obj, const std::string &where, const char *key, bool fallback) {
  if (!obj.contains(key))
    return fallback;
  const auto &v = obj.at(key);
  if (!v.is_boolean())
    throw ConfigError(field(where, key) + ": expected true or false");
  return v.get<bool>();
}

inline std::string get_string(const json &obj, const std::string &where, const char *key, std::string fallback,
                              std::initializer_list<const char *> allowed) {
  if (!obj.contains(key))
    return fallback;
  const auto &v = obj.at(key);
  if (!v.is_string())
    throw ConfigError(field(where, key) + ": expected a string");
  std::string s = v.get<std::string>();
  if (allowed.size() == 0)
    return s;
  std::string options;
  for (const char *a : allowed) {
    if (s == a)
      return s;
    options += options.empty() ? a : std::string(", ") + a;
  }
  throw ConfigError(field(where, key) + ": '" + s + "' is not one of " + options);
}

inline std::vector<double> get_numbers(const json &obj, const std::string &where, const char *key,
                                       std::vector<double> fallback) {
  if (!obj.contains(key))
    return fallback;
  const auto &v = obj.at(key);
  if (!v.is_array())
    throw ConfigError(field(where, key) + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number())
      throw ConfigError(field(where, key) + "[" + std::to_string(i) + "]: expected a number");
    out.push_back(v[i].get<double>());
    if (!std::isfinite(out.back()))
      throw ConfigError(field(where, key) + "[" + std::to_string(i) + "]: must be finite");
  }
  return out;
}

inline std::vector<std::size_t> get_counts(const json &obj, const std::string &where, const char *key) {
  if (!obj.contains(key))
    return {};
  const auto &v = obj.at(key);
  if (!v.is_array())
    throw ConfigError(field(where, key) + ": expected an array of integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_unsigned() || v[i].get<std::size_t>() == 0)
      throw ConfigError(field(where, key) + "[" + std::to_string(i) + "]: expected a positive integer");
    out.push_back(v[i].get<std::size_t>());
  }
  return out;
}

inline void require_nonneg_field(double v, const std::string &name) {
  if (!(v >= 0.0))
    throw ConfigError(name + ": must be nonnegative");
}

inline SurfaceConfig parse_surface(const json &j) {
  const std::string w = "geometry.surface";
  reject_unknown(j, w, {"kind", "radius", "height", "a", "c", "value"});
  SurfaceConfig s;
  s.kind = get_string(j, w, "kind", "", {"sphere", "cylinder", "spheroid", "area"});
  if (s.kind.empty())
    throw ConfigError(w + ".kind: missing");
  if (s.kind == "sphere") {
    reject_unknown(j, w, {"kind", "radius"});
    s.radius = get_number(j, w, "radius", -1.0);
    require_nonneg_field(s.radius, w + ".radius");
  } else if (s.kind == "cylinder") {
    reject_unknown(j, w, {"kind", "radius", "height"});
    s.radius = get_number(j, w, "radius", -1.0);
    s.height = get_number(j, w, "height", -1.0);
    require_nonneg_field(s.radius, w + ".radius");
    require_nonneg_field(s.height, w + ".height");
  } else if (s.kind == "spheroid") {
    reject_unknown(j, w, {"kind", "a", "c"});
    s.a = get_number(j, w, "a", -1.0);
    s.c = get_number(j, w, "c", -1.0);
    require_nonneg_field(s.a, w + ".a");
    require_nonneg_field(s.c, w + ".c");
  } else {
    reject_unknown(j, w, {"kind", "value"});
    s.value = get_number(j, w, "value", -1.0);
    require_nonneg_field(s.value, w + ".value");
  }
  return s;
}

inline GeometryConfig parse_geometry(const json &j) {
  const std::string w = "geometry";
  if (!j.is_object())
    throw ConfigError("geometry: expected an object");
  GeometryConfig g;
  g.kind = get_string(j, w, "kind", "",
                      {"interval_band", "boxes", "circular", "spherical", "modulated_circular",
                       "modulated_spherical", "modulated_rotational", "rotational"});
  if (g.kind.empty())
    throw ConfigError("geometry.kind: missing");
  auto need = [&](const char *key) {
    if (!j.contains(key))
      throw ConfigError(field(w, key) + ": missing");
    const double v = get_number(j, w, key, 0.0);
    require_nonneg_field(v, field(w, key));
    return v;
  };
  if (g.kind == "interval_band") {
    reject_unknown(j, w, {"kind", "omega", "duration"});
    g.omega = need("omega");
    g.duration = need("duration");
  } else if (g.kind == "boxes") {
    reject_unknown(j, w, {"kind", "p_lower", "p_upper", "q_half_widths"});
    g.p_lower = get_numbers(j, w, "p_lower", {});
    g.p_upper = get_numbers(j, w, "p_upper", {});
    g.q_half_widths = get_numbers(j, w, "q_half_widths", {});
    if (g.p_lower.empty() || g.p_lower.size() != g.p_upper.size() ||
        g.p_lower.size() != g.q_half_widths.size())
      throw ConfigError("geometry: p_lower, p_upper and q_half_widths need one equal, nonzero length");
    for (std::size_t i = 0; i < g.p_lower.size(); ++i) {
      if (g.p_upper[i] < g.p_lower[i])
        throw ConfigError("geometry.p_upper[" + std::to_string(i) + "]: below p_lower");
      require_nonneg_field(g.q_half_widths[i], "geometry.q_half_widths[" + std::to_string(i) + "]");
    }
  } else if (g.kind == "circular" || g.kind == "spherical") {
    reject_unknown(j, w, {"kind", "omega", "duration", "radius"});
    g.omega = need("omega");
    g.duration = need("duration");
    g.radius = need("radius");
  } else if (g.kind == "modulated_circular" || g.kind == "modulated_spherical") {
    reject_unknown(j, w, {"kind", "duration", "omega_1", "omega_2", "radius"});
    g.duration = need("duration");
    g.omega_1 = need("omega_1");
    g.omega_2 = need("omega_2");
    g.radius = need("radius");
  } else if (g.kind == "modulated_rotational") {
    reject_unknown(j, w, {"kind", "duration", "omega_1", "omega_2", "surface"});
    g.duration = need("duration");
    g.omega_1 = need("omega_1");
    g.omega_2 = need("omega_2");
    if (!j.contains("surface"))
      throw ConfigError("geometry.surface: missing");
    g.surface = parse_surface(j.at("surface"));
  } else {
    reject_unknown(j, w, {"kind", "omega", "duration", "surface"});
    g.omega = need("omega");
    g.duration = need("duration");
    if (!j.contains("surface"))
      throw ConfigError("geometry.surface: missing");
    g.surface = parse_surface(j.at("surface"));
  }
  if (g.kind.rfind("modulated", 0) == 0 && !(g.omega_1 > 0.0 && g.omega_2 > g.omega_1))
    throw ConfigError("geometry: need 0 < omega_1 < omega_2");
  return g;
}

inline ScalingConfig parse_scaling(const json &j) {
  const std::string w = "scaling";
  if (!j.is_object())
    throw ConfigError("scaling: expected an object");
  ScalingConfig s;
  s.kind = get_string(j, w, "kind", "none", {"none", "landau", "anisotropic", "diagonal"});
  auto positive_list = [&](const char *key) {
    auto v = get_numbers(j, w, key, {});
    if (v.empty())
      throw ConfigError(field(w, key) + ": needs at least one value");
    for (double x : v)
      if (!(x > 0.0))
        throw ConfigError(field(w, key) + ": values must be positive");
    return v;
  };
  if (s.kind == "none") {
    reject_unknown(j, w, {"kind"});
  } else if (s.kind == "landau") {
    reject_unknown(j, w, {"kind", "betas"});
    s.betas = positive_list("betas");
    for (std::size_t i = 1; i < s.betas.size(); ++i)
      if (!(s.betas[i] > s.betas[i - 1]))
        throw ConfigError("scaling.betas: must be increasing");
  } else if (s.kind == "anisotropic") {
    reject_unknown(j, w, {"kind", "taus", "rhos", "mode"});
    s.taus = positive_list("taus");
    s.rhos = positive_list("rhos");
    s.mode = get_string(j, w, "mode", "grid", {"grid", "paired"});
    if (s.mode == "paired" && s.taus.size() != s.rhos.size())
      throw ConfigError("scaling: paired mode needs taus and rhos of equal length");
  } else {
    reject_unknown(j, w, {"kind", "a", "b"});
    s.a = get_numbers(j, w, "a", {});
    s.b = get_numbers(j, w, "b", {});
    for (double x : s.a)
      if (x == 0.0)
        throw ConfigError("scaling.a: singular map");
    for (double x : s.b)
      if (x == 0.0)
        throw ConfigError("scaling.b: singular map");
  }
  return s;
}

inline json to_json(const GeometryConfig &g) {
  json j;
  j["kind"] = g.kind;
  auto surface = [&] {
    json s;
    s["kind"] = g.surface.kind;
    if (g.surface.kind == "sphere") {
      s["radius"] = g.surface.radius;
    } else if (g.surface.kind == "cylinder") {
      s["radius"] = g.surface.radius;
      s["height"] = g.surface.height;
    } else if (g.surface.kind == "spheroid") {
      s["a"] = g.surface.a;
      s["c"] = g.surface.c;
    } else {
      s["value"] = g.surface.value;
    }
    return s;
  };
  if (g.kind == "interval_band") {
    j["omega"] = g.omega;
    j["duration"] = g.duration;
  } else if (g.kind == "boxes") {
    j["p_lower"] = g.p_lower;
    j["p_upper"] = g.p_upper;
    j["q_half_widths"] = g.q_half_widths;
  } else if (g.kind == "circular" || g.kind == "spherical") {
    j["omega"] = g.omega;
    j["duration"] = g.duration;
    j["radius"] = g.radius;
  } else if (g.kind == "modulated_circular" || g.kind == "modulated_spherical") {
    j["duration"] = g.duration;
    j["omega_1"] = g.omega_1;
    j["omega_2"] = g.omega_2;
    j["radius"] = g.radius;
  } else if (g.kind == "modulated_rotational") {
    j["duration"] = g.duration;
    j["omega_1"] = g.omega_1;
    j["omega_2"] = g.omega_2;
    j["surface"] = surface();
  } else {
    j["omega"] = g.omega;
    j["duration"] = g.duration;
    j["surface"] = surface();
  }
  return j;
}

inline json to_json(const ScalingConfig &s) {
  json j;
  j["kind"] = s.kind;
  if (s.kind == "landau") {
    j["betas"] = s.betas;
  } else if (s.kind == "anisotropic") {
    j["taus"] = s.taus;
    j["rhos"] = s.rhos;
    j["mode"] = s.mode;
  } else if (s.kind == "diagonal") {
    j["a"] = s.a;
    j["b"] = s.b;
  }
  return j;
}

} // namespace detail

/// Parses a job configuration; unknown fields and malformed values raise
/// ConfigError naming the offending field (or line and column for syntax).
inline JobConfig parse_job(const std::string &text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  detail::reject_unknown(j, "config",
                         {"command", "geometry", "scaling", "resolution", "eigen", "epsilons", "dof",
                          "verify", "output", "seed"});
  JobConfig c;
  c.command = detail::get_string(j, "", "command", "", {"spectrum", "sweep", "dof", "verify"});
  if (!j.contains("geometry"))
    throw ConfigError("geometry: missing");
  c.geometry = detail::parse_geometry(j.at("geometry"));
  if (j.contains("scaling"))
    c.scaling = detail::parse_scaling(j.at("scaling"));

  if (j.contains("resolution")) {
    const auto &r = j.at("resolution");
    detail::reject_unknown(r, "resolution", {"oversampling", "points", "enforce_nyquist", "dense", "dense_cap"});
    c.resolution.oversampling = detail::get_number(r, "resolution", "oversampling", 2.0);
    if (!(c.resolution.oversampling > 0.0))
      throw ConfigError("resolution.oversampling: must be positive");
    c.resolution.points = detail::get_counts(r, "resolution", "points");
    c.resolution.enforce_nyquist = detail::get_bool(r, "resolution", "enforce_nyquist", true);
    c.resolution.dense = detail::get_string(r, "resolution", "dense", "auto", {"auto", "always", "never"});
    if (r.contains("dense_cap"))
      c.resolution.dense_cap = detail::get_count(r, "resolution", "dense_cap", 0);
  }
  if (j.contains("eigen")) {
    const auto &e = j.at("eigen");
    detail::reject_unknown(e, "eigen", {"count", "method", "tolerance", "max_cycles"});
    c.eigen.count = detail::get_count(e, "eigen", "count", 0);
    c.eigen.method = detail::get_string(e, "eigen", "method", "auto", {"auto", "dense", "matrix_free"});
    c.eigen.tolerance = detail::get_number(e, "eigen", "tolerance", 1e-10);
    c.eigen.max_cycles = detail::get_count(e, "eigen", "max_cycles", 200);
    if (!(c.eigen.tolerance > 0.0))
      throw ConfigError("eigen.tolerance: must be positive");
  }
  if (j.contains("epsilons")) {
    c.epsilons = detail::get_numbers(j, "", "epsilons", {});
    if (c.epsilons.empty())
      throw ConfigError("epsilons: needs at least one level");
    for (double e : c.epsilons)
      if (!(e > 0.0 && e < 1.0))
        throw ConfigError("epsilons: levels must lie in (0, 1)");
  }
  if (j.contains("dof")) {
    const auto &d = j.at("dof");
    detail::reject_unknown(d, "dof", {"epsilon", "empirical", "max_relative_gap"});
    c.dof.epsilon = detail::get_number(d, "dof", "epsilon", c.dof.epsilon);
    c.dof.empirical = detail::get_bool(d, "dof", "empirical", true);
    if (d.contains("max_relative_gap")) {
      c.dof.max_relative_gap = detail::get_number(d, "dof", "max_relative_gap", 0.0);
      if (!(*c.dof.max_relative_gap >= 0.0))
        throw ConfigError("dof.max_relative_gap: must be nonnegative");
    }
    if (!(c.dof.epsilon > 0.0 && c.dof.epsilon < 1.0))
      throw ConfigError("dof.epsilon: must lie in (0, 1)");
  }
  if (j.contains("verify")) {
    const auto &v = j.at("verify");
    detail::reject_unknown(v, "verify",
                           {"kernel_offsets", "range_tolerance", "trace_tolerance", "agreement_tolerance",
                            "kernel_tolerance", "heuristic_tolerance"});
    VerifyConfig d;
    c.verify.kernel_offsets = detail::get_count(v, "verify", "kernel_offsets", d.kernel_offsets);
    c.verify.range_tolerance = detail::get_number(v, "verify", "range_tolerance", d.range_tolerance);
    c.verify.trace_tolerance = detail::get_number(v, "verify", "trace_tolerance", d.trace_tolerance);
    c.verify.agreement_tolerance = detail::get_number(v, "verify", "agreement_tolerance", d.agreement_tolerance);
    c.verify.kernel_tolerance = detail::get_number(v, "verify", "kernel_tolerance", d.kernel_tolerance);
    c.verify.heuristic_tolerance = detail::get_number(v, "verify", "heuristic_tolerance", d.heuristic_tolerance);
  }
  if (j.contains("output")) {
    const auto &o = j.at("output");
    detail::reject_unknown(o, "output", {"dir", "dump_matrix"});
    c.output.dir = detail::get_string(o, "output", "dir", "out", {});
    c.output.dump_matrix = detail::get_bool(o, "output", "dump_matrix", false);
  }
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned())
      throw ConfigError("seed: expected a nonnegative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  return c;
}

/// Canonical JSON with every default spelled out; parse_job(serialize_job(c)) == c.
inline std::string serialize_job(const JobConfig &c) {
  detail::json j;
  if (!c.command.empty())
    j["command"] = c.command;
  j["geometry"] = detail::to_json(c.geometry);
  j["scaling"] = detail::to_json(c.scaling);
  detail::json r;
  r["oversampling"] = c.resolution.oversampling;
  if (!c.resolution.points.empty())
    r["points"] = c.resolution.points;
  r["enforce_nyquist"] = c.resolution.enforce_nyquist;
  r["dense"] = c.resolution.dense;
  if (c.resolution.dense_cap)
    r["dense_cap"] = *c.resolution.dense_cap;
  j["resolution"] = r;
  j["eigen"] = {{"count", c.eigen.count},
                {"method", c.eigen.method},
                {"tolerance", c.eigen.tolerance},
                {"max_cycles", c.eigen.max_cycles}};
  j["epsilons"] = c.epsilons;
  j["dof"] = {{"epsilon", c.dof.epsilon}, {"empirical", c.dof.empirical}};
  if (c.dof.max_relative_gap)
    j["dof"]["max_relative_gap"] = *c.dof.max_relative_gap;
  j["verify"] = {{"kernel_offsets", c.verify.kernel_offsets},
                 {"range_tolerance", c.verify.range_tolerance},
                 {"trace_tolerance", c.verify.trace_tolerance},
                 {"agreement_tolerance", c.verify.agreement_tolerance},
                 {"kernel_tolerance", c.verify.kernel_tolerance},
                 {"heuristic_tolerance", c.verify.heuristic_tolerance}};
  j["output"] = {{"dir", c.output.dir}, {"dump_matrix", c.output.dump_matrix}};
  j["seed"] = c.seed;
  return j.dump(2) + "\n";
}

inline JobConfig load_job(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_job(ss.str());
}

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string &text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

// ---------------------------------------------------------------------------
// Problem construction from a configuration

/// The (P, Q) pair of a geometry, its base closed-form count, and whether it
/// is degenerate (zero spectral or spatial extent).
struct Problem {
  std::optional<CutSets> sets;
  std::optional<double> closed_form; ///< unscaled leading term, when a calculator exists
  std::optional<CutGeometry> cut;    ///< for the frequency-integrated cross-check
  double heuristic_lo = 0.0, heuristic_hi = 0.0, duration = 0.0;
  std::optional<ModulatedDof> modulated;
  bool degenerate = false;
  int dimension = 0;
};

inline double surface_area_of(const SurfaceConfig &s) {
  if (s.kind == "sphere")
    return surface_area(RotationalDomain::sphere(s.radius));
  if (s.kind == "cylinder")
    return surface_area(RotationalDomain::cylinder(s.radius, s.height));
  if (s.kind == "spheroid")
    return surface_area(RotationalDomain::spheroid(s.a, s.c));
  return s.value;
}

inline Problem build_problem(const GeometryConfig &g) {
  Problem pr;
  const std::string &k = g.kind;
  if (k == "interval_band") {
    pr.dimension = 1;
    pr.closed_form = time_bandwidth_product(g.omega, g.duration);
    pr.degenerate = g.omega == 0.0 || g.duration == 0.0;
    pr.sets = CutSets{SupportSet::centered_box({g.duration / 2}), SupportSet::centered_box({g.omega})};
  } else if (k == "boxes") {
    pr.dimension = static_cast<int>(g.p_lower.size());
    pr.sets = CutSets{SupportSet::box(g.p_lower, g.p_upper), SupportSet::centered_box(g.q_half_widths)};
    for (double w : g.q_half_widths)
      pr.degenerate = pr.degenerate || w == 0.0;
  } else if (k == "circular" || k == "spherical") {
    const bool circ = k == "circular";
    pr.dimension = circ ? 2 : 3;
    pr.closed_form = circ ? dof_circular(g.omega, g.duration, g.radius)
                          : dof_spherical(g.omega, g.duration, g.radius);
    pr.cut = circ ? CutGeometry::circular(g.radius) : CutGeometry::spherical(g.radius);
    pr.heuristic_hi = g.omega;
    pr.duration = g.duration;
    pr.degenerate = g.omega == 0.0 || g.duration == 0.0 || g.radius == 0.0;
    if (!pr.degenerate)
      pr.sets = circ ? build_circular_cut_sets(g.omega, g.duration, g.radius)
                     : build_spherical_cut_sets(g.omega, g.duration, g.radius);
  } else if (k == "modulated_circular" || k == "modulated_spherical" || k == "modulated_rotational") {
    CutGeometry cut = k == "modulated_circular"    ? CutGeometry::circular(g.radius)
                      : k == "modulated_spherical" ? CutGeometry::spherical(g.radius)
                                                   : CutGeometry::rotational(surface_area_of(g.surface));
    pr.dimension = k == "modulated_circular" ? 2 : 0;
    pr.modulated = dof_modulated(g.duration, g.omega_1, g.omega_2, cut);
    pr.closed_form = pr.modulated->leading_term;
    pr.cut = cut;
    pr.heuristic_lo = g.omega_1;
    pr.heuristic_hi = g.omega_2;
    pr.duration = g.duration;
    pr.degenerate = g.duration == 0.0 || cut.size == 0.0;
    if (k == "modulated_circular" && !pr.degenerate)
      pr.sets = build_modulated_circular_cut_sets(g.duration, g.omega_1, g.omega_2, g.radius);
  } else {
    const double area = surface_area_of(g.surface);
    pr.closed_form = dof_rotational(area, g.omega, g.duration);
    pr.cut = CutGeometry::rotational(area);
    pr.heuristic_hi = g.omega;
    pr.duration = g.duration;
    pr.degenerate = g.omega == 0.0 || g.duration == 0.0 || area == 0.0;
  }
  return pr;
}

inline std::vector<ScalingPoint> scaling_points(const ScalingConfig &s, int dimension) {
  if (s.kind == "none")
    return {ScalingPoint{LinearMap::identity(dimension), LinearMap::identity(dimension), {}}};
  if (s.kind == "landau")
    return landau_points(dimension, s.betas);
  if (s.kind == "anisotropic")
    return anisotropic_points(dimension, s.taus, s.rhos, s.mode == "paired");
  std::vector<double> a = s.a.empty() ? std::vector<double>(static_cast<std::size_t>(dimension), 1.0) : s.a;
  std::vector<double> b = s.b.empty() ? std::vector<double>(static_cast<std::size_t>(dimension), 1.0) : s.b;
  if (a.size() != static_cast<std::size_t>(dimension) || b.size() != static_cast<std::size_t>(dimension))
    throw ConfigError("scaling: diagonal entries must match the geometry dimension " + std::to_string(dimension));
  return {ScalingPoint{LinearMap::diagonal(a), LinearMap::diagonal(b), {}}};
}

inline Resolution make_resolution(const ResolutionConfig &r) {
  Resolution res;
  res.oversampling = r.oversampling;
  res.points = r.points;
  res.enforce_nyquist = r.enforce_nyquist;
  res.dense = r.dense == "always" ? DenseMode::always : r.dense == "never" ? DenseMode::never : DenseMode::automatic;
  if (r.dense_cap)
    res.dense_cap = *r.dense_cap;
  return res;
}

inline EigenOptions make_eigen_options(const EigenConfig &e, std::uint64_t seed) {
  EigenOptions o;
  o.count = e.count;
  o.method = e.method == "dense"         ? EigenMethod::dense
             : e.method == "matrix_free" ? EigenMethod::matrix_free
                                         : EigenMethod::automatic;
  o.tolerance = e.tolerance;
  o.max_cycles = e.max_cycles;
  o.seed = seed;
  return o;
}

inline Regime regime_of(const ScalingConfig &s) {
  if (s.kind == "landau")
    return Regime::wideband;
  if (s.kind == "anisotropic")
    return Regime::large_domain;
  return Regime::combined;
}

// ---------------------------------------------------------------------------
// Output helpers

/// %.17g, with fixed spellings for non-finite values.
inline std::string fmt(double v) {
  if (std::isnan(v))
    return "nan";
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Level labels used in column names, e.g. 0.5 -> "0.5".
inline std::string level_label(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class CsvWriter {
public:
  CsvWriter(const std::filesystem::path &path, const std::string &schema) : out_(path, std::ios::binary) {
    if (!out_)
      throw std::runtime_error("cannot write '" + path.string() + "'");
    out_ << "# " << schema << "\n";
  }
  void row(const std::vector<std::string> &cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

private:
  std::ofstream out_;
};

inline void write_text(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

inline detail::json jnum(double v) {
  if (!std::isfinite(v))
    return fmt(v);
  return v;
}

struct RunResult {
  int exit_code = exit_code::ok;
  std::vector<std::string> artifacts;
  std::string message;
};

// ---------------------------------------------------------------------------
// Runners

namespace detail {

inline void write_spectrum_csv(const std::filesystem::path &path, const Spectrum &s) {
  CsvWriter csv(path, "dofkit spectrum csv v1");
  csv.row({"k", "lambda", "n_width"});
  for (std::size_t k = 0; k < s.eigenvalues.size(); ++k)
    csv.row({std::to_string(k), fmt(s.eigenvalues[k]), fmt(std::sqrt(std::max(s.eigenvalues[k], 0.0)))});
}

inline json grid_json(const Grid &g) {
  json j;
  j["counts"] = g.counts;
  json lower = json::array(), spacing = json::array();
  for (double v : g.lower)
    lower.push_back(jnum(v));
  for (double v : g.spacing)
    spacing.push_back(jnum(v));
  j["lower"] = lower;
  j["spacing"] = spacing;
  return j;
}

inline json params_json(const std::vector<std::pair<std::string, double>> &p) {
  json j = json::object();
  for (const auto &[k, v] : p)
    j[k] = jnum(v);
  return j;
}

/// Scaling parameter columns for a sweep kind.
inline std::vector<std::string> param_names(const ScalingConfig &s) {
  if (s.kind == "landau")
    return {"beta"};
  if (s.kind == "anisotropic")
    return {"tau", "rho"};
  return {};
}

inline double scaling_volume(const ScalingPoint &p) {
  return std::abs(p.a.determinant()) * std::abs(p.b.determinant());
}

} // namespace detail

inline RunResult run_spectrum(const JobConfig &cfg, const std::filesystem::path &out_dir) {
  RunResult rr;
  const Problem pr = build_problem(cfg.geometry);
  if (!pr.sets && !pr.degenerate)
    throw ConfigError("geometry '" + cfg.geometry.kind + "' has no operator; use the dof command");
  if (!pr.sets)
    throw ConfigError("geometry '" + cfg.geometry.kind + "' is degenerate; nothing to discretize");
  const auto points = scaling_points(cfg.scaling, pr.dimension);
  if (points.size() != 1)
    throw ConfigError("spectrum: scaling yields " + std::to_string(points.size()) +
                      " points; use the sweep command");
  const ConcentrationOperator op =
      make_operator(pr.sets->P, pr.sets->Q, points[0].a, points[0].b, make_resolution(cfg.resolution));
  const Spectrum s = eigenvalues(op, make_eigen_options(cfg.eigen, cfg.seed));
  const TraceResiduals tr = trace_identities(op);
  const TransitionReport rep = transition_report(s, cfg.epsilons, op.leading_term());

  std::filesystem::create_directories(out_dir);
  detail::write_spectrum_csv(out_dir / "spectrum.csv", s);
  rr.artifacts.push_back("spectrum.csv");

  detail::json j;
  j["schema"] = "dofkit summary v1";
  j["geometry"] = detail::to_json(cfg.geometry);
  j["grid"] = detail::grid_json(op.grid());
  j["grid_size"] = op.size();
  j["active_size"] = op.active_size();
  j["method"] = s.method;
  j["complete"] = s.complete;
  j["measure_p"] = jnum(op.measure_p());
  j["measure_q"] = jnum(op.measure_q());
  j["leading_term"] = jnum(op.leading_term());
  j["trace"] = jnum(tr.trace);
  j["trace_sq"] = jnum(tr.trace_sq);
  j["trace_residual"] = jnum(tr.trace_residual);
  j["trace_sq_residual"] = jnum(tr.trace_sq_residual);
  j["raw_min"] = jnum(s.raw_min);
  j["raw_max"] = jnum(s.raw_max);
  j["range_ok"] = s.range_ok;
  detail::json levels = detail::json::array();
  for (std::size_t i = 0; i < rep.epsilons.size(); ++i)
    levels.push_back({{"epsilon", jnum(rep.epsilons[i])},
                      {"count", rep.counts[i]},
                      {"normalized_error", jnum(rep.normalized_error[i])}});
  j["levels"] = levels;
  j["transition_point"] = rep.transition_point;
  j["width"] = rep.width;
  write_text(out_dir / "summary.json", j.dump(2) + "\n");
  rr.artifacts.push_back("summary.json");

  if (cfg.output.dump_matrix) {
    if (!op.has_dense())
      throw ConfigError("output.dump_matrix: operator was not assembled densely");
    write_matrix_dump(op, (out_dir / "matrix.bin").string());
    rr.artifacts.push_back("matrix.bin");
  }
  return rr;
}

inline RunResult run_sweep_job(const JobConfig &cfg, const std::filesystem::path &out_dir, std::size_t workers) {
  RunResult rr;
  const Problem pr = build_problem(cfg.geometry);
  if (!pr.sets)
    throw ConfigError("geometry '" + cfg.geometry.kind + "' has no operator to sweep");
  const auto points = scaling_points(cfg.scaling, pr.dimension);
  const auto results = run_sweep(pr.sets->P, pr.sets->Q, points, cfg.epsilons, make_resolution(cfg.resolution),
                                 make_eigen_options(cfg.eigen, cfg.seed), workers);

  std::filesystem::create_directories(out_dir);
  CsvWriter csv(out_dir / "sweep.csv", "dofkit sweep csv v1");
  std::vector<std::string> header{"index"};
  const auto names = detail::param_names(cfg.scaling);
  header.insert(header.end(), names.begin(), names.end());
  for (const char *c : {"ok", "measure_p", "measure_q", "grid_size", "trace", "trace_sq", "trace_residual",
                        "trace_sq_residual", "leading_term"})
    header.emplace_back(c);
  for (double e : cfg.epsilons)
    header.push_back("N_" + level_label(e));
  header.emplace_back("transition_point");
  header.emplace_back("width");
  for (double e : cfg.epsilons)
    header.push_back("normalized_error_" + level_label(e));
  header.emplace_back("error");
  csv.row(header);

  bool failed = false;
  for (const auto &r : results) {
    std::vector<std::string> row{std::to_string(r.index)};
    for (const auto &[k, v] : r.parameters)
      row.push_back(fmt(v));
    if (r.ok) {
      row.insert(row.end(), {"1", fmt(r.measure_p), fmt(r.measure_q), std::to_string(r.grid_size),
                             fmt(r.traces.trace), fmt(r.traces.trace_sq), fmt(r.traces.trace_residual),
                             fmt(r.traces.trace_sq_residual), fmt(r.report.leading_term)});
      for (std::size_t n : r.report.counts)
        row.push_back(std::to_string(n));
      row.push_back(std::to_string(r.report.transition_point));
      row.push_back(std::to_string(r.report.width));
      for (double e : r.report.normalized_error)
        row.push_back(fmt(e));
      row.emplace_back("");
      detail::write_spectrum_csv(out_dir / ("spectrum_" + std::to_string(r.index) + ".csv"), r.spectrum);
      rr.artifacts.push_back("spectrum_" + std::to_string(r.index) + ".csv");
    } else {
      failed = true;
      row.emplace_back("0");
      const std::size_t blanks = 8 + 2 * cfg.epsilons.size() + 2;
      for (std::size_t i = 0; i < blanks; ++i)
        row.emplace_back("");
      std::string msg = r.error;
      for (char &ch : msg)
        if (ch == ',' || ch == '\n' || ch == '"')
          ch = ';';
      row.push_back(msg);
    }
    csv.row(row);
  }
  rr.artifacts.insert(rr.artifacts.begin(), "sweep.csv");
  if (failed) {
    rr.exit_code = exit_code::partial_sweep;
    rr.message = "one or more sweep points failed; see the error column of sweep.csv";
  }
  return rr;
}

inline RunResult run_dof(const JobConfig &cfg, const std::filesystem::path &out_dir, std::size_t workers) {
  RunResult rr;
  const Problem pr = build_problem(cfg.geometry);
  if (!pr.closed_form)
    throw ConfigError("geometry '" + cfg.geometry.kind + "' has no closed-form degrees-of-freedom calculator");
  const Regime regime = regime_of(cfg.scaling);

  detail::json j;
  j["schema"] = "dofkit dof report v1";
  j["geometry"] = detail::to_json(cfg.geometry);
  j["epsilon"] = jnum(cfg.dof.epsilon);
  j["eigenvalue_level"] = jnum(cfg.dof.epsilon * cfg.dof.epsilon);
  j["conventions"] = "dof_empirical counts n-widths above epsilon (eigenvalues above epsilon^2); "
                     "count_at_epsilon counts eigenvalues not smaller than epsilon";
  j["regime"] = to_string(regime);
  j["closed_form_base"] = jnum(*pr.closed_form);
  if (pr.cut) {
    j["heuristic_base"] = jnum(heuristic_dof(*pr.cut, pr.heuristic_lo, pr.heuristic_hi, pr.duration));
    j["cut_area"] = jnum(pr.cut->area());
  }
  if (pr.modulated) {
    j["delta"] = jnum(pr.modulated->delta);
    j["carrier"] = jnum(pr.modulated->carrier);
    j["bandwidth"] = jnum(pr.modulated->bandwidth);
    j["density_at_carrier"] = jnum(pr.modulated->density);
  }

  const int dim = pr.dimension > 0 ? pr.dimension : 1;
  const auto points = scaling_points(cfg.scaling, dim);
  const bool empirical = cfg.dof.empirical && pr.sets.has_value();
  std::vector<SweepResult> results;
  if (empirical) {
    std::vector<double> levels = cfg.epsilons;
    results = run_sweep(pr.sets->P, pr.sets->Q, points, levels, make_resolution(cfg.resolution),
                        make_eigen_options(cfg.eigen, cfg.seed), workers);
  }

  std::filesystem::create_directories(out_dir);
  CsvWriter csv(out_dir / "dof_report.csv", "dofkit dof csv v1");
  std::vector<std::string> header{"index"};
  const auto names = detail::param_names(cfg.scaling);
  header.insert(header.end(), names.begin(), names.end());
  for (const char *c : {"mode", "epsilon", "closed_form", "dof_empirical", "count_at_epsilon", "relative_gap",
                        "regime", "error"})
    header.emplace_back(c);
  csv.row(header);
  CsvWriter widths(out_dir / "n_width.csv", "dofkit n-width csv v1");
  widths.row({"index", "n", "d_n"});

  detail::json rows = detail::json::array();
  std::vector<double> gaps;
  bool any_failed = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double cf = *pr.closed_form * detail::scaling_volume(points[i]);
    detail::json row;
    row["index"] = i;
    row["parameters"] = detail::params_json(points[i].parameters);
    row["closed_form"] = jnum(cf);
    row["regime"] = to_string(regime);
    std::vector<std::string> cells{std::to_string(i)};
    for (const auto &[k, v] : points[i].parameters)
      cells.push_back(fmt(v));
    if (pr.degenerate && cf == 0.0 && !empirical) {
      row["mode"] = "closed-form-only";
      cells.insert(cells.end(), {"closed-form-only", fmt(cfg.dof.epsilon), fmt(cf), "", "", "0",
                                 to_string(regime), ""});
      row["relative_gap"] = 0.0;
    } else if (!empirical) {
      row["mode"] = "closed-form-only";
      cells.insert(cells.end(), {"closed-form-only", fmt(cfg.dof.epsilon), fmt(cf), "", "", "", to_string(regime), ""});
    } else if (!results[i].ok) {
      any_failed = true;
      row["mode"] = "closed-form-only";
      row["error"] = results[i].error;
      std::string msg = results[i].error;
      for (char &ch : msg)
        if (ch == ',' || ch == '\n' || ch == '"')
          ch = ';';
      cells.insert(cells.end(), {"closed-form-only", fmt(cfg.dof.epsilon), fmt(cf), "", "", "", to_string(regime), msg});
    } else {
      const DofReport rep = empirical_vs_closed_form(results[i].spectrum, cf, cfg.dof.epsilon, regime);
      gaps.push_back(std::abs(rep.relative_gap));
      row["mode"] = "empirical";
      row["dof_empirical"] = rep.dof_empirical;
      row["count_at_epsilon"] = rep.count_at_epsilon;
      row["relative_gap"] = jnum(rep.relative_gap);
      row["grid_size"] = results[i].grid_size;
      row["leading_term"] = jnum(results[i].report.leading_term);
      cells.insert(cells.end(), {"empirical", fmt(cfg.dof.epsilon), fmt(cf), std::to_string(rep.dof_empirical),
                                 std::to_string(rep.count_at_epsilon), fmt(rep.relative_gap), to_string(regime), ""});
      for (std::size_t n = 0; n < rep.n_width_curve.size(); ++n)
        widths.row({std::to_string(i), std::to_string(n), fmt(rep.n_width_curve[n])});
    }
    csv.row(cells);
    rows.push_back(row);
  }
  j["points"] = rows;
  bool shrinking = true;
  for (std::size_t i = 1; i < gaps.size(); ++i)
    shrinking = shrinking && gaps[i] <= gaps[i - 1];
  if (gaps.size() >= 2)
    j["gap_shrinking"] = shrinking;
  bool gap_ok = true;
  if (cfg.dof.max_relative_gap) {
    for (double g : gaps)
      gap_ok = gap_ok && g <= *cfg.dof.max_relative_gap;
    j["max_relative_gap"] = jnum(*cfg.dof.max_relative_gap);
    j["gap_within_threshold"] = gap_ok;
  }
  write_text(out_dir / "dof_report.json", j.dump(2) + "\n");
  rr.artifacts = {"dof_report.json", "dof_report.csv", "n_width.csv"};
  if (any_failed) {
    rr.exit_code = exit_code::partial_sweep;
    rr.message = "empirical spectrum failed at one or more points; closed forms were still reported";
  } else if (!gap_ok) {
    rr.exit_code = exit_code::check_failed;
    rr.message = "relative gap exceeds dof.max_relative_gap at one or more points";
  }
  return rr;
}

struct VerifyCheck {
  std::string name;
  std::string scope;
  bool pass = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

namespace detail {

/// h_B(u) against |det B| h(B^T u) for a box Q and random diagonal B.
inline VerifyCheck kernel_scaling_check(const std::vector<double> &half_widths, std::size_t offsets,
                                        double tol, std::uint64_t seed) {
  VerifyCheck c{"kernel_scaling_box", "geometry", true, 0.0, tol, ""};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> scale(0.5, 3.0), off(-4.0, 4.0);
  const auto n = half_widths.size();
  std::vector<double> hw = half_widths;
  for (double &w : hw)
    if (w == 0.0)
      w = 1.0;
  const SupportSet q = SupportSet::centered_box(hw);
  std::vector<double> d(n);
  for (double &x : d)
    x = scale(rng);
  const LinearMap b = LinearMap::diagonal(d);
  const Kernel hb = build_kernel(q, b);
  const Kernel h = build_kernel(q);
  double worst = 0.0;
  std::vector<double> u(n), bu(n);
  for (std::size_t t = 0; t < offsets; ++t) {
    for (std::size_t k = 0; k < n; ++k) {
      u[k] = off(rng);
      bu[k] = d[k] * u[k];
    }
    const double lhs = hb(u);
    const double rhs = std::abs(b.determinant()) * h(bu);
    const double excess = std::abs(lhs - rhs) / (tol * std::abs(lhs) + 1e-12);
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-300));
    c.pass = c.pass && excess <= 1.0;
  }
  c.value = worst;
  c.detail = std::to_string(offsets) + " offsets";
  return c;
}

inline VerifyCheck heuristic_check(double tol) {
  VerifyCheck c{"heuristic_matches_closed_form", "calculators", true, 0.0, tol, "3 geometries x 10 points"};
  double worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double omega = 0.5 + 0.75 * i, duration = 1.0 + 0.5 * i, size = 0.25 + 0.6 * i;
    for (const CutGeometry g : {CutGeometry::circular(size), CutGeometry::spherical(size),
                                CutGeometry::rotational(4.0 * std::numbers::pi * size * size)}) {
      const double a = heuristic_dof(g, omega, duration), b = closed_form_dof(g, omega, duration);
      const double rel = std::abs(a - b) / std::abs(b);
      worst = std::max(worst, rel);
    }
  }
  c.value = worst;
  c.pass = worst <= tol;
  return c;
}

inline std::vector<VerifyCheck> operator_checks(const ConcentrationOperator &op, const VerifyConfig &v,
                                                const EigenOptions &eig_opt, const std::string &scope,
                                                std::uint64_t seed) {
  std::vector<VerifyCheck> out;
  const std::size_t n = op.active_size();

  // exact symmetry
  {
    VerifyCheck c{"symmetry", scope, true, 0.0, 0.0, ""};
    if (op.has_dense()) {
      const Eigen::MatrixXd &m = op.dense();
      c.value = (m - m.transpose()).cwiseAbs().maxCoeff();
      c.detail = "max |M - M^T|, dense";
    } else {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> g;
      Eigen::VectorXd x(static_cast<Eigen::Index>(n)), y(static_cast<Eigen::Index>(n));
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        x[i] = g(rng);
        y[i] = g(rng);
      }
      c.value = std::abs(x.dot(op.apply_active(y)) - y.dot(op.apply_active(x)));
      c.tolerance = 1e-12 * std::max(1.0, x.norm() * y.norm());
      c.detail = "|x.My - y.Mx|, matrix-free";
    }
    c.pass = c.value <= c.tolerance;
    out.push_back(c);
  }

  EigenOptions eo = eig_opt;
  eo.range_tolerance = v.range_tolerance;
  if (!op.has_dense() && eo.count == 0)
    eo.count = std::min<std::size_t>(10, n);
  const Spectrum s = (n == 0 && !op.has_dense()) ? Spectrum{} : eigenvalues(op, eo);
  {
    VerifyCheck c{"spectral_range", scope, s.range_ok, 0.0, v.range_tolerance, ""};
    c.value = std::max(s.raw_max - 1.0, -s.raw_min);
    char buf[128];
    std::snprintf(buf, sizeof buf, "raw eigenvalues in [%.3e, %.17g]%s", s.raw_min, s.raw_max,
                  s.complete ? "" : " (leading only)");
    c.detail = buf;
    out.push_back(c);
  }
  const TraceResiduals tr = trace_identities(op);
  {
    VerifyCheck c{"trace_identity", scope, true, std::abs(tr.trace_residual), v.trace_tolerance, ""};
    c.pass = tr.leading_term == 0.0 ? tr.trace == 0.0 : c.value <= c.tolerance;
    c.detail = "|sum lambda - T1| / T1 with T1 = " + fmt(tr.leading_term);
    out.push_back(c);
  }
  if (s.complete) {
    double sum = 0.0;
    for (double l : s.eigenvalues)
      sum += l;
    VerifyCheck c{"eigenvalue_sum_matches_trace", scope, true, 0.0, 1e-8, ""};
    c.value = std::abs(sum - tr.trace) / std::max(std::abs(tr.trace), 1e-300);
    c.pass = tr.trace == 0.0 ? std::abs(sum) <= 1e-12 : c.value <= c.tolerance;
    out.push_back(c);
  }
  {
    VerifyCheck c{"square_trace_bound", scope, true, tr.trace_sq - tr.trace, 0.0, "sum lambda^2 <= sum lambda"};
    c.pass = tr.trace_sq <= tr.trace * (1.0 + 1e-12) + 1e-300;
    c.detail += "; sum lambda^2 / sum lambda = " + fmt(tr.trace > 0 ? tr.trace_sq / tr.trace : 0.0);
    out.push_back(c);
  }
  if (op.has_dense() && n > 0) {
    const std::size_t top = std::min<std::size_t>(10, n);
    VerifyCheck c{"dense_vs_matrix_free", scope, true, 0.0, v.agreement_tolerance, ""};
    try {
      EigenOptions raw = eo;
      raw.clamp = false;
      raw.count = 0;
      raw.method = EigenMethod::dense;
      const Spectrum dense_s = eigenvalues(op, raw);
      raw.count = top;
      raw.method = EigenMethod::matrix_free;
      const Spectrum free_s = eigenvalues(op, raw);
      for (std::size_t k = 0; k < top; ++k)
        c.value = std::max(c.value, std::abs(dense_s.eigenvalues[k] - free_s.eigenvalues[k]));
      c.pass = c.value <= c.tolerance;
      c.detail = "top " + std::to_string(top) + " eigenvalues";
    } catch (const NumericalError &e) {
      c.pass = false;
      c.detail = e.what();
    }
    out.push_back(c);

    VerifyCheck a{"apply_matches_dense", scope, true, 0.0, 1e-10, "relative, random vector"};
    std::mt19937_64 rng(seed + 1);
    std::normal_distribution<double> g;
    Eigen::VectorXd x(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.size(); ++i)
      x[i] = g(rng);
    const Eigen::VectorXd y1 = op.apply_active(x), y2 = op.dense() * x;
    a.value = (y1 - y2).norm() / std::max(y2.norm(), 1e-300);
    a.pass = y2.norm() == 0.0 ? y1.norm() == 0.0 : a.value <= a.tolerance;
    out.push_back(a);
  }
  return out;
}

} // namespace detail

inline RunResult run_verify(const JobConfig &cfg, const std::filesystem::path &out_dir,
                            std::vector<VerifyCheck> *checks_out = nullptr) {
  RunResult rr;
  const Problem pr = build_problem(cfg.geometry);
  std::vector<VerifyCheck> checks;
  const VerifyConfig &v = cfg.verify;

  checks.push_back(detail::heuristic_check(v.heuristic_tolerance));

  if (pr.degenerate) {
    // zero operator: every operator identity holds with zero on both sides
    for (const char *name : {"symmetry", "spectral_range", "trace_identity", "square_trace_bound"})
      checks.push_back(VerifyCheck{name, "degenerate", true, 0.0, 0.0, "degenerate geometry: zero operator"});
    if (pr.closed_form)
      checks.push_back(VerifyCheck{"closed_form_zero", "degenerate", *pr.closed_form == 0.0, *pr.closed_form, 0.0,
                                   "leading term of a degenerate geometry"});
  } else if (pr.sets) {
    const SupportSet &q = pr.sets->Q;
    std::vector<double> hw;
    for (const auto &iv : q.bounding_box())
      hw.push_back(std::max(std::abs(iv.lo), std::abs(iv.hi)));
    checks.push_back(detail::kernel_scaling_check(hw, v.kernel_offsets, v.kernel_tolerance, cfg.seed));

    const auto points = scaling_points(cfg.scaling, pr.dimension);
    const Resolution res = make_resolution(cfg.resolution);
    const EigenOptions eo = make_eigen_options(cfg.eigen, cfg.seed);
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::string scope = "point " + std::to_string(i);
      for (const auto &[k, val] : points[i].parameters)
        scope += " " + k + "=" + level_label(val);
      const ConcentrationOperator op = make_operator(pr.sets->P, pr.sets->Q, points[i].a, points[i].b, res);
      auto c = detail::operator_checks(op, v, eo, scope, cfg.seed + i);
      checks.insert(checks.end(), c.begin(), c.end());
    }
  }
  if (pr.modulated && pr.cut) {
    const double h = heuristic_dof(*pr.cut, pr.heuristic_lo, pr.heuristic_hi, pr.duration);
    const double rel = std::abs(h - *pr.closed_form) / std::max(std::abs(*pr.closed_form), 1e-300);
    checks.push_back(VerifyCheck{"modulated_matches_band_integral", "calculators", rel <= v.heuristic_tolerance, rel,
                                 v.heuristic_tolerance, ""});
  }

  std::filesystem::create_directories(out_dir);
  CsvWriter csv(out_dir / "verify.csv", "dofkit verify csv v1");
  csv.row({"check", "scope", "result", "value", "tolerance", "detail"});
  bool all = true;
  for (const auto &c : checks) {
    all = all && c.pass;
    std::string d = c.detail;
    for (char &ch : d)
      if (ch == ',' || ch == '\n' || ch == '"')
        ch = ';';
    csv.row({c.name, c.scope, c.pass ? "pass" : "FAIL", fmt(c.value), fmt(c.tolerance), d});
  }
  rr.artifacts.push_back("verify.csv");
  if (!all) {
    rr.exit_code = exit_code::check_failed;
    rr.message = "verification failed";
  }
  if (checks_out)
    *checks_out = checks;
  return rr;
}

/// Prints the verify table in fixed-width columns.
inline std::string format_verify_table(const std::vector<VerifyCheck> &checks) {
  std::ostringstream os;
  char buf[512];
  std::snprintf(buf, sizeof buf, "%-32s %-24s %-6s %-12s %s\n", "check", "scope", "result", "value", "tolerance");
  os << buf;
  for (const auto &c : checks) {
    std::snprintf(buf, sizeof buf, "%-32s %-24s %-6s %-12.4g %.3g\n", c.name.c_str(), c.scope.c_str(),
                  c.pass ? "pass" : "FAIL", c.value, c.tolerance);
    os << buf;
  }
  return os.str();
}

/// Runs a job, writes its artifacts and run_record.json, and maps failures to
/// exit codes. Diagnostics go to `err`.
inline int run_job(JobConfig cfg, const std::string &command, const std::optional<std::string> &out_override,
                   std::size_t workers, std::ostream &out, std::ostream &err) {
  const auto start = std::chrono::steady_clock::now();
  if (!cfg.command.empty() && cfg.command != command) {
    err << "config error: config is for command '" << cfg.command << "', not '" << command << "'\n";
    return exit_code::config;
  }
  cfg.command = command;
  const std::filesystem::path dir = out_override ? *out_override : cfg.output.dir;
  RunResult rr;
  std::vector<VerifyCheck> checks;
  try {
    if (command == "spectrum")
      rr = run_spectrum(cfg, dir);
    else if (command == "sweep")
      rr = run_sweep_job(cfg, dir, workers);
    else if (command == "dof")
      rr = run_dof(cfg, dir, workers);
    else if (command == "verify")
      rr = run_verify(cfg, dir, &checks);
    else
      throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << "\n";
    return exit_code::config;
  } catch (const DenseCapExceeded &e) {
    err << "config error: " << e.what() << "\n";
    return exit_code::config;
  } catch (const NumericalError &e) {
    err << "numerical error: " << e.what() << "\n";
    return exit_code::numerical;
  } catch (const std::invalid_argument &e) {
    err << "config error: " << e.what() << "\n";
    return exit_code::config;
  } catch (const std::out_of_range &e) {
    err << "config error: " << e.what() << "\n";
    return exit_code::config;
  } catch (const std::exception &e) {
    err << "numerical error: " << e.what() << "\n";
    return exit_code::numerical;
  }
  if (command == "verify")
    out << format_verify_table(checks);
  if (!rr.message.empty())
    err << rr.message << "\n";

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  detail::json rec;
  rec["schema"] = "dofkit run record v1";
  rec["command"] = command;
  rec["config_hash"] = fnv1a_hex(serialize_job(cfg));
  rec["version"] = kVersion;
  rec["wall_time_seconds"] = wall;
  rec["workers"] = workers;
  rec["exit_code"] = rr.exit_code;
  rec["artifacts"] = rr.artifacts;
  try {
    write_text(dir / "run_record.json", rec.dump(2) + "\n");
  } catch (const std::exception &e) {
    err << "warning: " << e.what() << "\n";
  }
  out << command << ": wrote " << rr.artifacts.size() << " artifact(s) to " << dir.string() << "\n";
  return rr.exit_code;
}

} // namespace dofkit
