#pragma once
// JSON interchange for scenes, drone bodies, echo sets and detection results,
// plus the per-trial CSV emitted by the Monte Carlo driver. Loaders throw
// SchemaError carrying a field path such as "walls[2].vertices[0]" so the CLI
// can say exactly which part of an input file is malformed.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "echoroom/errors.hpp"
#include "echoroom/experiments.hpp"
#include "echoroom/geometry.hpp"
#include "echoroom/reconstruction.hpp"
#include "echoroom/simulator.hpp"

namespace echoroom::io {

using nlohmann::json;

inline constexpr const char* kFormatVersion = "0.1.0";

namespace detail {

[[noreturn]] inline void fail(const std::string& path,
                              const std::string& what) {
  throw SchemaError(path + ": " + what);
}

inline std::string elem(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

inline std::string sub(const std::string& path, const char* key) {
  return path.empty() ? std::string(key) : path + "." + key;
}

inline const json& require(const json& j, const char* key,
                           const std::string& path) {
  if (!j.is_object())
    fail(path.empty() ? "(root)" : path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) fail(sub(path, key), "missing required field");
  return *it;
}

inline const json* maybe(const json& j, const char* key,
                         const std::string& path) {
  if (!j.is_object())
    fail(path.empty() ? "(root)" : path, "expected an object");
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

inline std::uint64_t as_u64(const json& j, const std::string& path) {
  if (!j.is_number_unsigned()) fail(path, "expected a nonnegative integer");
  return j.get<std::uint64_t>();
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

inline Point3 as_point(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) fail(path, "expected [x, y, z]");
  Point3 p;
  for (int k = 0; k < 3; ++k)
    p[k] = as_number(j[static_cast<std::size_t>(k)],
                     elem(path, static_cast<std::size_t>(k)));
  if (!finite(p)) fail(path, "coordinates must be finite");
  return p;
}

inline std::vector<double> as_numbers(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t k = 0; k < j.size(); ++k)
    out.push_back(as_number(j[k], elem(path, k)));
  return out;
}

inline json point_json(const Point3& p) {
  return json::array({p.x(), p.y(), p.z()});
}

}  // namespace detail

inline json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(path + ": cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

// Serialize fully before touching the file, so a validation failure can never
// leave a partial document behind.
inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path + ": cannot open for writing");
  out << text;
  out.flush();
  if (!out) throw Error(path + ": write failed");
}

inline void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// %.17g round-trips any double exactly; used for CSV cells.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string digest_hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t digest_from_hex(const std::string& s,
                                     const std::string& path) {
  if (s.size() != 16 ||
      s.find_first_not_of("0123456789abcdef") != std::string::npos)
    detail::fail(path, "expected 16 lowercase hex digits");
  return std::strtoull(s.c_str(), nullptr, 16);
}

// --- scene files -----------------------------------------------------------

struct LoadedScene {
  Scene scene;
  double speed_of_sound = kSpeedOfSound;
};

inline LoadedScene scene_from_json(const json& j) {
  const json& jwalls = detail::require(j, "walls", "");
  if (!jwalls.is_array() || jwalls.empty())
    detail::fail("walls", "expected a non-empty array");
  std::vector<Wall> walls;
  walls.reserve(jwalls.size());
  for (std::size_t w = 0; w < jwalls.size(); ++w) {
    const std::string wpath = detail::elem("walls", w);
    const json& jverts = detail::require(jwalls[w], "vertices", wpath);
    const std::string vpath = detail::sub(wpath, "vertices");
    if (!jverts.is_array() || jverts.size() < 3)
      detail::fail(vpath, "expected at least 3 vertices");
    std::vector<Point3> verts;
    verts.reserve(jverts.size());
    for (std::size_t k = 0; k < jverts.size(); ++k)
      verts.push_back(detail::as_point(jverts[k], detail::elem(vpath, k)));
    walls.emplace_back(std::move(verts));  // polygon invariants checked here
  }

  const json& jsrc = detail::require(j, "source", "");
  const std::string mode =
      detail::as_string(detail::require(jsrc, "mode", "source"), "source.mode");
  SourceMode source = DroneSource{};
  if (mode == "fixed") {
    source = FixedSource{detail::as_point(
        detail::require(jsrc, "position", "source"), "source.position")};
  } else if (mode != "drone") {
    detail::fail("source.mode", "expected \"fixed\" or \"drone\"");
  }

  Audibility aud = Audibility::polygon;
  if (const json* ja = detail::maybe(j, "audibility", "")) {
    const std::string a = detail::as_string(*ja, "audibility");
    if (a == "plane")
      aud = Audibility::plane;
    else if (a != "polygon")
      detail::fail("audibility", "expected \"polygon\" or \"plane\"");
  }

  LoadedScene out{Scene(std::move(walls), source, aud)};
  if (const json* jc = detail::maybe(j, "speed_of_sound", "")) {
    out.speed_of_sound = detail::as_number(*jc, "speed_of_sound");
    if (!(out.speed_of_sound > 0.0))
      detail::fail("speed_of_sound", "must be positive");
  }
  return out;
}

inline json scene_to_json(const Scene& scene,
                          double speed_of_sound = kSpeedOfSound) {
  json jwalls = json::array();
  for (const Wall& w : scene.walls) {
    json verts = json::array();
    for (const Point3& v : w.vertices) verts.push_back(detail::point_json(v));
    jwalls.push_back(json{{"vertices", std::move(verts)}});
  }
  json source;
  if (const auto* fixed = std::get_if<FixedSource>(&scene.source_mode))
    source = {{"mode", "fixed"},
              {"position", detail::point_json(fixed->position)}};
  else
    source = {{"mode", "drone"}};
  return json{{"walls", std::move(jwalls)},
              {"source", std::move(source)},
              {"speed_of_sound", speed_of_sound},
              {"audibility",
               scene.audibility == Audibility::plane ? "plane" : "polygon"}};
}

// --- drone files -----------------------------------------------------------

struct LoadedDrone {
  DroneBody body;
  Pose pose;  // identity unless the file carries one
  bool has_pose = false;
};

inline LoadedDrone drone_from_json(const json& j) {
  const json& jm = detail::require(j, "mics", "");
  if (!jm.is_array() || jm.size() != 4)
    detail::fail("mics", "expected exactly 4 microphone positions");
  std::array<Point3, 4> mics;
  for (std::size_t i = 0; i < 4; ++i)
    mics[i] = detail::as_point(jm[i], detail::elem("mics", i));
  std::optional<Point3> speaker;
  if (const json* js = detail::maybe(j, "loudspeaker", ""))
    speaker = detail::as_point(*js, "loudspeaker");

  LoadedDrone out{DroneBody(mics, speaker)};  // coplanarity checked here
  if (const json* jp = detail::maybe(j, "pose", "")) {
    const json& jq = detail::require(*jp, "quaternion", "pose");
    if (!jq.is_array() || jq.size() != 4)
      detail::fail("pose.quaternion", "expected [w, x, y, z]");
    std::array<double, 4> q;
    for (std::size_t k = 0; k < 4; ++k)
      q[k] = detail::as_number(jq[k], detail::elem("pose.quaternion", k));
    const Point3 t = detail::as_point(
        detail::require(*jp, "translation", "pose"), "pose.translation");
    try {
      out.pose = Pose(Eigen::Quaterniond(q[0], q[1], q[2], q[3]), t);
    } catch (const Error&) {
      detail::fail("pose.quaternion", "not normalized within 1e-6");
    }
    out.has_pose = true;
  }
  return out;
}

inline json drone_to_json(const DroneBody& body,
                          const std::optional<Pose>& pose = std::nullopt) {
  json jm = json::array();
  for (const Point3& m : body.mics) jm.push_back(detail::point_json(m));
  json out{{"mics", std::move(jm)}};
  if (body.loudspeaker) out["loudspeaker"] = detail::point_json(*body.loudspeaker);
  if (pose) {
    const Eigen::Quaterniond& q = pose->rotation;
    out["pose"] = json{
        {"quaternion", json::array({q.w(), q.x(), q.y(), q.z()})},
        {"translation", detail::point_json(pose->translation)}};
  }
  return out;
}

// --- echo files ------------------------------------------------------------

// What cmd_simulate writes and cmd_reconstruct reads. Ground-truth labels are
// optional (".truth" per mic); direct-path delays are optional and enable
// source auto-localization downstream.
struct EchoesFile {
  EchoSet echoes;  // wall/mirror fields meaningful only when has_truth
  double speed_of_sound = kSpeedOfSound;
  bool has_truth = false;
  std::optional<std::array<double, 4>> direct_delays;
  std::string version = kFormatVersion;
  std::uint64_t seed = 0;
  double sigma_t = 0.0;
  std::uint64_t config_digest = 0;
};

inline json echoes_to_json(const EchoesFile& f) {
  json jm = json::array();
  for (std::size_t i = 0; i < 4; ++i) {
    json delays = json::array();
    for (const Echo& e : f.echoes.mics[i]) delays.push_back(e.delay);
    json entry{{"delays", std::move(delays)}};
    if (f.has_truth) {
      json truth = json::array();
      for (const Echo& e : f.echoes.mics[i])
        truth.push_back(
            json{{"wall", e.wall}, {"mirror", detail::point_json(e.mirror)}});
      entry["truth"] = std::move(truth);
    }
    jm.push_back(std::move(entry));
  }
  json out{{"t0", f.echoes.t0},
           {"speed_of_sound", f.speed_of_sound},
           {"mics", std::move(jm)},
           {"meta", json{{"version", f.version},
                         {"seed", f.seed},
                         {"sigma_t", f.sigma_t},
                         {"config_digest", digest_hex(f.config_digest)}}}};
  if (f.direct_delays) {
    json dd = json::array();
    for (double d : *f.direct_delays) dd.push_back(d);
    out["direct_delays"] = std::move(dd);
  }
  return out;
}

inline EchoesFile echoes_from_json(const json& j) {
  EchoesFile f;
  f.echoes.t0 = detail::as_number(detail::require(j, "t0", ""), "t0");
  if (const json* jc = detail::maybe(j, "speed_of_sound", "")) {
    f.speed_of_sound = detail::as_number(*jc, "speed_of_sound");
    if (!(f.speed_of_sound > 0.0))
      detail::fail("speed_of_sound", "must be positive");
  }
  const json& jm = detail::require(j, "mics", "");
  if (!jm.is_array() || jm.size() != 4)
    detail::fail("mics", "expected exactly 4 entries");
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string mpath = detail::elem("mics", i);
    const std::vector<double> delays =
        detail::as_numbers(detail::require(jm[i], "delays", mpath),
                           detail::sub(mpath, "delays"));
    f.echoes.mics[i].reserve(delays.size());
    for (double d : delays) f.echoes.mics[i].push_back(Echo{d});
    if (const json* jt = detail::maybe(jm[i], "truth", mpath)) {
      const std::string tpath = detail::sub(mpath, "truth");
      if (!jt->is_array() || jt->size() != delays.size())
        detail::fail(tpath, "expected one entry per delay");
      f.has_truth = true;
      for (std::size_t k = 0; k < jt->size(); ++k) {
        const std::string epath = detail::elem(tpath, k);
        const json& jw = detail::require((*jt)[k], "wall", epath);
        if (!jw.is_number_integer())
          detail::fail(detail::sub(epath, "wall"), "expected an integer");
        f.echoes.mics[i][k].wall = jw.get<int>();
        f.echoes.mics[i][k].mirror =
            detail::as_point(detail::require((*jt)[k], "mirror", epath),
                             detail::sub(epath, "mirror"));
      }
    }
  }
  if (const json* jd = detail::maybe(j, "direct_delays", "")) {
    const std::vector<double> dd = detail::as_numbers(*jd, "direct_delays");
    if (dd.size() != 4) detail::fail("direct_delays", "expected 4 delays");
    f.direct_delays = std::array<double, 4>{dd[0], dd[1], dd[2], dd[3]};
  }
  if (const json* jmeta = detail::maybe(j, "meta", "")) {
    if (const json* v = detail::maybe(*jmeta, "version", "meta"))
      f.version = detail::as_string(*v, "meta.version");
    if (const json* v = detail::maybe(*jmeta, "seed", "meta"))
      f.seed = detail::as_u64(*v, "meta.seed");
    if (const json* v = detail::maybe(*jmeta, "sigma_t", "meta"))
      f.sigma_t = detail::as_number(*v, "meta.sigma_t");
    if (const json* v = detail::maybe(*jmeta, "config_digest", "meta"))
      f.config_digest = digest_from_hex(
          detail::as_string(*v, "meta.config_digest"), "meta.config_digest");
  }
  return f;
}

// --- result files ----------------------------------------------------------

struct ResultFile {
  std::vector<DetectedWall> walls;
  std::vector<bool> ghost;  // empty, or one flag per wall when truth is known
  std::optional<Plane> ghost_plane;  // analytic prediction, ghost demo only
  DetectionDiagnostics diagnostics;
  Point3 source = Point3::Zero();
  std::string method = "cm";
  double epsilon = 1e-9;
  std::string version = kFormatVersion;
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
};

inline json result_to_json(const ResultFile& r) {
  if (!r.ghost.empty() && r.ghost.size() != r.walls.size())
    throw Error("result: one ghost flag per wall, or none at all");
  json jwalls = json::array();
  for (std::size_t w = 0; w < r.walls.size(); ++w) {
    const DetectedWall& d = r.walls[w];
    json points = json::array();
    json taus = json::array();
    json tuple = json::array();
    for (std::size_t i = 0; i < 4; ++i) {
      points.push_back(detail::point_json(d.points[i]));
      taus.push_back(d.taus[i]);
      tuple.push_back(d.tuple[i]);
    }
    json jw{{"mirror", detail::point_json(d.mirror)},
            {"normal", detail::point_json(d.plane.normal)},
            {"offset", d.plane.offset},
            {"points", std::move(points)},
            {"taus", std::move(taus)},
            {"residual", d.residual},
            {"consistency", d.consistency},
            {"tuple", std::move(tuple)}};
    if (!r.ghost.empty()) jw["ghost"] = static_cast<bool>(r.ghost[w]);
    jwalls.push_back(std::move(jw));
  }
  json out{
      {"walls", std::move(jwalls)},
      {"diagnostics", json{{"raw_tuples", r.diagnostics.raw_tuples},
                           {"candidates", r.diagnostics.candidates},
                           {"accepted", r.diagnostics.accepted},
                           {"inconsistent", r.diagnostics.inconsistent},
                           {"degenerate", r.diagnostics.degenerate},
                           {"merged", r.diagnostics.merged}}},
      {"meta", json{{"version", r.version},
                    {"method", r.method},
                    {"epsilon", r.epsilon},
                    {"seed", r.seed},
                    {"source", detail::point_json(r.source)},
                    {"config_digest", digest_hex(r.config_digest)}}}};
  if (r.ghost_plane)
    out["ghost_plane"] = json{{"normal", detail::point_json(r.ghost_plane->normal)},
                              {"offset", r.ghost_plane->offset}};
  return out;
}

inline ResultFile result_from_json(const json& j) {
  ResultFile r;
  const json& jwalls = detail::require(j, "walls", "");
  if (!jwalls.is_array()) detail::fail("walls", "expected an array");
  std::size_t flagged = 0;
  for (std::size_t w = 0; w < jwalls.size(); ++w) {
    const std::string wpath = detail::elem("walls", w);
    const json& jw = jwalls[w];
    DetectedWall d;
    d.mirror = detail::as_point(detail::require(jw, "mirror", wpath),
                                detail::sub(wpath, "mirror"));
    // Assign the plane fields directly: the stored normal is already unit and
    // canonical, and renormalizing could perturb the last bit.
    d.plane.normal = detail::as_point(detail::require(jw, "normal", wpath),
                                      detail::sub(wpath, "normal"));
    if (std::abs(d.plane.normal.norm() - 1.0) > 1e-9)
      detail::fail(detail::sub(wpath, "normal"), "expected a unit vector");
    d.plane.offset = detail::as_number(detail::require(jw, "offset", wpath),
                                       detail::sub(wpath, "offset"));
    const json& jp = detail::require(jw, "points", wpath);
    const json& jt = detail::require(jw, "taus", wpath);
    const json& ji = detail::require(jw, "tuple", wpath);
    if (!jp.is_array() || jp.size() != 4)
      detail::fail(detail::sub(wpath, "points"), "expected 4 points");
    if (!jt.is_array() || jt.size() != 4)
      detail::fail(detail::sub(wpath, "taus"), "expected 4 numbers");
    if (!ji.is_array() || ji.size() != 4)
      detail::fail(detail::sub(wpath, "tuple"), "expected 4 indices");
    for (std::size_t i = 0; i < 4; ++i) {
      d.points[i] =
          detail::as_point(jp[i], detail::elem(detail::sub(wpath, "points"), i));
      d.taus[i] =
          detail::as_number(jt[i], detail::elem(detail::sub(wpath, "taus"), i));
      d.tuple[i] = static_cast<std::size_t>(detail::as_u64(
          ji[i], detail::elem(detail::sub(wpath, "tuple"), i)));
    }
    d.residual = detail::as_number(detail::require(jw, "residual", wpath),
                                   detail::sub(wpath, "residual"));
    d.consistency =
        detail::as_number(detail::require(jw, "consistency", wpath),
                          detail::sub(wpath, "consistency"));
    if (const json* jg = detail::maybe(jw, "ghost", wpath)) {
      if (!jg->is_boolean())
        detail::fail(detail::sub(wpath, "ghost"), "expected a boolean");
      r.ghost.push_back(jg->get<bool>());
      ++flagged;
    }
    r.walls.push_back(std::move(d));
  }
  if (flagged != 0 && flagged != r.walls.size())
    detail::fail("walls", "ghost flags must cover every wall or none");

  if (const json* jg = detail::maybe(j, "ghost_plane", "")) {
    Plane p;
    p.normal = detail::as_point(detail::require(*jg, "normal", "ghost_plane"),
                                "ghost_plane.normal");
    if (std::abs(p.normal.norm() - 1.0) > 1e-9)
      detail::fail("ghost_plane.normal", "expected a unit vector");
    p.offset = detail::as_number(detail::require(*jg, "offset", "ghost_plane"),
                                 "ghost_plane.offset");
    r.ghost_plane = p;
  }

  const json& jd = detail::require(j, "diagnostics", "");
  r.diagnostics.raw_tuples = detail::as_u64(
      detail::require(jd, "raw_tuples", "diagnostics"), "diagnostics.raw_tuples");
  r.diagnostics.candidates = detail::as_u64(
      detail::require(jd, "candidates", "diagnostics"), "diagnostics.candidates");
  r.diagnostics.accepted = detail::as_u64(
      detail::require(jd, "accepted", "diagnostics"), "diagnostics.accepted");
  r.diagnostics.inconsistent =
      detail::as_u64(detail::require(jd, "inconsistent", "diagnostics"),
                     "diagnostics.inconsistent");
  r.diagnostics.degenerate = detail::as_u64(
      detail::require(jd, "degenerate", "diagnostics"), "diagnostics.degenerate");
  r.diagnostics.merged = detail::as_u64(
      detail::require(jd, "merged", "diagnostics"), "diagnostics.merged");

  const json& jmeta = detail::require(j, "meta", "");
  r.version = detail::as_string(detail::require(jmeta, "version", "meta"),
                                "meta.version");
  r.method = detail::as_string(detail::require(jmeta, "method", "meta"),
                               "meta.method");
  r.epsilon = detail::as_number(detail::require(jmeta, "epsilon", "meta"),
                                "meta.epsilon");
  r.seed = detail::as_u64(detail::require(jmeta, "seed", "meta"), "meta.seed");
  r.source = detail::as_point(detail::require(jmeta, "source", "meta"),
                              "meta.source");
  r.config_digest = digest_from_hex(
      detail::as_string(detail::require(jmeta, "config_digest", "meta"),
                        "meta.config_digest"),
      "meta.config_digest");
  return r;
}

// --- Monte Carlo output ----------------------------------------------------

inline json summary_to_json(const MonteCarloSummary& s) {
  return json{{"trials", s.trials},
              {"ghost_trial_count", s.ghost_trial_count},
              {"degenerate_trials", s.degenerate_trials},
              {"complete_trials", s.complete_trials},
              {"seed", s.seed},
              {"config_digest", digest_hex(s.config_digest)},
              {"meta", json{{"version", kFormatVersion}}}};
}

inline std::string montecarlo_csv(const MonteCarloSummary& s) {
  std::string out = "trial,ghost_count,detected,heard,max_residual\n";
  for (std::size_t i = 0; i < s.reports.size(); ++i) {
    const TrialReport& r = s.reports[i];
    out += std::to_string(i);
    out += ',';
    out += std::to_string(r.ghosts);
    out += ',';
    out += std::to_string(r.detected);
    out += ',';
    out += std::to_string(r.heard_by_all);
    out += ',';
    out += format_double(r.max_residual);
    out += '\n';
  }
  return out;
}

inline std::string noise_sweep_csv(const std::vector<NoiseSweepRow>& rows) {
  std::string out =
      "sigma_t,trials,detection_rate,ghost_rate,median_normal_error,"
      "median_offset_error,median_lambda4_ratio\n";
  for (const NoiseSweepRow& r : rows) {
    out += format_double(r.sigma_t);
    out += ',';
    out += std::to_string(r.trials);
    out += ',';
    out += format_double(r.detection_rate);
    out += ',';
    out += format_double(r.ghost_rate);
    out += ',';
    out += format_double(r.median_normal_error);
    out += ',';
    out += format_double(r.median_offset_error);
    out += ',';
    out += format_double(r.median_lambda4_ratio);
    out += '\n';
  }
  return out;
}

}  // namespace echoroom::io
