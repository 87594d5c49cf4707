#pragma once

// Forward model. Walls act as mirrors: each wall reflects the loudspeaker to
// a mirror point, and a microphone records the echo as if the sound came from
// that point. Only first-order reflections are produced, with no occlusion or
// attenuation; a wall either contributes a clean delay to a mic or nothing.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <variant>
#include <vector>

#include <echoroom/errors.hpp>
#include <echoroom/geometry.hpp>

namespace echoroom {

inline constexpr double kSpeedOfSound = 343.0;  // m/s, dry air at 20 C

// Metric slack for the reflection-point-in-polygon test. Points within this
// distance of an edge still count as inside, so grazing reflections off a
// wall boundary are audible rather than flickering with roundoff.
inline constexpr double kEdgeTol = 1e-9;

struct FixedSource {
  Point3 position;  // world frame
};
struct DroneSource {};  // use the loudspeaker carried on the body

using SourceMode = std::variant<FixedSource, DroneSource>;

// "polygon" restricts audibility to reflection points inside the finite wall;
// "plane" treats every wall as infinite, so any same-side mic hears it.
enum class Audibility { polygon, plane };

struct Scene {
  std::vector<Wall> walls;
  SourceMode source_mode = DroneSource{};
  Audibility audibility = Audibility::polygon;

  Scene(std::vector<Wall> walls_, SourceMode mode = DroneSource{},
        Audibility aud = Audibility::polygon)
      : walls(std::move(walls_)), source_mode(mode), audibility(aud) {
    if (walls.empty()) throw Error("scene needs at least one wall");
    if (const auto* fixed = std::get_if<FixedSource>(&source_mode)) {
      if (!finite(fixed->position))
        throw Error("fixed source position is not finite");
      for (const Wall& w : walls)
        if (std::abs(w.plane.signed_distance(fixed->position)) <= kCoplanarTol)
          throw DegenerateSource("fixed source lies on a wall plane");
    }
  }
};

struct Echo {
  double delay = 0.0;     // seconds, includes the emission time t0
  int wall = -1;          // index into Scene::walls (hidden ground truth)
  Point3 mirror = Point3::Zero();  // mirror point in world frame (ditto)
};

struct EchoSet {
  double t0 = 0.0;
  std::array<std::vector<Echo>, 4> mics;

  std::vector<double> delays(std::size_t mic) const {
    std::vector<double> out;
    out.reserve(mics[mic].size());
    for (const Echo& e : mics[mic]) out.push_back(e.delay);
    return out;
  }
};

struct NoiseModel {
  double sigma_t = 0.0;  // seconds
  std::uint64_t seed = 0;
};

inline Point3 mirror_point(const Wall& wall, const Point3& source) {
  if (!finite(source)) throw Error("mirror_point: source is not finite");
  return reflect_point(wall.plane, source);
}

namespace detail {

// Distance from x to the line through a and b, signed so that positive means
// the polygon interior side. Assumes x lies in the polygon's plane.
inline double edge_distance(const Point3& a, const Point3& b, const Point3& x,
                            const Point3& normal) {
  const Point3 e = b - a;
  const double len = e.norm();
  if (len <= 0.0) return 0.0;
  return normal.dot(e.cross(x - a)) / len;
}

// Twice the signed area of the polygon about its plane normal; the sign tells
// the winding direction.
inline double winding_sign(const std::vector<Point3>& verts,
                           const Point3& normal) {
  Point3 acc = Point3::Zero();
  for (std::size_t i = 0; i < verts.size(); ++i)
    acc += verts[i].cross(verts[(i + 1) % verts.size()]);
  return normal.dot(acc) >= 0.0 ? 1.0 : -1.0;
}

inline bool inside_convex_polygon(const Wall& wall, const Point3& x) {
  const double sign = winding_sign(wall.vertices, wall.plane.normal);
  for (std::size_t i = 0; i < wall.vertices.size(); ++i) {
    const Point3& a = wall.vertices[i];
    const Point3& b = wall.vertices[(i + 1) % wall.vertices.size()];
    if (sign * edge_distance(a, b, x, wall.plane.normal) < -kEdgeTol)
      return false;
  }
  return true;
}

// Standard normal via Box-Muller on top of the bit-level uniform sampler, so
// noisy outputs are reproducible across standard libraries.
inline double gauss(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1], keeps log finite
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace detail

inline bool specular_visible(const Wall& wall, const Point3& source,
                             const Point3& mic,
                             Audibility audibility = Audibility::polygon) {
  const double ds = wall.plane.signed_distance(source);
  const double dm = wall.plane.signed_distance(mic);
  // strictly the same side; a point on the plane hears nothing
  if (ds * dm <= 0.0 || std::abs(ds) <= kCoplanarTol ||
      std::abs(dm) <= kCoplanarTol)
    return false;
  if (audibility == Audibility::plane) return true;

  const Point3 s = reflect_point(wall.plane, source);
  // s and mic straddle the plane, so the segment meets it at a unique point
  const double dsm = wall.plane.signed_distance(s);
  const double t = dsm / (dsm - dm);
  const Point3 hit = s + t * (mic - s);
  return detail::inside_convex_polygon(wall, hit);
}

inline Point3 resolve_source(const Scene& scene, const DroneBody& body,
                             const Pose& pose) {
  if (const auto* fixed = std::get_if<FixedSource>(&scene.source_mode))
    return fixed->position;
  if (!body.loudspeaker)
    throw MissingLoudspeaker("scene wants the on-body source but the body has no loudspeaker");
  return pose_apply(pose, *body.loudspeaker);
}

inline EchoSet simulate_echoes(const Scene& scene, const DroneBody& body,
                               const Pose& pose, double c = kSpeedOfSound,
                               double t0 = 0.0) {
  if (!(c > 0.0)) throw Error("speed of sound must be positive");
  const Point3 source = resolve_source(scene, body, pose);
  for (const Wall& w : scene.walls)
    if (std::abs(w.plane.signed_distance(source)) <= kCoplanarTol)
      throw DegenerateSource("source lies on a wall plane");

  std::array<Point3, 4> mics;
  for (std::size_t i = 0; i < 4; ++i) mics[i] = pose_apply(pose, body.mics[i]);

  EchoSet out;
  out.t0 = t0;
  for (std::size_t w = 0; w < scene.walls.size(); ++w) {
    const Wall& wall = scene.walls[w];
    const Point3 s = mirror_point(wall, source);
    for (std::size_t i = 0; i < 4; ++i) {
      if (!specular_visible(wall, source, mics[i], scene.audibility)) continue;
      Echo e;
      e.delay = t0 + (s - mics[i]).norm() / c;
      e.wall = static_cast<int>(w);
      e.mirror = s;
      out.mics[i].push_back(e);
    }
  }
  for (auto& list : out.mics)
    std::stable_sort(list.begin(), list.end(),
                     [](const Echo& a, const Echo& b) { return a.delay < b.delay; });
  return out;
}

inline std::array<double, 4> direct_path_delays(const Scene& scene,
                                                const DroneBody& body,
                                                const Pose& pose,
                                                double c = kSpeedOfSound,
                                                double t0 = 0.0) {
  if (!(c > 0.0)) throw Error("speed of sound must be positive");
  const Point3 source = resolve_source(scene, body, pose);
  for (const Wall& w : scene.walls)
    if (std::abs(w.plane.signed_distance(source)) <= kCoplanarTol)
      throw DegenerateSource("source lies on a wall plane");
  std::array<double, 4> delays{};
  for (std::size_t i = 0; i < 4; ++i)
    delays[i] = t0 + (source - pose_apply(pose, body.mics[i])).norm() / c;
  return delays;
}

inline EchoSet add_noise(const EchoSet& echoes, const NoiseModel& noise) {
  if (noise.sigma_t < 0.0) throw Error("sigma_t must be nonnegative");
  EchoSet out = echoes;
  if (noise.sigma_t == 0.0) return out;
  std::mt19937_64 rng(noise.seed);
  for (auto& list : out.mics) {
    for (Echo& e : list) e.delay += noise.sigma_t * detail::gauss(rng);
    std::stable_sort(list.begin(), list.end(),
                     [](const Echo& a, const Echo& b) { return a.delay < b.delay; });
  }
  return out;
}

}  // namespace echoroom
