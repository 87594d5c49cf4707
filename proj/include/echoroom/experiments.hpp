#pragma once

// Empirical studies. Random poses probe how often echo sorting accepts a
// tuple that corresponds to no physical wall (a ghost); a hand-built scene
// of parallel walls realizes such a ghost on purpose; noise sweeps track how
// the reconstruction degrades as delay measurements blur.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <echoroom/digest.hpp>
#include <echoroom/errors.hpp>
#include <echoroom/geometry.hpp>
#include <echoroom/reconstruction.hpp>
#include <echoroom/simulator.hpp>

namespace echoroom {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Independent per-trial stream so serial and parallel execution agree.
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 1));
}

inline double scene_extent(const Scene& scene) {
  double r = 1.0;
  for (const Wall& w : scene.walls)
    for (const Point3& v : w.vertices) r = std::max(r, v.norm());
  return r;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline std::vector<double> ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace detail

// Spearman rank correlation (tie-aware), for monotone-trend checks.
inline double spearman(const std::vector<double>& x,
                       const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw Error("spearman: need two equally sized samples");
  const std::vector<double> rx = detail::ranks(x);
  const std::vector<double> ry = detail::ranks(y);
  const auto n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double num = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    dx += (rx[i] - mx) * (rx[i] - mx);
    dy += (ry[i] - my) * (ry[i] - my);
  }
  if (dx == 0.0 || dy == 0.0) return 0.0;  // constant sample: no trend either way
  return num / std::sqrt(dx * dy);
}

struct GhostDetail {
  std::array<std::size_t, 4> tuple{};
  double residual = 0.0;
  Point3 mirror = Point3::Zero();
};

struct TrialReport {
  Pose pose;
  int heard_by_all = 0;  // true walls with an echo at every mic
  int detected = 0;
  int ghosts = 0;
  double max_residual = 0.0;  // worst criterion value among accepted walls
  std::vector<GhostDetail> ghost_details;
  std::vector<double> normal_errors;  // radians, per matched true wall
  std::vector<double> offset_errors;  // meters, per matched true wall
  bool degenerate = false;            // simulation or detection threw
};

struct MonteCarloSummary {
  std::uint64_t trials = 0;
  std::uint64_t ghost_trial_count = 0;   // trials with at least one ghost
  std::uint64_t degenerate_trials = 0;
  std::uint64_t complete_trials = 0;     // every heard-by-all wall detected
  std::uint64_t seed = 0;
  std::uint64_t config_digest = 0;
  std::vector<TrialReport> reports;
};

struct MonteCarloOptions {
  DetectionOptions detection;
  double tau_match = 1e-6;  // radians, and relative offset versus scene extent
  bool keep_reports = true;
};

namespace detail {

inline std::uint64_t monte_carlo_digest(const Scene& scene,
                                        const DroneBody& body, const Box& box,
                                        std::uint64_t trials,
                                        std::uint64_t seed,
                                        const MonteCarloOptions& opts) {
  Digest d;
  d.feed(std::uint64_t{trials}).feed(seed);
  d.feed(box.lo).feed(box.hi);
  for (const Wall& w : scene.walls)
    for (const Point3& v : w.vertices) d.feed(v);
  d.feed(std::uint64_t{scene.audibility == Audibility::polygon ? 0u : 1u});
  if (const auto* fixed = std::get_if<FixedSource>(&scene.source_mode)) {
    d.feed(std::string_view{"fixed"}).feed(fixed->position);
  } else {
    d.feed(std::string_view{"drone"});
  }
  for (const Point3& m : body.mics) d.feed(m);
  if (body.loudspeaker) d.feed(*body.loudspeaker);
  d.feed(opts.detection.c).feed(opts.detection.t0);
  d.feed(opts.detection.epsilon_sort).feed(opts.detection.rank_tol);
  d.feed(opts.detection.pruning_slack).feed(opts.detection.tau_merge);
  d.feed(opts.tau_match);
  return d.value();
}

}  // namespace detail

inline MonteCarloSummary monte_carlo(const Scene& scene, const DroneBody& body,
                                     std::uint64_t trials, std::uint64_t seed,
                                     const Box& box,
                                     const MonteCarloOptions& options = {}) {
  if (std::holds_alternative<DroneSource>(scene.source_mode) &&
      !body.loudspeaker)
    throw MissingLoudspeaker("monte_carlo: drone-source scene without a loudspeaker");

  MonteCarloSummary summary;
  summary.trials = trials;
  summary.seed = seed;
  summary.config_digest =
      detail::monte_carlo_digest(scene, body, box, trials, seed, options);

  const double extent = detail::scene_extent(scene);
  const double off_tol = options.tau_match * extent;

  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(detail::sub_seed(seed, trial));
    TrialReport rep;
    rep.pose = random_pose(rng, box);
    try {
      const EchoSet echoes =
          simulate_echoes(scene, body, rep.pose, options.detection.c,
                          options.detection.t0);
      std::array<Point3, 4> mics;
      for (std::size_t i = 0; i < 4; ++i)
        mics[i] = pose_apply(rep.pose, body.mics[i]);
      const Point3 L = resolve_source(scene, body, rep.pose);

      for (std::size_t w = 0; w < scene.walls.size(); ++w) {
        bool all = true;
        for (std::size_t i = 0; i < 4 && all; ++i)
          all = std::any_of(
              echoes.mics[i].begin(), echoes.mics[i].end(),
              [&](const Echo& e) { return e.wall == static_cast<int>(w); });
        if (all) ++rep.heard_by_all;
      }

      const auto detections =
          detect_walls(echoes, mics, L, options.detection);
      rep.detected = static_cast<int>(detections.size());

      std::vector<bool> wall_found(scene.walls.size(), false);
      for (const DetectedWall& det : detections) {
        rep.max_residual = std::max(rep.max_residual, std::abs(det.residual));
        bool matched = false;
        for (std::size_t w = 0; w < scene.walls.size(); ++w) {
          const Plane& truth = scene.walls[w].plane;
          if (!same_plane(det.plane, truth, options.tau_match, off_tol))
            continue;
          matched = true;
          wall_found[w] = true;
          const double sign =
              det.plane.normal.dot(truth.normal) >= 0.0 ? 1.0 : -1.0;
          const double c =
              std::clamp(sign * det.plane.normal.dot(truth.normal), -1.0, 1.0);
          rep.normal_errors.push_back(std::acos(c));
          rep.offset_errors.push_back(
              std::abs(det.plane.offset - sign * truth.offset));
          break;
        }
        if (!matched) {
          ++rep.ghosts;
          rep.ghost_details.push_back({det.tuple, det.residual, det.mirror});
        }
      }

      bool complete = true;
      for (std::size_t w = 0; w < scene.walls.size(); ++w) {
        bool all = true;
        for (std::size_t i = 0; i < 4 && all; ++i)
          all = std::any_of(
              echoes.mics[i].begin(), echoes.mics[i].end(),
              [&](const Echo& e) { return e.wall == static_cast<int>(w); });
        if (all && !wall_found[w]) complete = false;
      }
      if (complete) ++summary.complete_trials;
    } catch (const Error&) {
      rep.degenerate = true;
    }

    if (rep.degenerate) ++summary.degenerate_trials;
    if (rep.ghosts > 0) ++summary.ghost_trial_count;
    if (options.keep_reports) summary.reports.push_back(std::move(rep));
  }
  return summary;
}

// A deliberately bad position. Four small parallel walls, one per mic, all at
// the same distance from their mic: the four echoes then mimic one common
// mirror point, and echo sorting reports a plane none of the walls lie in.
// A non-parallel floor heard by every mic keeps a genuine wall in the scene.
struct GhostSceneBundle {
  Scene scene;
  DroneBody body;
  Pose pose;          // identity; the body is given in world coordinates
  Point3 source;      // the fixed loudspeaker position
  Plane ghost_plane;  // analytic prediction of the false wall
  double wall_distance = 0.0;  // common mic-to-wall distance
  std::size_t floor_wall = 0;  // index of the genuine wall in scene.walls
  std::size_t parallel_walls = 4;
};

inline GhostSceneBundle build_ghost_scene(double perturb_offset = 0.0) {
  const Point3 n = Point3(0.12, -0.07, 1.0).normalized();
  const std::array<Point3, 4> mics{Point3(0.0, 0.0, 1.0),
                                   Point3(3.1, 0.2, 1.15),
                                   Point3(0.4, 3.3, 0.9),
                                   Point3(3.0, 3.2, 1.45)};
  const Point3 L(1.4, 1.6, 1.2);
  const double delta = 0.8;

  // in-plane axes shared by all parallel walls
  const Point3 u = n.cross(Point3::UnitX()).normalized();
  const Point3 v = n.cross(u);

  std::vector<Wall> walls;
  for (std::size_t i = 0; i < 4; ++i) {
    const double shift = (i == 0) ? perturb_offset : 0.0;
    const double level = n.dot(mics[i]) + delta + shift;
    const Plane plane(n, level);
    // center the patch on the specular point for its own mic
    const Point3 s = reflect_point(plane, L);
    const double ds = plane.signed_distance(s);
    const double dm = plane.signed_distance(mics[i]);
    const Point3 hit = s + ds / (ds - dm) * (mics[i] - s);
    const double half = 0.45;
    walls.emplace_back(std::vector<Point3>{hit + half * u + half * v,
                                           hit - half * u + half * v,
                                           hit - half * u - half * v,
                                           hit + half * u - half * v});
  }
  // generous floor well below everything, tilted against nothing
  walls.emplace_back(std::vector<Point3>{Point3(-15, -15, 0), Point3(18, -15, 0),
                                         Point3(18, 18, 0), Point3(-15, 18, 0)});

  GhostSceneBundle bundle{
      Scene(walls, FixedSource{L}, Audibility::polygon),
      DroneBody(mics, std::nullopt),
      Pose{},
      L,
      Plane(n, n.dot(L) - delta),
      delta,
      4,  // floor index
      4};

  // the construction is verified, not trusted
  for (std::size_t i = 0; i < 4; ++i) {
    const double want = delta + ((i == 0) ? perturb_offset : 0.0);
    const double got =
        std::abs(bundle.scene.walls[i].plane.signed_distance(mics[i]));
    if (std::abs(got - want) > 1e-12)
      throw Error("ghost scene: mic-to-wall distance drifted");
    for (std::size_t j = 0; j < 4; ++j) {
      const bool audible =
          specular_visible(bundle.scene.walls[j], L, mics[i]);
      if (audible != (i == j))
        throw Error("ghost scene: wall audibility does not match the design");
    }
    if (!specular_visible(bundle.scene.walls[4], L, mics[i]))
      throw Error("ghost scene: floor must be audible to every mic");
  }
  if (perturb_offset == 0.0) {
    // the four echoes must agree exactly with the analytic ghost plane
    const Point3 ghost_mirror = reflect_point(bundle.ghost_plane, L);
    for (std::size_t i = 0; i < 4; ++i) {
      const Point3 s = reflect_point(bundle.scene.walls[i].plane, L);
      const double real = (s - mics[i]).norm();
      const double fake = (ghost_mirror - mics[i]).norm();
      if (std::abs(real - fake) > 1e-9)
        throw Error("ghost scene: echo distances disagree with the ghost plane");
    }
  }
  return bundle;
}

struct NoiseSweepRow {
  double sigma_t = 0.0;
  std::size_t trials = 0;
  double detection_rate = 0.0;  // matched true walls over heard-by-all walls
  double ghost_rate = 0.0;      // ghost detections per trial
  double median_normal_error = 0.0;   // radians
  double median_offset_error = 0.0;   // meters
  double median_lambda4_ratio = 0.0;  // |smallest eigenvalue| / trace, genuine tuples
};

namespace detail {

// Tolerances widened for noisy delays: a delay error of sigma_t moves a
// squared distance by about 2*c*sigma*sqrt(d), and the anchored matrix
// entries combine three such terms. Four standard deviations of headroom.
struct NoisyTolerances {
  double rank_tol;
  double consistency;
  double slack;
  double match;
};

inline NoisyTolerances noisy_tolerances(double sigma_t, double c,
                                        double mean_sq_dist,
                                        const DetectionOptions& base) {
  const double z = 4.0;
  const double du =
      2.0 * c * sigma_t * z * std::sqrt(mean_sq_dist) + (c * sigma_t * z) * (c * sigma_t * z);
  const double rel = du / std::max(2.0 * mean_sq_dist, 1e-300);
  NoisyTolerances t;
  t.rank_tol = base.rank_tol + 12.0 * rel;
  // the linear mirror solve amplifies distance errors by roughly the ratio of
  // room scale to mic spread, so the realizability gate opens much wider
  t.consistency = base.consistency_tol + 100.0 * rel;
  t.slack = 1e-7 * std::sqrt(mean_sq_dist) + 2.0 * z * c * sigma_t;
  t.match = 1e-6 + 50.0 * c * sigma_t;
  return t;
}

}  // namespace detail

inline std::vector<NoiseSweepRow> noise_sweep(
    const Scene& scene, const DroneBody& body, const Pose& pose,
    const std::vector<double>& sigmas, std::size_t trials_per_sigma,
    std::uint64_t seed, const DetectionOptions& base = {}) {
  const EchoSet clean = simulate_echoes(scene, body, pose, base.c, base.t0);
  std::array<Point3, 4> mics;
  for (std::size_t i = 0; i < 4; ++i) mics[i] = pose_apply(pose, body.mics[i]);
  const Point3 L = resolve_source(scene, body, pose);
  const CMEvaluator ev(mics);
  const double extent = detail::scene_extent(scene);

  double mean_sq = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < 4; ++i)
    for (const Echo& e : clean.mics[i]) {
      const double r = base.c * (e.delay - base.t0);
      mean_sq += r * r;
      ++count;
    }
  if (count == 0) throw Error("noise_sweep: the pose hears no echoes");
  mean_sq /= static_cast<double>(count);

  std::vector<int> heard_by_all_walls;
  for (std::size_t w = 0; w < scene.walls.size(); ++w) {
    bool all = true;
    for (std::size_t i = 0; i < 4 && all; ++i)
      all = std::any_of(clean.mics[i].begin(), clean.mics[i].end(),
                        [&](const Echo& e) { return e.wall == static_cast<int>(w); });
    if (all) heard_by_all_walls.push_back(static_cast<int>(w));
  }

  std::vector<NoiseSweepRow> rows;
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    const double sigma = sigmas[si];
    const auto tol = detail::noisy_tolerances(sigma, base.c, mean_sq, base);
    DetectionOptions opts = base;
    opts.rank_tol = tol.rank_tol;
    opts.consistency_tol = tol.consistency;
    opts.pruning_slack = tol.slack;

    NoiseSweepRow row;
    row.sigma_t = sigma;
    row.trials = trials_per_sigma;

    std::vector<double> normal_errors, offset_errors, lambda_ratios;
    std::size_t matched_walls = 0, ghost_count = 0;
    for (std::size_t trial = 0; trial < trials_per_sigma; ++trial) {
      const std::uint64_t sub =
          detail::sub_seed(seed, si * 1000003ull + trial);
      const EchoSet noisy = add_noise(clean, NoiseModel{sigma, sub});
      const auto detections = detect_walls_rank(noisy, mics, L, opts);

      std::vector<bool> found(scene.walls.size(), false);
      for (const DetectedWall& det : detections) {
        bool matched = false;
        for (int w : heard_by_all_walls) {
          const Plane& truth = scene.walls[static_cast<std::size_t>(w)].plane;
          if (!same_plane(det.plane, truth, tol.match, tol.match * extent))
            continue;
          matched = true;
          if (!found[static_cast<std::size_t>(w)]) {
            found[static_cast<std::size_t>(w)] = true;
            ++matched_walls;
          }
          const double sign =
              det.plane.normal.dot(truth.normal) >= 0.0 ? 1.0 : -1.0;
          const double c =
              std::clamp(sign * det.plane.normal.dot(truth.normal), -1.0, 1.0);
          normal_errors.push_back(std::acos(c));
          offset_errors.push_back(
              std::abs(det.plane.offset - sign * truth.offset));
          break;
        }
        if (!matched) ++ghost_count;
      }

      // spectrum of the anchored matrix at the ground-truth tuples
      for (int w : heard_by_all_walls) {
        Eigen::Vector4d u;
        bool ok = true;
        for (std::size_t i = 0; i < 4 && ok; ++i) {
          const auto it = std::find_if(
              noisy.mics[i].begin(), noisy.mics[i].end(),
              [&](const Echo& e) { return e.wall == w; });
          if (it == noisy.mics[i].end()) {
            ok = false;
            break;
          }
          const double r = base.c * (it->delay - base.t0);
          u(static_cast<int>(i)) = r * r;
        }
        if (!ok) continue;
        const Eigen::Matrix4d delta = ev.build_delta(u, base.anchor);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(delta);
        double smallest = eig.eigenvalues()(0);
        for (int k = 1; k < 4; ++k)
          if (std::abs(eig.eigenvalues()(k)) < std::abs(smallest))
            smallest = eig.eigenvalues()(k);
        lambda_ratios.push_back(std::abs(smallest) /
                                std::max(std::abs(delta.trace()), 1e-300));
      }
    }

    const double denom = static_cast<double>(heard_by_all_walls.size()) *
                         static_cast<double>(trials_per_sigma);
    row.detection_rate = denom > 0 ? static_cast<double>(matched_walls) / denom : 0.0;
    row.ghost_rate = trials_per_sigma
                         ? static_cast<double>(ghost_count) /
                               static_cast<double>(trials_per_sigma)
                         : 0.0;
    row.median_normal_error = detail::median(normal_errors);
    row.median_offset_error = detail::median(offset_errors);
    row.median_lambda4_ratio = detail::median(lambda_ratios);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace echoroom
