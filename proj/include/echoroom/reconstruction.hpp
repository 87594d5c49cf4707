#pragma once

// Echo sorting. Delays become squared distances, unlabeled tuples are
// enumerated (one entry per mic, pruned by triangle bounds) and accepted when
// the bordered determinant vanishes; accepted tuples yield the mirror point,
// the wall plane, and four points on the wall. Acceptance is necessary, not
// sufficient, so detections at unlucky poses may include ghost walls.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <echoroom/cayley_menger.hpp>
#include <echoroom/errors.hpp>
#include <echoroom/geometry.hpp>
#include <echoroom/simulator.hpp>

namespace echoroom {

struct SquaredDistanceSets {
  // per mic: squared distances, parallel to delay_index into EchoSet order
  std::array<std::vector<double>, 4> d;
  std::array<std::vector<std::size_t>, 4> delay_index;
};

inline SquaredDistanceSets squared_distances(const EchoSet& echoes,
                                             double c = kSpeedOfSound,
                                             double t0 = 0.0) {
  if (!(c > 0.0)) throw Error("speed of sound must be positive");
  SquaredDistanceSets out;
  for (std::size_t i = 0; i < 4; ++i) {
    out.d[i].reserve(echoes.mics[i].size());
    out.delay_index[i].reserve(echoes.mics[i].size());
    for (std::size_t k = 0; k < echoes.mics[i].size(); ++k) {
      const double t = echoes.mics[i][k].delay;
      if (t < t0) throw NegativeDelay("delay precedes the emission time");
      const double r = c * (t - t0);
      out.d[i].push_back(r * r);
      out.delay_index[i].push_back(k);
    }
  }
  return out;
}

struct CandidateTuple {
  std::array<std::size_t, 4> idx;  // position within each mic's list
  Eigen::Vector4d d;               // the squared distances themselves
};

namespace detail {

inline double scene_scale(const SquaredDistanceSets& dsets,
                          const std::array<Point3, 4>& mics) {
  double scale = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j)
      scale = std::max(scale, (mics[i] - mics[j]).norm());
    for (double v : dsets.d[i]) scale = std::max(scale, std::sqrt(v));
  }
  return scale;
}

}  // namespace detail

// All tuples drawing one entry per mic that survive the triangle bounds: a
// common mirror point s with ||s - m_i|| = sqrt(d_i) forces
// |sqrt(d_i) - sqrt(d_j)| <= ||m_i - m_j||, so anything beyond that (plus
// slack for roundoff) cannot be genuine. Lexicographic order over indices.
inline std::vector<CandidateTuple> candidate_tuples(
    const SquaredDistanceSets& dsets, const std::array<Point3, 4>& mics,
    double slack = -1.0) {
  if (slack < 0.0) slack = 1e-7 * detail::scene_scale(dsets, mics);

  Eigen::Matrix4d gap;  // pairwise mic separations
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) gap(i, j) = (mics[i] - mics[j]).norm();

  std::array<std::vector<double>, 4> r;  // plain distances
  for (std::size_t i = 0; i < 4; ++i) {
    r[i].reserve(dsets.d[i].size());
    for (double v : dsets.d[i]) r[i].push_back(std::sqrt(v));
  }

  std::vector<CandidateTuple> out;
  const auto compatible = [&](std::size_t i, double ri, std::size_t j,
                              double rj) {
    return std::abs(ri - rj) <= gap(i, j) + slack;
  };
  for (std::size_t a = 0; a < r[0].size(); ++a)
    for (std::size_t b = 0; b < r[1].size(); ++b) {
      if (!compatible(0, r[0][a], 1, r[1][b])) continue;
      for (std::size_t c = 0; c < r[2].size(); ++c) {
        if (!compatible(0, r[0][a], 2, r[2][c]) ||
            !compatible(1, r[1][b], 2, r[2][c]))
          continue;
        for (std::size_t e = 0; e < r[3].size(); ++e) {
          if (!compatible(0, r[0][a], 3, r[3][e]) ||
              !compatible(1, r[1][b], 3, r[3][e]) ||
              !compatible(2, r[2][c], 3, r[3][e]))
            continue;
          CandidateTuple t;
          t.idx = {a, b, c, e};
          t.d = Eigen::Vector4d(dsets.d[0][a], dsets.d[1][b], dsets.d[2][c],
                                dsets.d[3][e]);
          out.push_back(t);
        }
      }
    }
  return out;
}

// Linear solve for the point s with ||s - m_i||^2 = d_i: subtracting ||s||^2
// from each equation leaves a linear system in (s, ||s||^2). Always defined
// for non-coplanar mics, even when d is not realizable by any point; callers
// judge that via consistency_residual.
inline Point3 recover_mirror_point(const std::array<Point3, 4>& mics,
                                   const Eigen::Vector4d& d) {
  Eigen::Matrix4d Mt;  // rows (m_i^T, 1)
  Eigen::Vector4d rhs;
  for (int i = 0; i < 4; ++i) {
    const auto& m = mics[static_cast<std::size_t>(i)];
    Mt.row(i) << m.x(), m.y(), m.z(), 1.0;
    rhs(i) = m.squaredNorm() - d(i);
  }
  Eigen::FullPivLU<Eigen::Matrix4d> lu(Mt);
  if (!lu.isInvertible())
    throw CoplanarMicrophones("recover_mirror_point: mics are coplanar");
  const Eigen::Vector4d y = lu.solve(rhs);  // (2s, -||s||^2)
  return 0.5 * y.head<3>();
}

// Dimensionless worst-case mismatch between the distances s actually has and
// the distances d claims, relative to the larger of the two.
inline double consistency_residual(const std::array<Point3, 4>& mics,
                                   const Eigen::Vector4d& d, const Point3& s) {
  double scale = 0.0;
  double worst = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double actual = (s - mics[static_cast<std::size_t>(i)]).squaredNorm();
    scale = std::max({scale, std::abs(d(i)), actual});
    worst = std::max(worst, std::abs(actual - d(i)));
  }
  if (scale == 0.0) return 0.0;
  return worst / scale;
}

struct DetectedWall {
  Point3 mirror = Point3::Zero();
  Plane plane;
  std::array<Point3, 4> points{};  // on the wall, one per mic
  std::array<double, 4> taus{};
  std::array<std::size_t, 4> tuple{};  // delay indices, one per mic
  double residual = 0.0;     // normalized criterion value at acceptance
  double consistency = 0.0;  // consistency_residual of the mirror point
};

// Wall plane and on-wall points from a mirror point: the plane bisects the
// segment L-s, and the reflection point for mic i divides s->m_i at tau_i.
inline DetectedWall recover_wall(const std::array<Point3, 4>& mics,
                                 const Point3& L, const Point3& s) {
  const Point3 axis = s - L;
  const double sep = axis.norm();
  if (sep <= 1e-9) throw SourceOnWall("mirror point coincides with the source");

  DetectedWall wall;
  wall.mirror = s;
  wall.plane = Plane::through(axis, 0.5 * (s + L));
  for (std::size_t i = 0; i < 4; ++i) {
    const Point3 to_mic = s - mics[i];
    const double denom = 2.0 * axis.dot(to_mic);
    if (std::abs(denom) <= 1e-12 * sep * std::max(to_mic.norm(), sep))
      throw MicOnMirrorPlane("reflection ray parallel to the wall for a mic");
    const double tau = sep * sep / denom;
    wall.taus[i] = tau;
    wall.points[i] = (1.0 - tau) * s + tau * mics[i];
  }
  return wall;
}

struct DetectionOptions {
  double c = kSpeedOfSound;
  double t0 = 0.0;
  double epsilon_sort = 1e-9;  // bound on |normalized criterion|
  double rank_tol = 1e-8;      // eigenvalue ratio bound for the rank test
  // A vanishing criterion is necessary but not sufficient: a tuple can sneak
  // under epsilon_sort without any point realizing its distances. Accepted
  // tuples must also be consistent, so that a real or virtual mirror point
  // exists; tolerance-band accidents fail this by many orders of magnitude.
  double consistency_tol = 1e-9;
  double pruning_slack = -1.0;  // negative: 1e-7 x scene scale
  double tau_merge = 1e-6;      // meters, mirror-point merge radius
  int anchor = 3;               // mic used as the origin of the anchored matrix
  bool dedupe = true;
};

struct DetectionDiagnostics {
  std::size_t raw_tuples = 0;    // full product before pruning
  std::size_t candidates = 0;    // survived the triangle bounds
  std::size_t accepted = 0;      // passed criterion and consistency
  std::size_t inconsistent = 0;  // passed the criterion, not realizable
  std::size_t degenerate = 0;    // skipped in wall recovery
  std::size_t merged = 0;        // removed by deduplication
};

// Merge detections whose mirror points agree within tau_merge, keeping the
// lowest-residual representative of each cluster. Order follows the first
// appearance of each cluster, so results are stable for a fixed input order.
inline std::vector<DetectedWall> dedupe_walls(
    const std::vector<DetectedWall>& walls, double tau_merge = 1e-6) {
  std::vector<DetectedWall> out;
  for (const DetectedWall& w : walls) {
    bool placed = false;
    for (DetectedWall& kept : out) {
      if ((kept.mirror - w.mirror).norm() <= tau_merge) {
        if (w.residual < kept.residual) kept = w;
        placed = true;
        break;
      }
    }
    if (!placed) out.push_back(w);
  }
  return out;
}

namespace detail {

enum class Acceptance { criterion, rank };

inline std::vector<DetectedWall> detect_impl(
    const EchoSet& echoes, const std::array<Point3, 4>& mics, const Point3& L,
    const DetectionOptions& opts, Acceptance mode,
    DetectionDiagnostics* diag) {
  const SquaredDistanceSets dsets = squared_distances(echoes, opts.c, opts.t0);
  const std::vector<CandidateTuple> tuples =
      candidate_tuples(dsets, mics, opts.pruning_slack);
  const CMEvaluator ev(mics);

  DetectionDiagnostics local;
  local.raw_tuples = dsets.d[0].size() * dsets.d[1].size() *
                     dsets.d[2].size() * dsets.d[3].size();
  local.candidates = tuples.size();

  std::vector<DetectedWall> raw;
  for (const CandidateTuple& t : tuples) {
    double value = 0.0;
    bool accepted = false;
    Point3 s = Point3::Zero();
    try {
      if (mode == Acceptance::criterion) {
        value = ev.eval_f_normalized(t.d);
        accepted = std::abs(value) <= opts.epsilon_sort;
        if (accepted) s = recover_mirror_point(mics, t.d);
      } else {
        const Eigen::Matrix4d delta = ev.build_delta(t.d, opts.anchor);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(delta);
        const Eigen::Vector4d lam = eig.eigenvalues();  // ascending
        double smallest = lam(0);
        for (int k = 1; k < 4; ++k)
          if (std::abs(lam(k)) < std::abs(smallest)) smallest = lam(k);
        const double tr = std::max(std::abs(delta.trace()),
                                   std::numeric_limits<double>::min());
        value = smallest / tr;
        accepted = std::abs(value) <= opts.rank_tol;
        if (accepted) {
          // embedding drops the smallest mode, then a change of basis through
          // the known mic offsets carries the mirror point back to the world
          const auto pts = embed_from_delta(delta, opts.rank_tol);
          const auto anchor = static_cast<std::size_t>(opts.anchor);
          Eigen::Matrix3d primed, known;
          int col = 0;
          for (std::size_t i = 0; i < 4; ++i) {
            if (i == anchor) continue;
            primed.col(col) = pts[static_cast<std::size_t>(col) + 1];
            known.col(col) = mics[i] - mics[anchor];
            ++col;
          }
          const Eigen::Matrix3d R = align_rotation(primed, known);
          s = mics[anchor] + R.inverse() * pts[0];
        }
      }
      if (!accepted) continue;
      const double consistency = consistency_residual(mics, t.d, s);
      if (consistency > opts.consistency_tol) {
        ++local.inconsistent;
        continue;
      }
      DetectedWall wall = recover_wall(mics, L, s);
      wall.tuple = {dsets.delay_index[0][t.idx[0]],
                    dsets.delay_index[1][t.idx[1]],
                    dsets.delay_index[2][t.idx[2]],
                    dsets.delay_index[3][t.idx[3]]};
      wall.residual = std::abs(value);
      wall.consistency = consistency;
      raw.push_back(wall);
      ++local.accepted;
    } catch (const SourceOnWall&) {
      ++local.degenerate;
    } catch (const MicOnMirrorPlane&) {
      ++local.degenerate;
    } catch (const NegativeEigenvalue&) {
      ++local.degenerate;  // rank mode: not realizable, treated as rejection
    } catch (const AllZeroInput&) {
      ++local.degenerate;
    }
  }

  std::vector<DetectedWall> out =
      opts.dedupe ? dedupe_walls(raw, opts.tau_merge) : raw;
  local.merged = raw.size() - out.size();
  if (diag) *diag = local;
  return out;
}

}  // namespace detail

inline std::vector<DetectedWall> detect_walls(
    const EchoSet& echoes, const std::array<Point3, 4>& mics, const Point3& L,
    const DetectionOptions& opts = {}, DetectionDiagnostics* diag = nullptr) {
  return detail::detect_impl(echoes, mics, L, opts,
                             detail::Acceptance::criterion, diag);
}

inline std::vector<DetectedWall> detect_walls_rank(
    const EchoSet& echoes, const std::array<Point3, 4>& mics, const Point3& L,
    const DetectionOptions& opts = {}, DetectionDiagnostics* diag = nullptr) {
  return detail::detect_impl(echoes, mics, L, opts, detail::Acceptance::rank,
                             diag);
}

struct LocalizedSource {
  Point3 position = Point3::Zero();
  double consistency = 0.0;  // consistency_residual of the direct distances
};

// The direct path is its own degenerate echo: treating the four first-arrival
// distances like mirror distances pins down the source position.
inline LocalizedSource localize_loudspeaker(const std::array<double, 4>& delays,
                                            const std::array<Point3, 4>& mics,
                                            double c = kSpeedOfSound,
                                            double t0 = 0.0) {
  if (!(c > 0.0)) throw Error("speed of sound must be positive");
  Eigen::Vector4d d;
  for (int i = 0; i < 4; ++i) {
    const double t = delays[static_cast<std::size_t>(i)];
    if (t < t0) throw NegativeDelay("delay precedes the emission time");
    d(i) = c * (t - t0) * (c * (t - t0));
  }
  LocalizedSource out;
  out.position = recover_mirror_point(mics, d);
  out.consistency = consistency_residual(mics, d, out.position);
  return out;
}

}  // namespace echoroom
