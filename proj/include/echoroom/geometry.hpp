#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "errors.hpp"

namespace echoroom {

using Point3 = Eigen::Vector3d;

// Absolute coplanarity / on-plane tolerance in meters. Scenes are assumed to
// live at the 1-100 m scale, so this sits far above double rounding noise and
// far below any feature size.
inline constexpr double kCoplanarTol = 1e-9;

inline bool finite(const Point3& p) {
  return std::isfinite(p.x()) && std::isfinite(p.y()) && std::isfinite(p.z());
}

namespace detail {

// 53-bit uniform double in [0, 1).
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool lex_negative(const Point3& n) {
  for (int k = 0; k < 3; ++k) {
    if (n[k] < 0.0) return true;
    if (n[k] > 0.0) return false;
  }
  return false;
}

}  // namespace detail

// Plane in normalized Hesse form: { x : <normal, x> = offset }, ||normal|| = 1.
// Canonical sign: offset >= 0, and for offset == 0 the normal's first nonzero
// component is positive, so equal planes compare equal componentwise.
struct Plane {
  Point3 normal{0.0, 0.0, 1.0};
  double offset = 0.0;

  Plane() = default;

  Plane(const Point3& n, double d) {
    const double len = n.norm();
    if (!(len > 0.0) || !std::isfinite(len) || !std::isfinite(d))
      throw Error("Plane: normal must be a finite nonzero vector");
    normal = n / len;
    offset = d / len;
    canonicalize();
  }

  static Plane through(const Point3& n, const Point3& point) {
    const double len = n.norm();
    if (!(len > 0.0) || !std::isfinite(len))
      throw Error("Plane: normal must be a finite nonzero vector");
    const Point3 unit = n / len;
    return Plane(unit, unit.dot(point));
  }

  double signed_distance(const Point3& p) const { return normal.dot(p) - offset; }

private:
  void canonicalize() {
    if (offset < 0.0 || (offset == 0.0 && detail::lex_negative(normal))) {
      normal = -normal;
      offset = -offset;
    }
  }
};

inline Point3 reflect_point(const Plane& plane, const Point3& p) {
  return p - 2.0 * plane.signed_distance(p) * plane.normal;
}

// Equality of planes as point sets. Canonical forms of planes through the
// origin can differ by an overall sign, so the flipped pairing is tried too.
inline bool same_plane(const Plane& a, const Plane& b, double angle_tol,
                       double offset_tol) {
  const double d = a.normal.dot(b.normal);
  const double sign = d >= 0.0 ? 1.0 : -1.0;
  const double c = std::clamp(sign * d, -1.0, 1.0);
  return std::acos(c) <= angle_tol &&
         std::abs(a.offset - sign * b.offset) <= offset_tol;
}

// det of the 4x4 matrix with the mic positions as columns over a row of ones.
// Zero exactly when the four microphones are coplanar.
inline double coplanarity_det(const std::array<Point3, 4>& mics) {
  Eigen::Matrix4d M;
  for (int i = 0; i < 4; ++i) {
    M.block<3, 1>(0, i) = mics[static_cast<std::size_t>(i)];
    M(3, i) = 1.0;
  }
  return M.determinant();
}

// Best-fit plane through the polygon vertices (PCA on the centered points).
// Rejects vertex lists that are not coplanar within kCoplanarTol, have zero
// area, or form a non-convex polygon.
inline Plane plane_from_polygon(const std::vector<Point3>& vertices) {
  if (vertices.size() < 3) throw DegeneratePolygon("polygon needs at least 3 vertices");
  for (const auto& v : vertices)
    if (!finite(v)) throw DegeneratePolygon("polygon vertex not finite");

  Point3 centroid = Point3::Zero();
  for (const auto& v : vertices) centroid += v;
  centroid /= static_cast<double>(vertices.size());

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& v : vertices) {
    const Point3 d = v - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Point3 n = eig.eigenvectors().col(0);  // smallest eigenvalue
  Plane plane = Plane::through(n, centroid);

  for (const auto& v : vertices)
    if (std::abs(plane.signed_distance(v)) > kCoplanarTol)
      throw NotCoplanar("polygon vertices not coplanar within tolerance");

  // signed area via the fan around vertex 0, measured along the fitted normal
  double area2 = 0.0;
  for (std::size_t k = 1; k + 1 < vertices.size(); ++k) {
    area2 += plane.normal.dot(
        (vertices[k] - vertices[0]).cross(vertices[k + 1] - vertices[0]));
  }
  if (std::abs(area2) <= 1e-12) throw DegeneratePolygon("polygon has zero area");

  // all turns must share a sign (collinear edges allowed)
  const std::size_t n_verts = vertices.size();
  double edge_scale = 0.0;
  for (std::size_t k = 0; k < n_verts; ++k)
    edge_scale = std::max(edge_scale,
                          (vertices[(k + 1) % n_verts] - vertices[k]).squaredNorm());
  const double turn_tol = 1e-12 * edge_scale;
  bool pos = false, neg = false;
  for (std::size_t k = 0; k < n_verts; ++k) {
    const Point3 e0 = vertices[(k + 1) % n_verts] - vertices[k];
    const Point3 e1 = vertices[(k + 2) % n_verts] - vertices[(k + 1) % n_verts];
    const double turn = plane.normal.dot(e0.cross(e1));
    if (turn > turn_tol) pos = true;
    if (turn < -turn_tol) neg = true;
  }
  if (pos && neg) throw NonConvex("polygon is not convex");

  return plane;
}

// Convex planar polygon with its containing plane.
struct Wall {
  std::vector<Point3> vertices;
  Plane plane;

  explicit Wall(std::vector<Point3> verts)
      : vertices(std::move(verts)), plane(plane_from_polygon(vertices)) {}
};

// Rigid placement: rotation (unit quaternion) followed by translation.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Point3 translation = Point3::Zero();

  Pose() = default;

  Pose(const Eigen::Quaterniond& q, const Point3& t) : rotation(q), translation(t) {
    const double norm = rotation.norm();
    if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-6)
      throw Error("Pose: quaternion not normalized");
    rotation.normalize();
    if (!finite(translation)) throw Error("Pose: translation not finite");
  }

  Eigen::Matrix3d matrix() const { return rotation.toRotationMatrix(); }
};

inline Point3 pose_apply(const Pose& pose, const Point3& p) {
  return pose.rotation * p + pose.translation;
}

// Four rigidly mounted microphones (body frame) and an optional on-body
// loudspeaker. The microphones must span a genuine tetrahedron.
struct DroneBody {
  std::array<Point3, 4> mics;
  std::optional<Point3> loudspeaker;

  explicit DroneBody(const std::array<Point3, 4>& m,
                     std::optional<Point3> speaker = std::nullopt)
      : mics(m), loudspeaker(std::move(speaker)) {
    if (std::abs(coplanarity_det(mics)) <= kCoplanarTol)
      throw CoplanarMicrophones("drone microphones are coplanar");
  }
};

struct Box {
  Point3 lo;
  Point3 hi;

  Box(const Point3& l, const Point3& h) : lo(l), hi(h) {
    for (int k = 0; k < 3; ++k)
      if (!(lo[k] <= hi[k])) throw Error("Box: empty extent");
  }
};

// Uniform pose: Haar-uniform rotation (Shoemake's subgroup algorithm for unit
// quaternions) and a uniform translation inside the box.
inline Pose random_pose(std::mt19937_64& rng, const Box& box) {
  const double u1 = detail::uniform01(rng);
  const double t1 = 2.0 * M_PI * detail::uniform01(rng);
  const double t2 = 2.0 * M_PI * detail::uniform01(rng);
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  const Eigen::Quaterniond q(b * std::cos(t2),  // w
                             a * std::sin(t1), a * std::cos(t1), b * std::sin(t2));
  Point3 t;
  for (int k = 0; k < 3; ++k)
    t[k] = box.lo[k] + detail::uniform01(rng) * (box.hi[k] - box.lo[k]);
  return Pose(q, t);
}

}  // namespace echoroom
