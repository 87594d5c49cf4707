#pragma once

#include <echoroom/geometry.hpp>

#include <array>
#include <cmath>
#include <random>
#include <vector>

namespace echoroom::test {

inline double urand(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Point3 random_point(std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Point3(urand(rng, lo, hi), urand(rng, lo, hi), urand(rng, lo, hi));
}

// Random non-coplanar mic tetrahedron with a healthy determinant.
inline std::array<Point3, 4> random_mics(std::mt19937_64& rng) {
  while (true) {
    std::array<Point3, 4> mics{random_point(rng), random_point(rng),
                               random_point(rng), random_point(rng)};
    if (std::abs(coplanarity_det(mics)) > 0.05) return mics;
  }
}

inline Eigen::Vector4d squared_distances_to(const std::array<Point3, 4>& mics,
                                            const Point3& s) {
  Eigen::Vector4d u;
  for (int i = 0; i < 4; ++i)
    u(i) = (s - mics[static_cast<std::size_t>(i)]).squaredNorm();
  return u;
}

inline std::vector<Point3> rect_face(const Point3& a, const Point3& b,
                                     const Point3& c, const Point3& d) {
  return {a, b, c, d};
}

// Axis-aligned shoebox room [0,lx] x [0,ly] x [0,lz] as six walls.
inline std::vector<Wall> box_room(double lx, double ly, double lz) {
  const Point3 o(0, 0, 0);
  std::vector<Wall> walls;
  // floor and ceiling
  walls.emplace_back(rect_face({0, 0, 0}, {lx, 0, 0}, {lx, ly, 0}, {0, ly, 0}));
  walls.emplace_back(rect_face({0, 0, lz}, {lx, 0, lz}, {lx, ly, lz}, {0, ly, lz}));
  // x = 0 and x = lx
  walls.emplace_back(rect_face({0, 0, 0}, {0, ly, 0}, {0, ly, lz}, {0, 0, lz}));
  walls.emplace_back(rect_face({lx, 0, 0}, {lx, ly, 0}, {lx, ly, lz}, {lx, 0, lz}));
  // y = 0 and y = ly
  walls.emplace_back(rect_face({0, 0, 0}, {lx, 0, 0}, {lx, 0, lz}, {0, 0, lz}));
  walls.emplace_back(rect_face({0, ly, 0}, {lx, ly, 0}, {lx, ly, lz}, {0, ly, lz}));
  (void)o;
  return walls;
}

// Compact non-coplanar mic cluster with an on-body loudspeaker, roughly the
// footprint of a small quadrotor.
inline DroneBody standard_body() {
  DroneBody body({Point3(0, 0, 0), Point3(0.4, 0, 0), Point3(0, 0.3, 0),
                  Point3(0.1, 0.1, 0.25)});
  body.loudspeaker = Point3(0.12, 0.08, 0.05);
  return body;
}

}  // namespace echoroom::test
