#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"

namespace echoroom {

using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Sign conventions, fixed once against the standard-basis configuration
// (microphones at the origin and the three unit vectors):
//   * eval_f (the bordered 6x6 determinant) equals the closed form
//     4(u2-u1-1)^2 + 4(u3-u1-1)^2 + 4(u4-u1-1)^2 - 16*u1 with sign +1.
//   * det(build_delta(u)) == -eval_f(u) for every input.
inline constexpr double kDeltaDetSign = -1.0;

// Pairwise squared microphone distances plus the machinery to evaluate the
// five-point distance relation for a candidate squared-distance tuple u.
class CMEvaluator {
 public:
  explicit CMEvaluator(const std::array<Point3, 4>& mics) {
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        D_(i, j) = (mics[static_cast<std::size_t>(i)] -
                    mics[static_cast<std::size_t>(j)])
                       .squaredNorm();
  }

  static CMEvaluator from_squared_distances(const Eigen::Matrix4d& D) {
    const double scale = D.cwiseAbs().maxCoeff();
    const double tol = 1e-9 * std::max(scale, 1.0);
    for (int i = 0; i < 4; ++i) {
      if (std::abs(D(i, i)) > tol) throw Error("CMEvaluator: nonzero diagonal");
      for (int j = 0; j < 4; ++j) {
        if (D(i, j) < -tol) throw Error("CMEvaluator: negative squared distance");
        if (std::abs(D(i, j) - D(j, i)) > tol)
          throw Error("CMEvaluator: asymmetric distance matrix");
      }
    }
    // realizability in R^3: the Gram matrix anchored at mic 4 must be PSD
    Eigen::Matrix3d gram;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        gram(i, j) = 0.5 * (D(i, 3) + D(j, 3) - D(i, j));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(gram);
    if (eig.eigenvalues()(0) < -1e-9 * std::max(gram.trace(), 1.0))
      throw Error("CMEvaluator: distances not realizable by points in R^3");
    CMEvaluator ev;
    ev.D_ = D;
    return ev;
  }

  const Eigen::Matrix4d& squared_distances() const { return D_; }

  // Bordered 6x6 matrix: row/col 0 carries (0, u1..u4, 1), the interior is
  // D_{i,j}, and the last row/col is all ones with a zero corner.
  Matrix6d build_cm_matrix(const Eigen::Vector4d& u) const {
    Matrix6d M = Matrix6d::Zero();
    M.block<4, 4>(1, 1) = D_;
    for (int i = 0; i < 4; ++i) {
      M(0, 1 + i) = u(i);
      M(1 + i, 0) = u(i);
    }
    for (int k = 0; k < 5; ++k) {
      M(5, k) = 1.0;
      M(k, 5) = 1.0;
    }
    return M;
  }

  // f_M(u) as the determinant of the bordered matrix (LU, partial pivoting).
  // Zero whenever u lists the squared distances from one point to the mics.
  double eval_f(const Eigen::Vector4d& u) const {
    return build_cm_matrix(u).determinant();
  }

  // Dimensionless variant: all squared distances (D and u) are divided by
  // their mean magnitude before taking the determinant, making the value
  // invariant under uniform scene scaling. f_M is homogeneous of degree 4 in
  // the squared distances, so this equals eval_f / scale^4.
  double eval_f_normalized(const Eigen::Vector4d& u) const {
    const double scale = normalization_scale(u);
    if (scale == 0.0) throw AllZeroInput("eval_f_normalized: all distances zero");
    Matrix6d M = build_cm_matrix(u);
    M.block<5, 5>(0, 0) /= scale;
    return M.determinant();
  }

  double normalization_scale(const Eigen::Vector4d& u) const {
    double sum = 0.0;
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) sum += std::abs(D_(i, j));
    for (int i = 0; i < 4; ++i) sum += std::abs(u(i));
    return sum / 10.0;
  }

  // The 4x4 anchored matrix Delta_{ij} = d_{i,n} + d_{j,n} - d_{i,j}, rows and
  // columns indexed by (s, remaining mics) with mic `anchor` as point n and u
  // substituted for the s-to-mic squared distances. det(Delta) == -eval_f(u).
  Eigen::Matrix4d build_delta(const Eigen::Vector4d& u, int anchor = 3) const {
    std::array<int, 3> others{};
    int k = 0;
    for (int i = 0; i < 4; ++i)
      if (i != anchor) others[static_cast<std::size_t>(k++)] = i;

    Eigen::Matrix4d delta;
    delta(0, 0) = 2.0 * u(anchor);
    for (int a = 0; a < 3; ++a) {
      const int i = others[static_cast<std::size_t>(a)];
      delta(0, 1 + a) = u(anchor) + D_(i, anchor) - u(i);
      delta(1 + a, 0) = delta(0, 1 + a);
      for (int b = 0; b < 3; ++b) {
        const int j = others[static_cast<std::size_t>(b)];
        delta(1 + a, 1 + b) = D_(i, anchor) + D_(j, anchor) - D_(i, j);
      }
    }
    return delta;
  }

 private:
  CMEvaluator() = default;

  Eigen::Matrix4d D_ = Eigen::Matrix4d::Zero();
};

// Point embedding from the anchored matrix: eigendecompose Delta = V L V^T
// (eigenvalues sorted descending), keep the top three modes, and read the
// anchored coordinates off sqrt(L) V^T / sqrt(2). Entry i of the result
// represents point i relative to the anchor (index 0 being the mirror point),
// unique up to an orthogonal transform when the top eigenvalues are simple.
inline std::array<Point3, 4> embed_from_delta(const Eigen::Matrix4d& delta,
                                              double rank_tol = 1e-8) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(delta);
  const double tol = rank_tol * std::abs(delta.trace());
  if (eig.eigenvalues()(0) < -tol)
    throw NegativeEigenvalue("embed_from_delta: Delta is not PSD within tolerance");

  std::array<Point3, 4> points;
  for (auto& p : points) p.setZero();
  for (int mode = 0; mode < 3; ++mode) {
    const int src = 3 - mode;  // Eigen sorts ascending
    const double lambda = std::max(eig.eigenvalues()(src), 0.0);
    const double w = std::sqrt(lambda / 2.0);
    for (int i = 0; i < 4; ++i)
      points[static_cast<std::size_t>(i)][mode] = w * eig.eigenvectors()(i, src);
  }
  return points;
}

// Rotation recovery by direct matrix product: columns of `primed` are the
// embedded anchored mics, columns of `known` the true anchored mics. For
// exactly congruent inputs the product is orthogonal and maps known to primed.
inline Eigen::Matrix3d align_rotation(const Eigen::Matrix3d& primed,
                                      const Eigen::Matrix3d& known) {
  Eigen::FullPivLU<Eigen::Matrix3d> lu(known);
  if (!lu.isInvertible())
    throw SingularKnownMatrix("align_rotation: known anchored mics are coplanar");
  return primed * lu.inverse();
}

// Euclidean distance matrix of squared pairwise distances.
using EDM = Eigen::MatrixXd;

inline EDM edm_from_points(const std::vector<Point3>& points) {
  const auto n = static_cast<Eigen::Index>(points.size());
  EDM D(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      D(i, j) = (points[static_cast<std::size_t>(i)] -
                 points[static_cast<std::size_t>(j)])
                    .squaredNorm();
  return D;
}

// MDS double centering E = -B D B with B = I - (1/n) 1 1^T. E is twice the
// Gram matrix of the centered points, so its rank is at most three for any
// number of microphones and its rows and columns sum to zero.
inline Eigen::MatrixXd mds_center(const EDM& edm) {
  if (edm.rows() != edm.cols() || edm.rows() < 1)
    throw Error("mds_center: EDM must be square and nonempty");
  const double scale = std::max(edm.cwiseAbs().maxCoeff(), 1.0);
  for (Eigen::Index i = 0; i < edm.rows(); ++i) {
    if (std::abs(edm(i, i)) > 1e-8 * scale)
      throw Error("mds_center: EDM diagonal must be zero");
    for (Eigen::Index j = 0; j < edm.cols(); ++j) {
      if (!std::isfinite(edm(i, j)) || edm(i, j) < -1e-8 * scale ||
          std::abs(edm(i, j) - edm(j, i)) > 1e-8 * scale)
        throw Error("mds_center: EDM must be symmetric and nonnegative");
    }
  }
  const auto n = edm.rows();
  const Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n) -
                            Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  return -B * edm * B;
}

}  // namespace echoroom
