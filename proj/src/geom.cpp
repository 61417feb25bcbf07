#include "nmnet/geom.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <string>

#include "nmnet/error.hpp"

namespace nmnet {

EssentialMatrix EssentialMatrix::normalized(const Mat3& m) {
  const double norm = m.norm();
  if (!(norm > 1e-15) || !std::isfinite(norm)) {
    throw Error(ErrorCode::DegenerateConfiguration, "essential matrix has zero or non-finite norm");
  }
  return EssentialMatrix(m / norm);
}

Mat3 frame_matrix(const AffineFrame& frame, const Point2& kp) {
  if (!(std::abs(frame.determinant()) > kMinFrameDeterminant)) {
    throw Error(ErrorCode::DegenerateFrame,
                "|det A| = " + std::to_string(std::abs(frame.determinant())));
  }
  Mat3 t;
  t << frame.a11, frame.a12, kp.x,
       frame.a21, frame.a22, kp.y,
       0.0, 0.0, 1.0;
  return t;
}

namespace {

// Closed-form inverse of [[A, k], [0, 1]]; keeps the bottom row exact.
Mat3 inverse_affine(const Mat3& t) {
  const Eigen::Matrix2d a_inv = t.topLeftCorner<2, 2>().inverse();
  Mat3 inv = Mat3::Identity();
  inv.topLeftCorner<2, 2>() = a_inv;
  inv.topRightCorner<2, 1>() = -a_inv * t.topRightCorner<2, 1>();
  return inv;
}

}  // namespace

Mat3 local_transform(const Correspondence& c) {
  const Mat3 t = frame_matrix(c.frame, c.kp);
  const Mat3 t_prime = frame_matrix(c.frame_prime, c.kp_prime);
  Mat3 h = t_prime * inverse_affine(t);
  h.row(2) << 0.0, 0.0, 1.0;
  return h;
}

Point2 project(const Mat3& h, const Point2& p) {
  const Eigen::Vector3d q = h * Eigen::Vector3d(p.x, p.y, 1.0);
  if (!(std::abs(q.z()) > 1e-12)) {
    throw Error(ErrorCode::ProjectionAtInfinity, "homogeneous depth " + std::to_string(q.z()));
  }
  return {q.x() / q.z(), q.y() / q.z()};
}

double reprojection_error(const Mat3& h_i, const Mat3& h_j, const Point2& k_i) {
  const Point2 a = project(h_j, k_i);
  const Point2 b = project(h_i, k_i);
  return std::hypot(a.x - b.x, a.y - b.y);
}

double reprojection_error(const Correspondence& c_i, const Correspondence& c_j) {
  return reprojection_error(local_transform(c_i), local_transform(c_j), c_i.kp);
}

double symmetric_epipolar_distance(const EssentialMatrix& e, const Correspondence& c) {
  const Mat3& m = e.matrix();
  const Eigen::Vector3d x(c.kp.x, c.kp.y, 1.0);
  const Eigen::Vector3d xp(c.kp_prime.x, c.kp_prime.y, 1.0);
  const Eigen::Vector3d line = m * x;
  const Eigen::Vector3d line_prime = m.transpose() * xp;
  const double r = xp.dot(line);
  const double n1 = line.x() * line.x() + line.y() * line.y();
  const double n2 = line_prime.x() * line_prime.x() + line_prime.y() * line_prime.y();
  if (n1 < 1e-24 && n2 < 1e-24) {
    throw Error(ErrorCode::DegenerateEpipolar, "both epipolar lines degenerate");
  }
  // A single degenerate side contributes nothing unless the residual is nonzero.
  double d = 0.0;
  if (r != 0.0) {
    d += n1 >= 1e-24 ? r * r / n1 : std::numeric_limits<double>::infinity();
    d += n2 >= 1e-24 ? r * r / n2 : std::numeric_limits<double>::infinity();
  }
  return d;
}

LabelVector label_set(std::span<const Correspondence> set, const EssentialMatrix& e_gt,
                      double threshold) {
  if (!(threshold > 0.0)) {
    throw Error(ErrorCode::ConfigError, "label threshold must be positive");
  }
  LabelVector labels(set.size(), 0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    try {
      labels[i] = symmetric_epipolar_distance(e_gt, set[i]) < threshold ? 1 : 0;
    } catch (const Error&) {
      labels[i] = 0;
    }
  }
  return labels;
}

}  // namespace nmnet
