#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace nmnet {

/// Camera-normalized image coordinates (focal length 1).
struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// 2x2 local affine shape around a keypoint, row-major.
struct AffineFrame {
  double a11 = 1.0;
  double a12 = 0.0;
  double a21 = 0.0;
  double a22 = 1.0;

  static AffineFrame identity() { return {}; }
  static AffineFrame from_matrix(const Eigen::Matrix2d& m) {
    return {m(0, 0), m(0, 1), m(1, 0), m(1, 1)};
  }

  Eigen::Matrix2d matrix() const {
    Eigen::Matrix2d m;
    m << a11, a12, a21, a22;
    return m;
  }
  double determinant() const { return a11 * a22 - a12 * a21; }

  friend bool operator==(const AffineFrame&, const AffineFrame&) = default;
};

inline constexpr double kMinFrameDeterminant = 1e-9;

struct Correspondence {
  Point2 kp;
  AffineFrame frame;
  Point2 kp_prime;
  AffineFrame frame_prime;

  friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

using Mat3 = Eigen::Matrix3d;

/// Essential matrix scaled to unit Frobenius norm. The rank-2 / equal singular
/// value structure is the producer's responsibility (see eight_point and the
/// scene generator); this type only fixes the scale.
class EssentialMatrix {
 public:
  EssentialMatrix() = default;

  /// Throws DegenerateConfiguration when m has (near) zero norm.
  static EssentialMatrix normalized(const Mat3& m);
  /// Wraps a matrix already at unit norm (e.g. read back from disk) without
  /// rescaling, so stored bits survive a round trip.
  static EssentialMatrix from_unit(const Mat3& m) { return EssentialMatrix(m); }

  const Mat3& matrix() const { return m_; }

  friend bool operator==(const EssentialMatrix& a, const EssentialMatrix& b) {
    return a.m_ == b.m_;
  }

 private:
  explicit EssentialMatrix(const Mat3& m) : m_(m) {}
  Mat3 m_ = Mat3::Zero();
};

/// 1 = inlier, 0 = outlier.
using LabelVector = std::vector<std::uint8_t>;

inline constexpr double kDefaultLabelThreshold = 1e-4;

/// [[A, k], [0, 1]]. Throws DegenerateFrame if |det A| <= 1e-9.
Mat3 frame_matrix(const AffineFrame& frame, const Point2& kp);

/// H = T' * T^-1, the affine map carrying the first keypoint's local frame onto
/// the second one.
Mat3 local_transform(const Correspondence& c);

/// Dehomogenized h * [p; 1]. Throws ProjectionAtInfinity when the third
/// component is below 1e-12 in magnitude.
Point2 project(const Mat3& h, const Point2& p);

/// e_j(c_i): distance between where H_j and H_i send k_i.
double reprojection_error(const Correspondence& c_i, const Correspondence& c_j);

/// Same quantity with the local transforms precomputed.
double reprojection_error(const Mat3& h_i, const Mat3& h_j, const Point2& k_i);

/// r^2 * (1/(l1^2+l2^2) + 1/(l'1^2+l'2^2)), r = [k';1]^T E [k;1],
/// l = E [k;1], l' = E^T [k';1].
double symmetric_epipolar_distance(const EssentialMatrix& e, const Correspondence& c);

/// 1 iff symmetric_epipolar_distance < threshold; degenerate correspondences get 0.
LabelVector label_set(std::span<const Correspondence> set, const EssentialMatrix& e_gt,
                      double threshold = kDefaultLabelThreshold);

}  // namespace nmnet
