#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace pnlk {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vector6 = Eigen::Matrix<double, 6, 1>;

/// se(3) coordinates ordered [w1, w2, w3, t1, t2, t3]: rotation first.
class Twist {
 public:
  Twist() : xi_(Vector6::Zero()) {}
  explicit Twist(const Vector6& xi);
  Twist(const Vec3& rotation, const Vec3& translation);

  static Twist zero() { return Twist(); }
  /// i-th unit twist scaled by `step` (i in [0, 6)).
  static Twist basis(int i, double step = 1.0);

  const Vector6& coeffs() const { return xi_; }
  Vec3 rotation() const { return xi_.head<3>(); }
  Vec3 translation() const { return xi_.tail<3>(); }
  double norm() const { return xi_.norm(); }
  double operator[](int i) const { return xi_(i); }

  Twist operator-() const { return Twist(Vector6(-xi_)); }
  Twist operator*(double s) const { return Twist(Vector6(xi_ * s)); }

 private:
  Vector6 xi_;
};

/// Element of SE(3). Construction checks orthonormality and det(R) = +1
/// to 1e-9, so every live instance is a proper rigid motion.
class RigidTransform {
 public:
  static constexpr double kTolerance = 1e-9;

  RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  RigidTransform(const Mat3& rotation, const Vec3& translation);
  explicit RigidTransform(const Mat4& matrix);

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat4 matrix() const;
  RigidTransform inverse() const;

  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

 private:
  struct Unchecked {};
  RigidTransform(const Mat3& rotation, const Vec3& translation, Unchecked)
      : rotation_(rotation), translation_(translation) {}

  friend RigidTransform compose(const RigidTransform&, const RigidTransform&);
  friend RigidTransform exp_se3(const Twist&);
  friend RigidTransform project_to_rigid(const Mat3&, const Vec3&);

  Mat3 rotation_;
  Vec3 translation_;
};

/// N x 3 point set, N >= 1, all coordinates finite.
class PointCloud {
 public:
  explicit PointCloud(std::vector<Vec3> points);
  PointCloud(std::initializer_list<Vec3> points) : PointCloud(std::vector<Vec3>(points)) {}

  std::size_t size() const { return points_.size(); }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  const std::vector<Vec3>& points() const { return points_; }
  std::span<const Vec3> view() const { return points_; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  Vec3 centroid() const;

 private:
  std::vector<Vec3> points_;
};

Mat3 skew(const Vec3& w);

/// se(3) hat operator: skew(w) top-left, t in the last column, zero last row.
Mat4 wedge(const Twist& xi);

/// Closed-form exponential (Rodrigues rotation, left Jacobian on translation).
RigidTransform exp_se3(const Twist& xi);

/// Inverse of exp_se3. Throws IllConditioned once the rotation angle is
/// within kLogSingularMargin of pi, where the axis is no longer well defined.
Twist log_se3(const RigidTransform& g);
inline constexpr double kLogSingularMargin = 1e-5;

PointCloud apply(const RigidTransform& g, const PointCloud& cloud);

/// Matrix product a * b; the rotation is snapped back onto SO(3) when
/// round-off drift exceeds RigidTransform::kTolerance.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);

/// Nearest rigid transform to (M, t) in the Frobenius sense (SVD projection).
RigidTransform project_to_rigid(const Mat3& m, const Vec3& t);

enum class RotationMetric {
  relative_angle,   ///< angle of R_gt^T R_est
  twist_difference  ///< |log(R_gt) - log(R_est)| in degrees
};

struct PoseError {
  double rotation_deg = 0.0;
  double translation = 0.0;
};

PoseError registration_error(const RigidTransform& gt, const RigidTransform& est,
                             RotationMetric metric = RotationMetric::relative_angle);

/// Rotation angle in radians of R, in [0, pi].
double rotation_angle(const Mat3& r);

}  // namespace pnlk
