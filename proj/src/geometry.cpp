#include "pnlk/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "pnlk/error.hpp"

namespace pnlk {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSmallAngle = 1e-2;

// Coefficients of the Rodrigues rotation and its left Jacobian:
//   a = sin(t)/t, b = (1 - cos(t))/t^2, c = (t - sin(t))/t^3
struct RodriguesCoeffs {
  double a, b, c;
};

RodriguesCoeffs rodrigues(double theta) {
  const double t2 = theta * theta;
  if (theta < kSmallAngle) {
    const double t4 = t2 * t2;
    const double t6 = t4 * t2;
    return {1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0,
            0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362880.0};
  }
  const double s = std::sin(theta);
  const double half = std::sin(0.5 * theta);
  return {s / theta, 2.0 * half * half / t2, (theta - s) / (t2 * theta)};
}

Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

bool is_rotation(const Mat3& r) {
  if (!r.allFinite()) return false;
  const Mat3 gram = r.transpose() * r - Mat3::Identity();
  if (gram.cwiseAbs().maxCoeff() > RigidTransform::kTolerance) return false;
  return std::abs(r.determinant() - 1.0) <= RigidTransform::kTolerance;
}

// Rotation vector of R (angle * axis). Throws near a half turn.
Vec3 log_so3(const Mat3& r) {
  const double theta = rotation_angle(r);
  if (theta > kPi - kLogSingularMargin) {
    throw IllConditioned("log: rotation angle " + std::to_string(theta) +
                         " rad is too close to pi for a unique axis");
  }
  const Vec3 sin_axis = 0.5 * vee(r - r.transpose());
  if (theta < kSmallAngle) {
    const double t2 = theta * theta;
    return (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0) * sin_axis;
  }
  if (theta < 3.0) return theta / std::sin(theta) * sin_axis;

  // Near pi the antisymmetric part vanishes; read the axis off the
  // symmetric part n n^T = (sym(R) - cos I) / (1 - cos).
  const double c = std::cos(theta);
  const Mat3 outer = (0.5 * (r + r.transpose()) - c * Mat3::Identity()) / (1.0 - c);
  Eigen::Index k = 0;
  outer.diagonal().maxCoeff(&k);
  Vec3 axis = outer.col(k).normalized();
  if (axis.dot(sin_axis) < 0.0) axis = -axis;
  return theta * axis;
}

}  // namespace

Twist::Twist(const Vector6& xi) : xi_(xi) {
  if (!xi_.allFinite()) throw InvalidArgument("twist has non-finite entries");
}

Twist::Twist(const Vec3& rotation, const Vec3& translation) {
  xi_ << rotation, translation;
  if (!xi_.allFinite()) throw InvalidArgument("twist has non-finite entries");
}

Twist Twist::basis(int i, double step) {
  if (i < 0 || i >= 6) throw InvalidArgument("twist basis index out of range");
  Vector6 xi = Vector6::Zero();
  xi(i) = step;
  return Twist(xi);
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!is_rotation(rotation_)) throw InvalidArgument("rotation block is not in SO(3)");
  if (!translation_.allFinite()) throw InvalidArgument("translation has non-finite entries");
}

RigidTransform::RigidTransform(const Mat4& matrix)
    : RigidTransform(Mat3(matrix.topLeftCorner<3, 3>()), Vec3(matrix.topRightCorner<3, 1>())) {
  if (matrix(3, 0) != 0.0 || matrix(3, 1) != 0.0 || matrix(3, 2) != 0.0 || matrix(3, 3) != 1.0) {
    throw InvalidArgument("homogeneous bottom row must be [0 0 0 1]");
  }
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return {rt, -(rt * translation_), Unchecked{}};
}

PointCloud::PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) throw InvalidArgument("point cloud must contain at least one point");
  for (const auto& p : points_) {
    if (!p.allFinite()) throw InvalidArgument("point cloud has non-finite coordinates");
  }
}

Vec3 PointCloud::centroid() const {
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points_) sum += p;
  return sum / static_cast<double>(points_.size());
}

Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return m;
}

Mat4 wedge(const Twist& xi) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = skew(xi.rotation());
  m.topRightCorner<3, 1>() = xi.translation();
  return m;
}

RigidTransform exp_se3(const Twist& xi) {
  const Vec3 w = xi.rotation();
  const double theta = w.norm();
  const auto [a, b, c] = rodrigues(theta);
  const Mat3 k = skew(w);
  const Mat3 k2 = k * k;
  const Mat3 r = Mat3::Identity() + a * k + b * k2;
  const Mat3 v = Mat3::Identity() + b * k + c * k2;
  return {r, v * xi.translation(), RigidTransform::Unchecked{}};
}

Twist log_se3(const RigidTransform& g) {
  const Vec3 w = log_so3(g.rotation());
  const auto [a, b, c] = rodrigues(w.norm());
  const Mat3 k = skew(w);
  const Mat3 v = Mat3::Identity() + b * k + c * (k * k);
  return Twist(w, v.partialPivLu().solve(g.translation()));
}

PointCloud apply(const RigidTransform& g, const PointCloud& cloud) {
  std::vector<Vec3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) out.push_back(g * p);
  return PointCloud(std::move(out));
}

RigidTransform project_to_rigid(const Mat3& m, const Vec3& t) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  return {svd.matrixU() * d * svd.matrixV().transpose(), t, RigidTransform::Unchecked{}};
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  const Mat3 r = a.rotation_ * b.rotation_;
  const Vec3 t = a.rotation_ * b.translation_ + a.translation_;
  if (is_rotation(r)) return {r, t, RigidTransform::Unchecked{}};
  return project_to_rigid(r, t);
}

double rotation_angle(const Mat3& r) {
  const double s = 0.5 * vee(r - r.transpose()).norm();
  const double c = 0.5 * (r.trace() - 1.0);
  return std::atan2(s, c);
}

PoseError registration_error(const RigidTransform& gt, const RigidTransform& est,
                             RotationMetric metric) {
  PoseError e;
  switch (metric) {
    case RotationMetric::relative_angle:
      e.rotation_deg = rotation_angle(gt.rotation().transpose() * est.rotation());
      break;
    case RotationMetric::twist_difference:
      e.rotation_deg = (log_so3(gt.rotation()) - log_so3(est.rotation())).norm();
      break;
  }
  e.rotation_deg *= 180.0 / kPi;
  e.translation = (est.translation() - gt.translation()).norm();
  return e;
}

}  // namespace pnlk
