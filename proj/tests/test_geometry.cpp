#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "oracles.hpp"
#include "pnlk/error.hpp"
#include "pnlk/geometry.hpp"

using namespace pnlk;
using std::numbers::pi;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

RigidTransform random_transform(std::mt19937_64& rng) {
  return exp_se3(Twist(oracle::random_twist(rng, 1.5, 2.0)));
}

}  // namespace

TEST_CASE("twist rejects non-finite entries") {
  Vector6 v = Vector6::Zero();
  v(3) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Twist{v}, InvalidArgument);
  v(3) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Twist{v}, InvalidArgument);
  CHECK_THROWS_AS(Twist::basis(6), InvalidArgument);
}

TEST_CASE("wedge") {
  CHECK(wedge(Twist::zero()) == Mat4::Zero());

  const Mat4 w = wedge(Twist(Vec3(0, 0, 1), Vec3::Zero()));
  CHECK(w(0, 1) == -1.0);
  CHECK(w(1, 0) == 1.0);
  CHECK(w(0, 2) == 0.0);
  CHECK(w(2, 0) == 0.0);
  CHECK(w(1, 2) == 0.0);
  CHECK(w(2, 1) == 0.0);
  CHECK(w.row(3).isZero());

  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Vector6 xi = oracle::random_twist(rng, 5, 5);
    const Mat4 m = wedge(Twist(xi));
    const Mat3 r = m.topLeftCorner<3, 3>();
    CHECK(max_abs(r + r.transpose()) == 0.0);
    CHECK(max_abs(m - oracle::hat(xi)) == 0.0);
    CHECK(m.row(3).isZero());
  }
}

TEST_CASE("exp examples") {
  CHECK(max_abs(exp_se3(Twist::zero()).matrix() - Mat4::Identity()) == 0.0);

  const Twist z90(Vec3(0, 0, pi / 2), Vec3::Zero());
  const Mat4 series = oracle::expm_series(oracle::hat(z90.coeffs()), 30);
  const Mat4 closed = exp_se3(z90).matrix();
  CHECK(max_abs(closed - series) < 1e-12);
  Mat3 rz;
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK(max_abs(closed.topLeftCorner<3, 3>() - rz) < 1e-15);
  CHECK(closed.topRightCorner<3, 1>().norm() == 0.0);

  const RigidTransform t = exp_se3(Twist(Vec3::Zero(), Vec3(0.1, 0.2, 0.3)));
  CHECK(t.rotation() == Mat3::Identity());
  CHECK(max_abs(t.translation() - Vec3(0.1, 0.2, 0.3)) == 0.0);
}

TEST_CASE("exp matches the matrix series across scales, including the small-angle branch") {
  std::mt19937_64 rng(3);
  for (double scale : {1e-9, 1e-5, 3e-3, 0.05, 0.5, 1.5, 3.0}) {
    for (int i = 0; i < 40; ++i) {
      Vector6 xi = oracle::random_twist(rng, 1.0, 1.0);
      xi.head<3>() *= scale / xi.head<3>().norm() * 0.999;
      const Mat4 a = exp_se3(Twist(xi)).matrix();
      const Mat4 b = oracle::expm_series(oracle::hat(xi), 60);
      CHECK(max_abs(a - b) < 1e-12);
    }
  }
}

TEST_CASE("exp(-xi) is the inverse of exp(xi)") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const Twist xi(oracle::random_twist(rng, 2.0, 3.0));
    const RigidTransform g = exp_se3(xi);
    CHECK(max_abs(exp_se3(-xi).matrix() - g.inverse().matrix()) < 1e-9);
    CHECK(max_abs(compose(g, exp_se3(-xi)).matrix() - Mat4::Identity()) < 1e-9);
  }
}

TEST_CASE("log examples") {
  CHECK(log_se3(RigidTransform::identity()).norm() == 0.0);

  Vector6 v;
  v << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  CHECK((log_se3(exp_se3(Twist(v))).coeffs() - v).cwiseAbs().maxCoeff() < 1e-9);

  const double a = 179.9999 * pi / 180.0;
  const Mat3 rx = Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
  CHECK_THROWS_AS(log_se3(RigidTransform(rx, Vec3::Zero())), IllConditioned);
  const Mat3 half = Eigen::AngleAxisd(pi, Vec3::UnitY()).toRotationMatrix();
  CHECK_THROWS_AS(log_se3(RigidTransform(half, Vec3(1, 2, 3))), IllConditioned);
}

TEST_CASE("exp/log round trip for |w| <= 3") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> mag(0.0, 3.0);
  for (int i = 0; i < 500; ++i) {
    Vector6 xi = oracle::random_twist(rng, 1.0, 2.0);
    xi.head<3>() *= mag(rng) / xi.head<3>().norm();
    const Twist back = log_se3(exp_se3(Twist(xi)));
    CHECK((back.coeffs() - xi).norm() < 1e-7);
  }
  // Angles approaching the singular branch still round trip.
  for (double deg : {170.0, 175.0, 179.0}) {
    const Vector6 xi = (Vector6() << 0, deg * pi / 180.0, 0, 0.3, -0.2, 0.1).finished();
    CHECK((log_se3(exp_se3(Twist(xi))).coeffs() - xi).norm() < 1e-7);
  }
}

TEST_CASE("exp(log(g)) reproduces g") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 200; ++i) {
    const RigidTransform g = random_transform(rng);
    if (rotation_angle(g.rotation()) > pi - 1e-3) continue;
    CHECK(max_abs(exp_se3(log_se3(g)).matrix() - g.matrix()) < 1e-7);
  }
}

TEST_CASE("rigid transform invariants") {
  Mat3 scaled = Mat3::Identity() * 1.001;
  CHECK_THROWS_AS(RigidTransform(scaled, Vec3::Zero()), InvalidArgument);
  Mat3 mirror = Mat3::Identity();
  mirror(2, 2) = -1;
  CHECK_THROWS_AS(RigidTransform(mirror, Vec3::Zero()), InvalidArgument);
  Mat4 m = Mat4::Identity();
  m(3, 0) = 1e-12;
  CHECK_THROWS_AS(RigidTransform{m}, InvalidArgument);
  m(3, 0) = 0;
  CHECK_NOTHROW(RigidTransform{m});
}

TEST_CASE("apply") {
  const PointCloud p = oracle::random_points(50, 1);
  const PointCloud same = apply(RigidTransform::identity(), p);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(same[i] == p[i]);

  const PointCloud one = apply(RigidTransform::from_translation(Vec3(1, 0, 0)), PointCloud{Vec3(0, 0, 0)});
  CHECK(one.size() == 1);
  CHECK(one[0] == Vec3(1, 0, 0));

  std::mt19937_64 rng(29);
  for (int k = 0; k < 20; ++k) {
    const RigidTransform g = random_transform(rng);
    const PointCloud back = apply(g, apply(g.inverse(), p));
    for (std::size_t i = 0; i < p.size(); ++i) CHECK((back[i] - p[i]).norm() < 1e-9);

    // Rigidity.
    const PointCloud q = apply(g, p);
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
      CHECK(std::abs((q[i] - q[i + 1]).norm() - (p[i] - p[i + 1]).norm()) < 1e-9);
    }
  }
}

TEST_CASE("compose") {
  std::mt19937_64 rng(31);
  const RigidTransform g = random_transform(rng);
  CHECK(max_abs(compose(RigidTransform::identity(), g).matrix() - g.matrix()) == 0.0);
  CHECK(max_abs(compose(g, g.inverse()).matrix() - Mat4::Identity()) < 1e-9);

  RigidTransform acc;
  Mat4 plain = Mat4::Identity();
  for (int i = 0; i < 20; ++i) {
    const RigidTransform step = random_transform(rng);
    acc = compose(step, acc);
    plain = step.matrix() * plain;
    CHECK(std::abs(acc.rotation().determinant() - 1.0) < 1e-7);
  }
  CHECK(max_abs(acc.matrix() - plain) < 1e-9);
}

TEST_CASE("registration_error examples") {
  std::mt19937_64 rng(37);
  const RigidTransform gt = random_transform(rng);

  const PoseError same = registration_error(gt, gt);
  CHECK(same.rotation_deg == 0.0);
  CHECK(same.translation == 0.0);

  const RigidTransform z10(Eigen::AngleAxisd(10 * pi / 180, Vec3::UnitZ()).toRotationMatrix(), Vec3::Zero());
  const RigidTransform est(gt.rotation() * z10.rotation(), gt.translation());
  const PoseError e10 = registration_error(gt, est);
  CHECK(std::abs(e10.rotation_deg - 10.0) < 1e-6);
  CHECK(e10.translation == doctest::Approx(0.0));

  const RigidTransform shifted(gt.rotation(), gt.translation() + Vec3(0.3, 0, 0.4));
  const PoseError t = registration_error(gt, shifted);
  CHECK(t.translation == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.rotation_deg == 0.0);
}

TEST_CASE("registration_error is left-invariant") {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform gt = random_transform(rng);
    const RigidTransform est = compose(exp_se3(Twist(oracle::random_twist(rng, 0.3, 0.3))), gt);
    const RigidTransform h = random_transform(rng);
    const PoseError a = registration_error(gt, est);
    const PoseError b = registration_error(compose(h, gt), compose(h, est));
    CHECK(std::abs(a.rotation_deg - b.rotation_deg) < 1e-7);
    CHECK(a.rotation_deg >= 0.0);
    CHECK(a.translation >= 0.0);
    // The rotation part is also right-invariant under rotation-only changes.
    const PoseError c = registration_error(gt, est, RotationMetric::twist_difference);
    CHECK(c.rotation_deg >= 0.0);
  }
}

TEST_CASE("point cloud validation") {
  CHECK_THROWS_AS(PointCloud(std::vector<Vec3>{}), InvalidArgument);
  CHECK_THROWS_AS(PointCloud({Vec3(0, std::numeric_limits<double>::infinity(), 0)}), InvalidArgument);
  const PointCloud c{Vec3(0, 0, 0), Vec3(2, 4, 6)};
  CHECK(c.centroid() == Vec3(1, 2, 3));
}

TEST_CASE("project_to_rigid returns the nearest rotation") {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> n(0.0, 1e-6);
  for (int i = 0; i < 50; ++i) {
    const RigidTransform g = random_transform(rng);
    Mat3 noisy = g.rotation();
    for (int k = 0; k < 9; ++k) noisy(k / 3, k % 3) += n(rng);
    const RigidTransform p = project_to_rigid(noisy, g.translation());
    CHECK((p.rotation().transpose() * p.rotation() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p.rotation() - g.rotation()).norm() < 1e-5);
  }
}
