#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "oracles.hpp"
#include "pnlk/data.hpp"
#include "pnlk/error.hpp"
#include "pnlk/lk_solver.hpp"

using namespace pnlk;
using std::numbers::pi;

namespace {

LkConfig with_step(double t) {
  LkConfig cfg;
  cfg.perturbation.fill(t);
  return cfg;
}

// Centroid plus second moments: 9-d and full rank for an asymmetric cloud.
Eigen::VectorXd moment_feature(const PointCloud& c) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(9);
  for (const auto& p : c) {
    f.head<3>() += p;
    f(3) += p.x() * p.x();
    f(4) += p.y() * p.y();
    f(5) += p.z() * p.z();
    f(6) += p.x() * p.y();
    f(7) += p.y() * p.z();
    f(8) += p.z() * p.x();
  }
  return f / static_cast<double>(c.size());
}

PointCloud anisotropic_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(0.9 * u(rng) + 0.2, 0.5 * u(rng) - 0.1, 0.2 * u(rng) + 0.05);
  return PointCloud(std::move(pts));
}

}  // namespace

TEST_CASE("config validation") {
  LkConfig cfg;
  cfg.max_iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.perturbation[4] = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.convergence_tol = -1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("Jacobian of the centroid stub is first-order accurate") {
  const PointCloud c = apply(RigidTransform::from_translation(Vec3(0.3, -0.2, 0.5)), oracle::random_points(40, 1));
  const Eigen::MatrixXd exact = oracle::centroid_jacobian(c);

  double prev = 0.0;
  for (double t : {1e-2, 5e-3, 2.5e-3, 1.25e-3}) {
    const Jacobian j = compute_jacobian(oracle::centroid_feature, c, with_step(t));
    const Eigen::MatrixXd err = j.matrix - exact;
    const double e = err.leftCols<3>().cwiseAbs().maxCoeff();
    // Translation columns are linear in t, so the difference is exact.
    CHECK(err.rightCols<3>().cwiseAbs().maxCoeff() < 1e-12);
    CHECK(e < 2.0 * t);
    if (prev > 0) {
      // Halving the step halves the error.
      CHECK(prev / e == doctest::Approx(2.0).epsilon(0.05));
    }
    prev = e;
  }

  // Central differences are second order.
  LkConfig central = with_step(1e-2);
  central.scheme = DifferenceScheme::central;
  const double ec = (compute_jacobian(oracle::centroid_feature, c, central).matrix - exact).cwiseAbs().maxCoeff();
  const double ef = (compute_jacobian(oracle::centroid_feature, c, with_step(1e-2)).matrix - exact).cwiseAbs().maxCoeff();
  CHECK(ec < ef / 10);
}

TEST_CASE("Jacobian examples") {
  const PointCloud origin{Vec3::Zero()};
  const Jacobian j = compute_jacobian(oracle::centroid_feature, origin, {});
  CHECK(j.matrix.leftCols<3>().isZero());
  CHECK((j.matrix.rightCols<3>() + Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(j.feature_calls == 7);
  CHECK(j.base_feature.isZero());
  CHECK(j.degenerate);

  const Jacobian jd = compute_jacobian(oracle::centroid_feature, PointCloud{Vec3(1, 2, 3)}, {});
  CHECK_FALSE(jd.degenerate);

  LkConfig par;
  par.parallel_jacobian = true;
  const PointCloud c = anisotropic_cloud(50, 2);
  CHECK(compute_jacobian(moment_feature, c, par).matrix == compute_jacobian(moment_feature, c, {}).matrix);
}

TEST_CASE("feature extractor call count") {
  const PointCloud c = anisotropic_cloud(30, 3);
  std::atomic<int> calls{0};
  const FeatureFn counted = [&](const PointCloud& p) {
    ++calls;
    return moment_feature(p);
  };
  LkConfig cfg;
  cfg.max_iterations = 4;
  cfg.convergence_tol = 0;
  const RigidTransform g = exp_se3(Twist(Vec3(0.05, 0.02, 0), Vec3(0.01, 0, 0)));
  const LkResult r = lk_register(c, apply(g, c), counted, cfg);
  CHECK(r.iterations_used == 4);
  CHECK(calls == 7 + 4);
  CHECK(r.feature_calls == 11);
}

TEST_CASE("solve_twist examples") {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(8, 6);
  j.topRows<6>() = Eigen::Matrix<double, 6, 6>::Identity();
  Eigen::VectorXd r(8);
  r << 1, 2, 3, 4, 5, 6, 7, 8;
  const TwistSolution s = solve_twist(j, r);
  CHECK((s.xi.coeffs() - r.head<6>()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(s.rank == 6);
  CHECK_FALSE(s.rank_deficient);

  CHECK(solve_twist(j, Eigen::VectorXd::Zero(8)).xi.coeffs().isZero());

  const TwistSolution z = solve_twist(Eigen::MatrixXd::Zero(8, 6), r);
  CHECK(z.rank == 0);
  CHECK(z.rank_deficient);
  CHECK(z.xi.coeffs().isZero());

  // Random tall J: the pseudo-inverse solution satisfies the normal equations.
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd a(20, 6);
  for (auto& v : a.reshaped()) v = nd(rng);
  Eigen::VectorXd b(20);
  for (auto& v : b) v = nd(rng);
  const Twist xi = solve_twist(a, b).xi;
  CHECK((a.transpose() * (a * xi.coeffs() - b)).norm() < 1e-10);

  CHECK_THROWS_AS(solve_twist(Eigen::MatrixXd::Zero(8, 5), r), InvalidArgument);
  CHECK_THROWS_AS(solve_twist(j, Eigen::VectorXd::Zero(7)), InvalidArgument);
}

TEST_CASE("registering a cloud to itself stops at the first iteration") {
  const PointNetParams params = make_random_params(5);
  const PointCloud c = oracle::random_points(32, 6, 0, 1);
  const FeatureFn f = [&](const PointCloud& p) { return global_feature(params, p); };
  const LkResult r = lk_register(c, c, f);
  CHECK(r.iterations_used == 1);
  CHECK(r.converged);
  CHECK(log_se3(r.transform).norm() < 1e-12);
  CHECK(r.residual_history.front() == 0.0);
}

TEST_CASE("centroid stub recovers a pure translation") {
  const PointCloud t = apply(RigidTransform::from_translation(-oracle::random_points(25, 7).centroid()),
                             oracle::random_points(25, 7));
  const Vec3 shift(0.1, 0, 0);
  const PointCloud s = apply(RigidTransform::from_translation(shift), t);
  const LkResult r = lk_register(t, s, oracle::centroid_feature);
  CHECK(r.converged);
  CHECK(r.iterations_used <= 5);
  CHECK((r.transform.translation() + shift).norm() < 1e-4);
  for (std::size_t i = 1; i < r.residual_history.size(); ++i) {
    CHECK(r.residual_history[i] <= r.residual_history[i - 1]);
  }
}

TEST_CASE("moment stub recovers a rotation and translation") {
  const PointCloud t = anisotropic_cloud(200, 8);
  const RigidTransform gt = exp_se3(Twist(Vec3(0.04, -0.06, 0.08), Vec3(0.05, 0.02, -0.03)));
  const PointCloud s = apply(gt.inverse(), t);
  LkConfig cfg;
  cfg.max_iterations = 50;
  const LkResult r = lk_register(t, s, moment_feature, cfg);
  CHECK(r.converged);
  CHECK_FALSE(r.rank_deficient);
  const PoseError e = registration_error(gt, r.transform);
  CHECK(e.rotation_deg < 1e-3);
  CHECK(e.translation < 1e-5);
  CHECK(r.timings.total_s >= r.timings.feature_s);
}

TEST_CASE("non-finite features abort with the iteration number") {
  const PointCloud c = anisotropic_cloud(20, 9);
  int calls = 0;
  const FeatureFn bad = [&](const PointCloud& p) {
    Eigen::VectorXd f = moment_feature(p);
    if (++calls == 9) f(2) = std::numeric_limits<double>::quiet_NaN();
    return f;
  };
  LkConfig cfg;
  cfg.convergence_tol = 0;
  const RigidTransform g = exp_se3(Twist(Vec3(0.1, 0, 0), Vec3::Zero()));
  try {
    lk_register(c, apply(g, c), bad, cfg);
    FAIL("expected RegistrationFailure");
  } catch (const RegistrationFailure& e) {
    CHECK(e.iteration() == 2);
  }

  const FeatureFn inf_base = [](const PointCloud&) {
    return Eigen::VectorXd::Constant(4, std::numeric_limits<double>::infinity()).eval();
  };
  CHECK_THROWS_AS(lk_register(c, c, inf_base), RegistrationFailure);
}
