#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "oracles.hpp"
#include "pnlk/data.hpp"
#include "pnlk/error.hpp"
#include "pnlk/icp.hpp"

using namespace pnlk;
using std::numbers::pi;

TEST_CASE("nearest neighbour examples") {
  const PointCloud t{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 2, 0)};
  const PointCloud s{Vec3(0.4, 0, 0), Vec3(0.5, 0, 0), Vec3(2, 0, 0), Vec3(0, 1.9, 0.1)};
  const auto nn = nearest_neighbors(s, t);
  REQUIRE(nn.size() == 4);
  CHECK(nn[0].index == 0);
  CHECK(nn[0].squared_distance == doctest::Approx(0.16));
  CHECK(nn[1].index == 0);  // tie: lowest index
  CHECK(nn[2].index == 1);
  CHECK(nn[2].squared_distance == doctest::Approx(1.0));
  CHECK(nn[3].index == 2);

  const PointCloud dup{Vec3(1, 1, 1), Vec3(1, 1, 1)};
  CHECK(nearest_neighbors(PointCloud{Vec3(1, 1, 1)}, dup)[0].index == 0);
}

TEST_CASE("nearest neighbours agree with a grid search") {
  const PointCloud t = oracle::random_points(200, 1);
  const PointCloud s = oracle::random_points(200, 2);
  const auto nn = nearest_neighbors(s, t);
  const auto ref = oracle::grid_nearest(s, t, 0.25);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(nn[i].index == ref[i].first);
    CHECK(nn[i].squared_distance == doctest::Approx(ref[i].second).epsilon(1e-12));
  }
}

TEST_CASE("best_fit_transform examples") {
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const RigidTransform g = exp_se3(Twist(oracle::random_twist(rng, 1.5, 1.0)));
    const PointCloud src = oracle::random_points(4, 10 + k);
    const PointCloud dst = apply(g, src);
    const RigidTransform fit = best_fit_transform(src.points(), dst.points());
    CHECK((fit.matrix() - g.matrix()).cwiseAbs().maxCoeff() < 1e-10);
  }

  // A mirrored target still yields a proper rotation.
  const PointCloud src = oracle::random_points(10, 4);
  std::vector<Vec3> mirrored;
  for (const auto& p : src) mirrored.emplace_back(p.x(), p.y(), -p.z());
  const RigidTransform fit = best_fit_transform(src.points(), mirrored);
  CHECK(fit.rotation().determinant() == doctest::Approx(1.0));

  const std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2), Vec3(-3, -3, -3)};
  CHECK_THROWS_AS(best_fit_transform(line, line), RankDeficient);
  const std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(1, 0, 0)};
  CHECK_THROWS_AS(best_fit_transform(two, two), RankDeficient);
  CHECK_THROWS_AS(best_fit_transform(line, two), InvalidArgument);
}

TEST_CASE("best_fit_transform ignores the order of the pairs") {
  std::mt19937_64 rng(5);
  const PointCloud src = oracle::random_points(30, 6);
  std::normal_distribution<double> noise(0.0, 0.01);
  const RigidTransform g = exp_se3(Twist(oracle::random_twist(rng, 0.5, 0.5)));
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.push_back(g * p + Vec3(noise(rng), noise(rng), noise(rng)));
  const RigidTransform a = best_fit_transform(src.points(), dst);

  std::vector<std::size_t> idx(src.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<Vec3> ps, pd;
  for (auto i : idx) {
    ps.push_back(src[i]);
    pd.push_back(dst[i]);
  }
  CHECK((best_fit_transform(ps, pd).matrix() - a.matrix()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("icp on identical clouds stops after one iteration") {
  const PointCloud c = oracle::random_points(100, 7);
  const IcpResult r = icp_register(c, c);
  CHECK(r.iterations_used == 1);
  CHECK(r.converged);
  CHECK(r.mse_history.front() == 0.0);
  CHECK((r.transform.matrix() - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("icp recovers a small perturbation") {
  std::mt19937_64 rng(8);
  int ok = 0;
  for (int k = 0; k < 10; ++k) {
    const PointCloud t = random_cloud(100, 100 + k);
    const Vec3 axis = random_axis(rng);
    const RigidTransform perturb = axis_angle(axis, 5 * pi / 180, Vec3(0.05, 0.05, 0.05));
    const PointCloud s = apply(perturb, t);
    const IcpResult r = icp_register(t, s, IcpConfig{50, 1e-12});
    const PoseError e = registration_error(perturb.inverse(), r.transform);
    if (e.rotation_deg < 0.5 && e.translation < 1e-3) ++ok;
  }
  CHECK(ok >= 9);
}

TEST_CASE("correspondence MSE never increases") {
  for (int k = 0; k < 50; ++k) {
    PairSpec spec;
    spec.initial_angle_deg = 5.0 + k;
    spec.num_points = 80;
    spec.seed = static_cast<std::uint64_t>(k);
    const RegistrationPair p = make_pair(random_cloud(200, 1000 + k), spec);
    const IcpResult r = icp_register(p.templ, p.source, IcpConfig{30, 0});
    for (std::size_t i = 1; i < r.mse_history.size(); ++i) {
      CHECK(r.mse_history[i] <= r.mse_history[i - 1] * (1 + 1e-12) + 1e-15);
    }
  }
}

TEST_CASE("icp config and failure modes") {
  CHECK_THROWS_AS((IcpConfig{0, 1e-8}.validate()), InvalidArgument);
  CHECK_THROWS_AS((IcpConfig{10, -1}.validate()), InvalidArgument);
  const PointCloud line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  CHECK_THROWS_AS(icp_register(line, line), RegistrationFailure);
}

TEST_CASE("nearest neighbour cost grows quadratically") {
  auto time_nn = [](std::size_t n) {
    const PointCloud a = oracle::random_points(n, 11), b = oracle::random_points(n, 12);
    double best = 1e9;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto nn = nearest_neighbors(a, b);
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      best = std::min(best, s + 0.0 * static_cast<double>(nn.size()));
    }
    return best;
  };
  const double small = time_nn(500), large = time_nn(2000);
  MESSAGE("N=500: " << small << " s, N=2000: " << large << " s");
  CHECK(large / small >= 8.0);
}
