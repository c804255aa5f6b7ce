#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <numbers>

#include <unistd.h>

#include "pnlk/bench.hpp"
#include "pnlk/data.hpp"
#include "pnlk/lk_solver.hpp"

using namespace pnlk;
namespace fs = std::filesystem;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

// Checks one bundle against this library: feature within 1e-5 (relative to
// the largest coordinate), Jacobian and one-step twist within 1e-4.
void check_bundle(const fs::path& dir) {
  CAPTURE(dir.string());
  const FixtureBundle b = load_fixture_bundle(dir);
  const PointNetParams params = read_weights(b.weights_path).params;
  const FeatureFn f = [&](const PointCloud& c) { return global_feature(params, c); };

  const Eigen::VectorXd feat = f(b.cloud);
  const double scale = std::max(1.0, max_abs(b.feature));
  CHECK(max_abs(feat - b.feature) <= 1e-5 * scale);

  if (b.jacobian.size() == 0) return;
  LkConfig cfg;
  cfg.perturbation.fill(b.perturbation);
  const Jacobian j = compute_jacobian(f, b.cloud, cfg);
  CHECK(max_abs(j.matrix - b.jacobian) <= 1e-4 * std::max(1.0, max_abs(b.jacobian)));

  if (b.twist.size() == 0) return;
  const PointCloud& source = b.source ? *b.source : b.cloud;
  const TwistSolution step = solve_twist(j.matrix, f(source) - j.base_feature);
  CHECK(max_abs(step.xi.coeffs() - b.twist) <= 1e-4);
}

std::vector<fs::path> bundles_under(const fs::path& root) {
  std::vector<fs::path> out;
  if (fs::exists(root / "weights.bin")) out.push_back(root);
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::exists(e.path() / "weights.bin")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("bundles written by the fixture tool reproduce") {
  const fs::path root = fs::temp_directory_path() / ("pnlk_fixtures_" + std::to_string(::getpid()));
  const PointNetParams params = make_random_params(3);
  LkConfig lk;
  for (int i = 0; i < 3; ++i) {
    const PointCloud cloud = random_cloud(64, 10 + i);
    std::mt19937_64 rng(20 + i);
    const PointCloud source = apply(axis_angle(random_axis(rng), 5 * std::numbers::pi / 180), cloud);
    bench::write_fixture_bundle(root / ("b" + std::to_string(i)), params, {i == 2 ? 32 : 64, 0}, cloud, source, lk);
  }
  const auto dirs = bundles_under(root);
  CHECK(dirs.size() == 3);
  for (const auto& d : dirs) check_bundle(d);

  // The identity step is zero.
  const PointCloud c = random_cloud(32, 5);
  bench::write_fixture_bundle(root / "identity", params, {}, c, c, lk);
  CHECK(max_abs(load_fixture_bundle(root / "identity").twist) < 1e-12);
  fs::remove_all(root);
}

TEST_CASE("bundles exported by the trainer reproduce") {
  const char* env = std::getenv("PNLK_TRAINER_FIXTURES");
  if (!env || !*env) {
    MESSAGE("PNLK_TRAINER_FIXTURES not set; skipping trainer bundles");
    return;
  }
  const auto dirs = bundles_under(env);
  REQUIRE_FALSE(dirs.empty());
  for (const auto& d : dirs) check_bundle(d);
}
