#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "oracles.hpp"
#include "pnlk/bench.hpp"
#include "pnlk/error.hpp"

using namespace pnlk;
using namespace pnlk::bench;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pnlk_test_bench_" + std::to_string(::getpid())) / name;
  fs::create_directories(p);
  return p;
}

CommonOptions common_in(const fs::path& dir) {
  CommonOptions c;
  c.out_dir = dir;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("config parsing") {
  const BenchConfig d = parse_bench_config("{}");
  CHECK(d.lk.max_iterations == 20);
  CHECK(d.q_n == 16);

  const BenchConfig c = parse_bench_config(R"({
      "lk": {"max_iterations": 7, "perturbation": 0.005, "scheme": "central", "convergence_tol": 1e-9},
      "icp": {"max_iterations": 40, "mse_change_tol": 1e-10},
      "qformat": {"n": 12, "accumulation": "per_mac"},
      "metric": "twist_difference"})");
  CHECK(c.lk.max_iterations == 7);
  CHECK(c.lk.perturbation[5] == 0.005);
  CHECK(c.lk.scheme == DifferenceScheme::central);
  CHECK(c.lk.convergence_tol == 1e-9);
  CHECK(c.icp.max_iterations == 40);
  CHECK(c.q_n == 12);
  CHECK(c.accumulation == AccumulationMode::per_mac);
  CHECK(c.metric == RotationMetric::twist_difference);

  const BenchConfig v = parse_bench_config(R"({"lk": {"perturbation": [1, 2, 3, 4, 5, 6]}})");
  CHECK(v.lk.perturbation[2] == 3.0);

  CHECK_THROWS_AS(parse_bench_config("{oops"), ParseError);
  CHECK_THROWS_AS(parse_bench_config(R"({"lk": {"max_iterations": 0}})"), InvalidArgument);
  CHECK_THROWS_AS(parse_bench_config(R"({"lk": {"scheme": "backward"}})"), InvalidArgument);
  CHECK_THROWS_AS(parse_bench_config(R"({"qformat": {"n": 40}})"), InvalidArgument);
}

TEST_CASE("method names") {
  for (Method m : {Method::pointnetlk_float, Method::pointnetlk_quant, Method::icp}) {
    CHECK(method_from_string(to_string(m)) == m);
  }
  CHECK_THROWS_AS(method_from_string("ndt"), InvalidArgument);
}

TEST_CASE("CSV round trip with quoting") {
  Table t;
  t.schema = "test/1";
  t.header = {"name", "value"};
  t.rows = {{"FC(3,64)", format_number(0.1)}, {"say \"hi\"", format_number(std::nan(""))}, {"plain", "7"}};
  const fs::path p = scratch("csv") / "t.csv";
  write_csv(p, t);
  const Table back = read_csv(p);
  CHECK(back.schema == "test/1");
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
  CHECK(back.number(0, "value") == 0.1);
  CHECK(std::isnan(back.number(1, "value")));
  CHECK(back.text(0, "name") == "FC(3,64)");
  CHECK_THROWS(back.column("missing"));
  CHECK(format_number(1.0 / 3) == "0.3333333333");
}

TEST_CASE("statistics") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK(mean({1, 2, 3, 6}) == 3.0);

  std::vector<double> x{256, 512, 1024, 2048}, y;
  for (double v : x) y.push_back(0.5 * v * v);
  const LineFit f = fit_loglog(x, y);
  CHECK(f.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::exp(f.intercept) == doctest::Approx(0.5).epsilon(1e-9));

  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2, 0) != derive_seed(1, 0, 2));

  std::vector<std::atomic<int>> hits(100);
  parallel_for(100, 4, [&](std::size_t i) { ++hits[i]; });
  for (auto& h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 4) throw InvalidArgument("boom");
                  }),
                  InvalidArgument);
}

TEST_CASE("run_registration is deterministic and scores against ground truth") {
  const PointNetParams params = make_random_params(1);
  PairSpec spec;
  spec.num_points = 64;
  spec.initial_angle_deg = 10;
  spec.seed = 5;
  const RegistrationPair pair = make_pair(random_cloud(200, 2), spec);
  const BenchConfig cfg;
  const RunRecord a = run_registration(pair, Method::pointnetlk_float, params, cfg);
  const RunRecord b = run_registration(pair, Method::pointnetlk_float, params, cfg);
  CHECK(a.rot_err_deg == b.rot_err_deg);
  CHECK(a.iterations == b.iterations);
  CHECK(a.initial_rot_deg == doctest::Approx(10.0));
  CHECK(a.n == 64);

  const RunRecord icp = run_registration(pair, Method::icp, params, cfg);
  CHECK(icp.method == Method::icp);
  CHECK(icp.nn_s > 0);

  const RunRecord q = run_registration(pair, Method::pointnetlk_quant, params, cfg, 10);
  CHECK(q.q_n == 10);

  // A degenerate source becomes a record with NaN errors.
  const PointCloud line{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)};
  const RegistrationPair bad{line, line, RigidTransform::identity()};
  const RunRecord r = run_registration_noexcept(bad, Method::icp, params, cfg);
  CHECK(std::isnan(r.rot_err_deg));
  CHECK_FALSE(r.converged);
}

TEST_CASE("sweep-angle writes one summary row per method and angle") {
  const fs::path dir = scratch("sweep");
  write_synthetic_corpus(dir / "corpus", 2, 1);
  SweepOptions opt;
  opt.corpus = dir / "corpus";
  opt.angles = {0, 30};
  opt.num_points = 48;
  std::ostringstream out;
  CHECK(cmd_sweep_angle(common_in(dir), opt, out) == 0);
  const Table summary = read_csv(dir / "sweep_angle.csv");
  CHECK(summary.schema == "pnlk-sweep-angle/1");
  CHECK(summary.rows.size() == 4);
  CHECK(read_csv(dir / "sweep_angle_runs.csv").rows.size() == 8);
  for (std::size_t i = 0; i < summary.rows.size(); ++i) {
    CHECK(summary.number(i, "mean_rot_err_deg") >= 0.0);
    CHECK(summary.number(i, "runs") == 2);
  }
}

TEST_CASE("quant-eval writes one row per format and angle") {
  const fs::path dir = scratch("quant");
  write_synthetic_corpus(dir / "corpus", 1, 2);
  QuantEvalOptions opt;
  opt.corpus = dir / "corpus";
  opt.formats = {8, 12};
  opt.angles = {5, 15};
  opt.num_points = 24;
  std::ostringstream out;
  CHECK(cmd_quant_eval(common_in(dir), opt, out) == 0);
  const Table t = read_csv(dir / "quant_eval.csv");
  CHECK(t.rows.size() == 4);
  CHECK(t.number(0, "total_bits") == 16);
  // Wider words, smaller feature deviation.
  CHECK(t.number(0, "mean_feature_dev") > t.number(2, "mean_feature_dev"));
}

TEST_CASE("accel report scales with the point count") {
  const fs::path dir = scratch("accel");
  AccelOptions opt;
  std::ostringstream out;
  opt.num_points = 512;
  CHECK(cmd_accel(common_in(dir / "a"), opt, out) == 0);
  opt.num_points = 1024;
  CHECK(cmd_accel(common_in(dir / "b"), opt, out) == 0);
  const Table a = read_csv(dir / "a" / "accel_designs.csv");
  const Table b = read_csv(dir / "b" / "accel_designs.csv");
  REQUIRE(a.rows.size() == 3);
  // Naive and intra designs run points back to back: exactly double.
  CHECK(b.number(0, "total_us") == doctest::Approx(2 * a.number(0, "total_us")));
  CHECK(b.number(1, "total_us") == doctest::Approx(2 * a.number(1, "total_us")));
  // The pipelined design adds 512 intervals of the bottleneck.
  CHECK(b.number(2, "total_us") - a.number(2, "total_us") == doctest::Approx(512 * 10.28));

  const Table m = read_csv(dir / "a" / "accel_modules.csv");
  CHECK(m.text(0, "module") == "FC(3,64)");

  opt.explore = true;
  opt.budget = "dsp=0";
  CHECK(cmd_accel(common_in(dir / "c"), opt, out) == 0);
  CHECK(read_csv(dir / "c" / "accel_explore.csv").rows.empty());
}

TEST_CASE("profile shares sum to 100") {
  const PointNetParams params = make_random_params(2);
  PairSpec spec;
  spec.num_points = 128;
  const RegistrationPair pair = make_pair(random_cloud(256, 3), spec);
  for (Method m : {Method::pointnetlk_float, Method::icp}) {
    const ProfileResult r = profile_run(pair, m, params, {});
    double sum = 0;
    for (const auto& p : r.phases) {
      CHECK(p.share_pct >= 0.0);
      sum += p.share_pct;
    }
    CHECK(sum == doctest::Approx(100.0).epsilon(0.01));
    CHECK(r.phases.back().phase == "other");
  }
}

TEST_CASE("scaling fits a slope per method") {
  ScalingOptions opt;
  opt.sizes = {64, 128, 256};
  opt.methods = {Method::icp};
  opt.repetitions = 1;
  const ScalingResult r = run_scaling(opt, make_random_params(1), {});
  CHECK(r.aggregated.size() == 3);
  CHECK(r.samples.size() == 3);
  CHECK(r.slope(Method::icp) > 1.0);
}

TEST_CASE("feature deviation shrinks with wider words") {
  const PointNetParams params = make_random_params(4);
  const std::vector<PointCloud> clouds{random_cloud(32, 1), random_cloud(32, 2)};
  const auto dev = feature_deviation(params, clouds, {8, 10, 12}, AccumulationMode::per_output, 2);
  REQUIRE(dev.size() == 3);
  CHECK(dev[0] > dev[1]);
  CHECK(dev[1] > dev[2]);
}

TEST_CASE("missing weights file is an error") {
  CommonOptions c;
  c.weights = "/nonexistent/weights.bin";
  CHECK_THROWS(resolve_weights(c));
  CommonOptions r;
  CHECK(resolve_weights(r) == make_random_params(1));
}
