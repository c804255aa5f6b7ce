#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pnlk/accel_model.hpp"
#include "pnlk/data.hpp"
#include "pnlk/fixedpoint.hpp"
#include "pnlk/geometry.hpp"
#include "pnlk/icp.hpp"
#include "pnlk/lk_solver.hpp"
#include "pnlk/pointnet.hpp"

namespace pnlk::bench {

namespace fs = std::filesystem;

enum class Method { pointnetlk_float, pointnetlk_quant, icp };

const char* to_string(Method m);
Method method_from_string(const std::string& s);  // "pointnetlk-float", "pointnetlk-quant", "icp"

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct BenchConfig {
  LkConfig lk;
  IcpConfig icp;
  int q_n = 16;
  AccumulationMode accumulation = AccumulationMode::per_output;
  RotationMetric metric = RotationMetric::relative_angle;

  void validate() const;
};

/// JSON overrides, every key optional:
///   {"lk": {"max_iterations", "perturbation" (number or 6 numbers),
///           "convergence_tol", "scheme": "forward"|"central", "svd_cutoff",
///           "parallel_jacobian"},
///    "icp": {"max_iterations", "mse_change_tol"},
///    "qformat": {"n", "accumulation": "per_output"|"per_mac"},
///    "metric": "relative_angle"|"twist_difference"}
BenchConfig parse_bench_config(const std::string& json_text, BenchConfig base = {});
BenchConfig load_bench_config(const fs::path& path, BenchConfig base = {});

// ---------------------------------------------------------------------------
// Single runs
// ---------------------------------------------------------------------------

struct RunRecord {
  Method method = Method::icp;
  std::string model;
  std::size_t n = 0;
  double angle_deg = 0.0;
  std::uint64_t seed = 0;
  int q_n = 0;  // 0 for float methods
  double initial_rot_deg = 0.0;
  double initial_trans = 0.0;
  double rot_err_deg = 0.0;
  double trans_err = 0.0;
  int iterations = 0;
  bool converged = false;
  double total_s = 0.0;
  double feature_s = 0.0;
  double jacobian_s = 0.0;
  double solve_s = 0.0;
  double transform_s = 0.0;
  double nn_s = 0.0;
  double fit_s = 0.0;
};

/// Registers pair.source onto pair.templ and scores the estimate against
/// pair.gt. `q_n` > 0 overrides the config's Q-format for the quant method.
RunRecord run_registration(const RegistrationPair& pair, Method method, const PointNetParams& params,
                           const BenchConfig& cfg, int q_n = 0);

/// Same, with a registration failure turned into a record with NaN errors.
RunRecord run_registration_noexcept(const RegistrationPair& pair, Method method,
                                    const PointNetParams& params, const BenchConfig& cfg,
                                    int q_n = 0);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct Table {
  std::string schema;  // written as "# schema: <name>" before the header
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
  const std::string& text(std::size_t row, const std::string& name) const;
};

std::string format_number(double v);
void write_csv(const fs::path& path, const Table& table);
Table read_csv(const fs::path& path);

Table runs_table(const std::vector<RunRecord>& runs);

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

double median(std::vector<double> v);
double mean(const std::vector<double>& v);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
/// Least squares of log(y) on log(x).
LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

/// Mix of a base seed with up to three indices (splitmix64 finaliser).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

/// Runs fn(i) for i in [0, count) on `jobs` threads. Exceptions propagate
/// (the first one by index).
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Experiment cores (no file output)
// ---------------------------------------------------------------------------

struct ScalingOptions {
  std::vector<std::size_t> sizes{256, 512, 1024, 2048, 4096};
  std::vector<Method> methods{Method::pointnetlk_float, Method::icp};
  int repetitions = 3;
  double angle_deg = 30.0;
  /// Every run does exactly this many iterations so the timing reflects
  /// per-point cost rather than how quickly a pair happens to converge.
  int iterations = 20;
  bool use_mean = false;  // aggregate with the mean instead of the median
  std::uint64_t seed = 0;
};

struct ScalingSample {
  Method method;
  std::size_t n;
  int repetition;
  double seconds;
};

struct ScalingResult {
  std::vector<ScalingSample> samples;
  struct Point {
    Method method;
    std::size_t n;
    double seconds;  // median (or mean) over repetitions
  };
  std::vector<Point> aggregated;
  struct Fit {
    Method method;
    LineFit fit;
  };
  std::vector<Fit> fits;

  double slope(Method m) const;
};

ScalingResult run_scaling(const ScalingOptions& opt, const PointNetParams& params,
                          const BenchConfig& cfg);

struct PhaseShare {
  std::string phase;
  double seconds = 0.0;
  double share_pct = 0.0;
};

struct ProfileResult {
  Method method;
  std::size_t n = 0;
  double total_s = 0.0;
  std::vector<PhaseShare> phases;  // ends with "other" so shares sum to 100

  double share(const std::string& phase) const;
};

ProfileResult profile_run(const RegistrationPair& pair, Method method, const PointNetParams& params,
                          const BenchConfig& cfg);

/// Mean over clouds of mean_i |phi_q(i) - phi_float(i)|, one entry per n.
std::vector<double> feature_deviation(const PointNetParams& params, const std::vector<PointCloud>& clouds,
                                      const std::vector<int>& formats,
                                      AccumulationMode mode = AccumulationMode::per_output,
                                      int jobs = 1);

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

enum class OutputFormat { csv, svg };

struct CommonOptions {
  std::uint64_t seed = 0;
  fs::path out_dir = ".";
  OutputFormat format = OutputFormat::csv;
  std::optional<fs::path> config;
  std::optional<fs::path> weights;
  std::uint64_t weights_seed = 1;  // random network when no weights file is given
  int jobs = 1;
};

BenchConfig resolve_config(const CommonOptions& common);
/// Reads --weights, or builds the seeded random network. A missing weights
/// file is an error.
PointNetParams resolve_weights(const CommonOptions& common);

/// Loads .off (vertices) or .csv (x,y,z) clouds.
PointCloud load_cloud(const fs::path& path);

struct RegisterOptions {
  fs::path templ;
  std::optional<fs::path> source;  // when absent a pair is generated from `pair`
  std::optional<fs::path> gt;      // 4x4 CSV, used with an explicit source
  PairSpec pair;
  std::vector<Method> methods{Method::pointnetlk_float, Method::icp};
};

struct SweepOptions {
  fs::path corpus;
  std::vector<double> angles{0, 10, 20, 30, 40, 50, 60, 70, 80, 90};
  std::vector<Method> methods{Method::pointnetlk_float, Method::icp};
  int trials = 1;
  std::size_t num_points = 1024;
  std::size_t max_models = 0;  // 0: every model in the corpus
  double translation_bound = 0.3;
};

struct ProfileOptions {
  std::optional<fs::path> templ;  // random cloud when absent
  PairSpec pair;
  Method method = Method::pointnetlk_float;
};

struct QuantEvalOptions {
  fs::path corpus;
  std::vector<int> formats{8, 10, 12, 14, 16};
  std::vector<double> angles{30};
  int trials = 1;
  std::size_t num_points = 1024;
  std::size_t max_models = 0;
  double translation_bound = 0.3;
};

struct AccelOptions {
  std::optional<fs::path> profile;
  std::size_t num_points = 1024;
  UnrollAssignment unroll = kPublishedUnroll;
  std::string device = "zcu104";
  std::string budget = "zcu104";  // device name, "none", or "dsp=<count>"
  int word_bits = 32;
  bool explore = false;
  std::size_t top = 10;
};

struct GenPairOptions {
  fs::path templ;
  PairSpec pair;
};

struct GenWeightsOptions {
  fs::path out;
  WeightBlobOptions blob;
};

struct GenFixturesOptions {
  std::size_t count = 20;
  std::size_t num_points = 256;
  WeightBlobOptions blob;
  double angle_deg = 5.0;  // perturbation of the one-step source
};

struct GenCorpusOptions {
  fs::path dir;
  std::size_t count = 20;
};

fs::path default_profile_path();
CalibrationProfile resolve_profile(const std::optional<fs::path>& path);

int cmd_register(const CommonOptions& common, const RegisterOptions& opt, std::ostream& out);
int cmd_sweep_angle(const CommonOptions& common, const SweepOptions& opt, std::ostream& out);
int cmd_scaling(const CommonOptions& common, const ScalingOptions& opt, std::ostream& out);
int cmd_profile(const CommonOptions& common, const ProfileOptions& opt, std::ostream& out);
int cmd_quant_eval(const CommonOptions& common, const QuantEvalOptions& opt, std::ostream& out);
int cmd_accel(const CommonOptions& common, const AccelOptions& opt, std::ostream& out);
int cmd_gen_pair(const CommonOptions& common, const GenPairOptions& opt, std::ostream& out);
int cmd_weights_info(const fs::path& path, std::ostream& out);
int cmd_gen_weights(const CommonOptions& common, const GenWeightsOptions& opt, std::ostream& out);
int cmd_gen_fixtures(const CommonOptions& common, const GenFixturesOptions& opt, std::ostream& out);
int cmd_gen_corpus(const CommonOptions& common, const GenCorpusOptions& opt, std::ostream& out);

/// One fixture bundle: blob, cloud, feature, Jacobian and a one-step twist.
void write_fixture_bundle(const fs::path& dir, const PointNetParams& params,
                          const WeightBlobOptions& blob, const PointCloud& cloud,
                          const PointCloud& source, const LkConfig& lk);

// ---------------------------------------------------------------------------
// Plots (SVG, drawn from the CSV files)
// ---------------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> x, y;
};

struct LinePlot {
  std::string title, x_label, y_label, caption;
  bool log_x = false, log_y = false;
  std::vector<Series> series;
};

struct BarPlot {
  std::string title, y_label, caption;
  std::vector<std::string> labels;
  std::vector<double> values;
  std::optional<std::size_t> highlight;
};

void write_svg(const fs::path& path, const LinePlot& plot);
void write_svg(const fs::path& path, const BarPlot& plot);

void plot_sweep_angle(const fs::path& summary_csv, const fs::path& svg);
void plot_scaling(const fs::path& summary_csv, const fs::path& svg);
void plot_profile(const fs::path& profile_csv, const fs::path& svg);
void plot_quant_eval(const fs::path& summary_csv, const fs::path& svg);
void plot_accel(const fs::path& modules_csv, const fs::path& svg);

}  // namespace pnlk::bench
