#include "pnlk/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "pnlk/error.hpp"

#ifndef PNLK_DATA_DIR
#define PNLK_DATA_DIR "data"
#endif

namespace pnlk::bench {

namespace {

using json = nlohmann::json;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

PointCloud load_template(const fs::path& path) { return normalize_unit_cube(load_cloud(path)); }

std::vector<fs::path> corpus_models(const fs::path& dir, std::size_t max_models) {
  if (!fs::is_directory(dir)) throw std::runtime_error("corpus directory not found: " + dir.string());
  auto models = list_corpus(dir);
  if (models.empty()) throw std::runtime_error("corpus " + dir.string() + " has no .off files");
  if (max_models > 0 && models.size() > max_models) models.resize(max_models);
  return models;
}

void ensure_dir(const fs::path& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

bool finite_errors(const RunRecord& r) {
  return std::isfinite(r.rot_err_deg) && std::isfinite(r.trans_err);
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + '"';
}

std::string csv_line(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) s += (i ? "," : "") + csv_cell(cells[i]);
  return s;
}

std::vector<std::string> split_csv(const std::string& line, std::size_t number) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  if (quoted) throw ParseError("unterminated quote in CSV", number);
  return cells;
}

void print_table(std::ostream& out, const Table& t) {
  out << csv_line(t.header) << '\n';
  for (const auto& row : t.rows) out << csv_line(row) << '\n';
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::pointnetlk_float: return "pointnetlk-float";
    case Method::pointnetlk_quant: return "pointnetlk-quant";
    case Method::icp: return "icp";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  const std::string l = lower(s);
  if (l == "pointnetlk-float" || l == "pointnetlk" || l == "lk") return Method::pointnetlk_float;
  if (l == "pointnetlk-quant" || l == "lk-quant") return Method::pointnetlk_quant;
  if (l == "icp") return Method::icp;
  throw InvalidArgument("unknown method '" + s + "'");
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void BenchConfig::validate() const {
  lk.validate();
  icp.validate();
  (void)QFormat(q_n);
}

BenchConfig parse_bench_config(const std::string& json_text, BenchConfig c) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what(), 0);
  }
  try {
    if (j.contains("lk")) {
      const json& lk = j.at("lk");
      c.lk.max_iterations = lk.value("max_iterations", c.lk.max_iterations);
      if (lk.contains("perturbation")) {
        const json& p = lk.at("perturbation");
        if (p.is_number()) {
          c.lk.perturbation.fill(p.get<double>());
        } else {
          const auto v = p.get<std::vector<double>>();
          if (v.size() != 6) throw InvalidArgument("config: lk.perturbation needs 6 values");
          std::copy(v.begin(), v.end(), c.lk.perturbation.begin());
        }
      }
      c.lk.convergence_tol = lk.value("convergence_tol", c.lk.convergence_tol);
      c.lk.svd_cutoff = lk.value("svd_cutoff", c.lk.svd_cutoff);
      c.lk.parallel_jacobian = lk.value("parallel_jacobian", c.lk.parallel_jacobian);
      if (lk.contains("scheme")) {
        const auto s = lk.at("scheme").get<std::string>();
        if (s == "forward") c.lk.scheme = DifferenceScheme::forward;
        else if (s == "central") c.lk.scheme = DifferenceScheme::central;
        else throw InvalidArgument("config: unknown lk.scheme '" + s + "'");
      }
    }
    if (j.contains("icp")) {
      const json& icp = j.at("icp");
      c.icp.max_iterations = icp.value("max_iterations", c.icp.max_iterations);
      c.icp.mse_change_tol = icp.value("mse_change_tol", c.icp.mse_change_tol);
    }
    if (j.contains("qformat")) {
      const json& q = j.at("qformat");
      c.q_n = q.value("n", c.q_n);
      if (q.contains("accumulation")) {
        const auto s = q.at("accumulation").get<std::string>();
        if (s == "per_output") c.accumulation = AccumulationMode::per_output;
        else if (s == "per_mac") c.accumulation = AccumulationMode::per_mac;
        else throw InvalidArgument("config: unknown qformat.accumulation '" + s + "'");
      }
    }
    if (j.contains("metric")) {
      const auto s = j.at("metric").get<std::string>();
      if (s == "relative_angle") c.metric = RotationMetric::relative_angle;
      else if (s == "twist_difference") c.metric = RotationMetric::twist_difference;
      else throw InvalidArgument("config: unknown metric '" + s + "'");
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

BenchConfig load_bench_config(const fs::path& path, BenchConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_bench_config(ss.str(), base);
}

// ---------------------------------------------------------------------------
// Single runs
// ---------------------------------------------------------------------------

RunRecord run_registration(const RegistrationPair& pair, Method method, const PointNetParams& params,
                           const BenchConfig& cfg, int q_n) {
  RunRecord r;
  r.method = method;
  r.n = pair.source.size();
  const PoseError init = registration_error(pair.gt, RigidTransform::identity(), cfg.metric);
  r.initial_rot_deg = init.rotation_deg;
  r.initial_trans = init.translation;

  RigidTransform est;
  if (method == Method::icp) {
    const IcpResult res = icp_register(pair.templ, pair.source, cfg.icp);
    est = res.transform;
    r.iterations = res.iterations_used;
    r.converged = res.converged;
    r.total_s = res.timings.total_s;
    r.nn_s = res.timings.nn_s;
    r.fit_s = res.timings.fit_s;
    r.transform_s = res.timings.transform_s;
  } else {
    LkResult res;
    if (method == Method::pointnetlk_float) {
      const FeatureFn f = [&params](const PointCloud& c) { return global_feature(params, c); };
      res = lk_register(pair.templ, pair.source, f, cfg.lk);
    } else {
      r.q_n = q_n > 0 ? q_n : cfg.q_n;
      const QuantizedPointNet net(params, QFormat(r.q_n), cfg.accumulation);
      const FeatureFn f = [&net](const PointCloud& c) { return net.global_feature(c).feature; };
      res = lk_register(pair.templ, pair.source, f, cfg.lk);
    }
    est = res.transform;
    r.iterations = res.iterations_used;
    r.converged = res.converged;
    r.total_s = res.timings.total_s;
    r.feature_s = res.timings.feature_s;
    r.jacobian_s = res.timings.jacobian_s;
    r.solve_s = res.timings.solve_s;
    r.transform_s = res.timings.transform_s;
  }
  const PoseError e = registration_error(pair.gt, est, cfg.metric);
  r.rot_err_deg = e.rotation_deg;
  r.trans_err = e.translation;
  return r;
}

RunRecord run_registration_noexcept(const RegistrationPair& pair, Method method,
                                    const PointNetParams& params, const BenchConfig& cfg, int q_n) {
  try {
    return run_registration(pair, method, params, cfg, q_n);
  } catch (const RegistrationFailure& e) {
    RunRecord r;
    r.method = method;
    r.n = pair.source.size();
    r.q_n = method == Method::pointnetlk_quant ? (q_n > 0 ? q_n : cfg.q_n) : 0;
    r.iterations = e.iteration();
    r.rot_err_deg = kNaN;
    r.trans_err = kNaN;
    return r;
  }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::size_t Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("CSV has no column '" + name + "'", 1);
  return static_cast<std::size_t>(it - header.begin());
}

double Table::number(std::size_t row, const std::string& name) const {
  const std::string& s = text(row, name);
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw ParseError("CSV cell '" + s + "' in column " + name + " is not a number", row + 2);
  }
}

const std::string& Table::text(std::size_t row, const std::string& name) const {
  return rows.at(row).at(column(name));
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

void write_csv(const fs::path& path, const Table& table) {
  ensure_dir(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!table.schema.empty()) out << "# schema: " << table.schema << '\n';
  out << csv_line(table.header) << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) throw InvalidArgument("CSV row width differs from header");
    out << csv_line(row) << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Table read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Table t;
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# schema: ";
      if (line.rfind(tag, 0) == 0) t.schema = line.substr(tag.size());
      continue;
    }
    std::vector<std::string> cells = split_csv(line, number);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != t.header.size()) throw ParseError("CSV row width differs from header", number);
      t.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw ParseError("CSV has no header", number);
  return t;
}

Table runs_table(const std::vector<RunRecord>& runs) {
  Table t;
  t.schema = "pnlk-runs/1";
  t.header = {"method",      "model",       "n",         "angle_deg",  "seed",
              "q_n",         "initial_rot_deg", "initial_trans", "rot_err_deg", "trans_err",
              "iterations",  "converged",   "total_s",   "feature_s",  "jacobian_s",
              "solve_s",     "transform_s", "nn_s",      "fit_s"};
  for (const auto& r : runs) {
    t.rows.push_back({to_string(r.method), r.model, std::to_string(r.n), format_number(r.angle_deg),
                      std::to_string(r.seed), std::to_string(r.q_n), format_number(r.initial_rot_deg),
                      format_number(r.initial_trans), format_number(r.rot_err_deg),
                      format_number(r.trans_err), std::to_string(r.iterations),
                      r.converged ? "1" : "0", format_number(r.total_s), format_number(r.feature_s),
                      format_number(r.jacobian_s), format_number(r.solve_s),
                      format_number(r.transform_s), format_number(r.nn_s), format_number(r.fit_s)});
  }
  return t;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) throw InvalidArgument("mean of an empty set");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("fit_loglog: need >= 2 paired values");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw InvalidArgument("fit_loglog: values must be positive");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw InvalidArgument("fit_loglog: x values are all equal");
  LineFit f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  std::uint64_t s = mix(base);
  s = mix(s ^ a);
  s = mix(s ^ b);
  return mix(s ^ c);
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------
// Experiment cores
// ---------------------------------------------------------------------------

double ScalingResult::slope(Method m) const {
  for (const auto& f : fits) {
    if (f.method == m) return f.fit.slope;
  }
  throw InvalidArgument(std::string("no scaling fit for ") + to_string(m));
}

ScalingResult run_scaling(const ScalingOptions& opt, const PointNetParams& params, const BenchConfig& cfg) {
  if (opt.sizes.size() < 3) throw InvalidArgument("scaling needs at least 3 sizes");
  if (opt.repetitions < 1) throw InvalidArgument("scaling needs at least 1 repetition");
  if (opt.iterations < 1) throw InvalidArgument("scaling needs at least 1 iteration");
  BenchConfig c = cfg;
  c.lk.max_iterations = opt.iterations;
  c.lk.convergence_tol = 0.0;
  c.icp.max_iterations = opt.iterations;
  c.icp.mse_change_tol = 0.0;

  std::vector<RegistrationPair> pairs;
  for (std::size_t i = 0; i < opt.sizes.size(); ++i) {
    const std::size_t n = opt.sizes[i];
    const PointCloud templ = random_cloud(n, derive_seed(opt.seed, n, 0));
    PairSpec spec;
    spec.initial_angle_deg = opt.angle_deg;
    spec.seed = derive_seed(opt.seed, n, 1);
    spec.num_points = n;
    pairs.push_back(make_pair(templ, spec));
  }

  // Warm caches and the allocator before anything is timed.
  for (Method m : opt.methods) (void)run_registration(pairs.front(), m, params, c);

  ScalingResult res;
  for (int rep = 0; rep < opt.repetitions; ++rep) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      for (Method m : opt.methods) {
        const RunRecord r = run_registration(pairs[i], m, params, c);
        res.samples.push_back({m, opt.sizes[i], rep, r.total_s});
      }
    }
  }
  for (Method m : opt.methods) {
    std::vector<double> xs, ys;
    for (std::size_t n : opt.sizes) {
      std::vector<double> t;
      for (const auto& s : res.samples) {
        if (s.method == m && s.n == n) t.push_back(s.seconds);
      }
      const double agg = opt.use_mean ? mean(t) : median(t);
      res.aggregated.push_back({m, n, agg});
      xs.push_back(static_cast<double>(n));
      ys.push_back(agg);
    }
    res.fits.push_back({m, fit_loglog(xs, ys)});
  }
  return res;
}

double ProfileResult::share(const std::string& phase) const {
  for (const auto& p : phases) {
    if (p.phase == phase) return p.share_pct;
  }
  throw InvalidArgument("no profile phase '" + phase + "'");
}

ProfileResult profile_run(const RegistrationPair& pair, Method method, const PointNetParams& params,
                          const BenchConfig& cfg) {
  const RunRecord r = run_registration(pair, method, params, cfg);
  ProfileResult p;
  p.method = method;
  p.n = r.n;
  p.total_s = r.total_s;
  std::vector<std::pair<std::string, double>> parts;
  if (method == Method::icp) {
    parts = {{"nn_search", r.nn_s}, {"fit", r.fit_s}, {"transform", r.transform_s}};
  } else {
    parts = {{"feature_extraction", r.feature_s},
             {"jacobian", r.jacobian_s},
             {"solve", r.solve_s},
             {"transform", r.transform_s}};
  }
  double sum = 0.0;
  for (const auto& [_, s] : parts) sum += s;
  parts.emplace_back("other", std::max(0.0, r.total_s - sum));
  const double denom = std::max(r.total_s, sum);
  for (const auto& [name, s] : parts) {
    p.phases.push_back({name, s, denom > 0 ? 100.0 * s / denom : 0.0});
  }
  return p;
}

std::vector<double> feature_deviation(const PointNetParams& params, const std::vector<PointCloud>& clouds,
                                      const std::vector<int>& formats, AccumulationMode mode, int jobs) {
  if (clouds.empty()) throw InvalidArgument("feature_deviation: no clouds");
  std::vector<GlobalFeature> reference(clouds.size());
  parallel_for(clouds.size(), jobs, [&](std::size_t i) { reference[i] = global_feature(params, clouds[i]); });
  std::vector<double> out;
  for (int n : formats) {
    const QuantizedPointNet net(params, QFormat(n), mode);
    std::vector<double> dev(clouds.size());
    parallel_for(clouds.size(), jobs, [&](std::size_t i) {
      dev[i] = (net.global_feature(clouds[i]).feature - reference[i]).cwiseAbs().mean();
    });
    out.push_back(mean(dev));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

BenchConfig resolve_config(const CommonOptions& common) {
  BenchConfig c;
  if (common.config) c = load_bench_config(*common.config);
  c.validate();
  return c;
}

PointNetParams resolve_weights(const CommonOptions& common) {
  if (!common.weights) return make_random_params(common.weights_seed);
  if (!fs::exists(*common.weights)) {
    throw std::runtime_error("weights file not found: " + common.weights->string() +
                             " (create one with `pnlk gen-weights`, or export trained weights as"
                             " described under \"Weights\" in README.md)");
  }
  return read_weights(*common.weights).params;
}

PointCloud load_cloud(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("file not found: " + path.string());
  const std::string ext = lower(path.extension().string());
  if (ext == ".off") return load_off(path);
  if (ext == ".csv") return read_cloud_csv(path);
  throw InvalidArgument("unsupported cloud format '" + ext + "' (expected .off or .csv)");
}

fs::path default_profile_path() {
  if (const char* env = std::getenv("PNLK_DATA_DIR")) return fs::path(env) / "calibration" / "table1_profile.json";
  return fs::path(PNLK_DATA_DIR) / "calibration" / "table1_profile.json";
}

CalibrationProfile resolve_profile(const std::optional<fs::path>& path) {
  return CalibrationProfile::load(path ? *path : default_profile_path());
}

int cmd_register(const CommonOptions& common, const RegisterOptions& opt, std::ostream& out) {
  const BenchConfig cfg = resolve_config(common);
  const PointNetParams params = resolve_weights(common);

  const bool have_gt = !opt.source || opt.gt;
  const double angle = opt.source ? kNaN : opt.pair.initial_angle_deg;
  const RegistrationPair pair = [&] {
    if (!opt.source) {
      PairSpec spec = opt.pair;
      spec.seed = common.seed;
      return make_pair(load_template(opt.templ), spec);
    }
    RigidTransform gt;
    if (opt.gt) {
      const Eigen::MatrixXd m = read_matrix_csv(*opt.gt);
      if (m.rows() != 4 || m.cols() != 4) throw ParseError("gt CSV must be 4 x 4", 1);
      gt = RigidTransform(Mat4(m));
    }
    return RegistrationPair{load_cloud(opt.templ), load_cloud(*opt.source), gt};
  }();

  std::vector<RunRecord> runs;
  for (Method m : opt.methods) {
    RunRecord r = run_registration_noexcept(pair, m, params, cfg);
    r.model = opt.templ.stem().string();
    r.angle_deg = angle;
    r.seed = common.seed;
    if (!have_gt) r.initial_rot_deg = r.initial_trans = r.rot_err_deg = r.trans_err = kNaN;
    runs.push_back(r);
  }
  const Table t = runs_table(runs);
  write_csv(common.out_dir / "register.csv", t);
  print_table(out, t);
  return 0;
}

int cmd_sweep_angle(const CommonOptions& common, const SweepOptions& opt, std::ostream& out) {
  if (opt.angles.empty() || opt.methods.empty()) throw InvalidArgument("sweep needs angles and methods");
  if (opt.trials < 1) throw InvalidArgument("sweep needs at least 1 trial");
  const BenchConfig cfg = resolve_config(common);
  const PointNetParams params = resolve_weights(common);
  const auto models = corpus_models(opt.corpus, opt.max_models);
  std::vector<PointCloud> templates;
  for (const auto& m : models) templates.push_back(load_template(m));

  const std::size_t per_model = opt.angles.size() * static_cast<std::size_t>(opt.trials);
  const std::size_t tasks = models.size() * per_model;
  std::vector<std::vector<RunRecord>> results(tasks);
  parallel_for(tasks, common.jobs, [&](std::size_t task) {
    const std::size_t mi = task / per_model;
    const std::size_t ai = (task % per_model) / opt.trials;
    const std::size_t ti = task % opt.trials;
    PairSpec spec;
    spec.initial_angle_deg = opt.angles[ai];
    spec.translation_bound = opt.translation_bound;
    spec.num_points = opt.num_points;
    spec.seed = derive_seed(common.seed, mi, ai, ti);
    const RegistrationPair pair = make_pair(templates[mi], spec);
    for (Method m : opt.methods) {
      RunRecord r = run_registration_noexcept(pair, m, params, cfg);
      r.model = models[mi].stem().string();
      r.angle_deg = opt.angles[ai];
      r.seed = spec.seed;
      results[task].push_back(r);
    }
  });
  std::vector<RunRecord> runs;
  for (auto& v : results) runs.insert(runs.end(), v.begin(), v.end());
  write_csv(common.out_dir / "sweep_angle_runs.csv", runs_table(runs));

  Table s;
  s.schema = "pnlk-sweep-angle/1";
  s.header = {"method", "angle_deg", "mean_rot_err_deg", "mean_trans_err", "median_rot_err_deg", "runs",
              "failures"};
  for (Method m : opt.methods) {
    for (double a : opt.angles) {
      std::vector<double> rot, trans;
      std::size_t total = 0;
      for (const auto& r : runs) {
        if (r.method != m || r.angle_deg != a) continue;
        ++total;
        if (!finite_errors(r)) continue;
        rot.push_back(r.rot_err_deg);
        trans.push_back(r.trans_err);
      }
      s.rows.push_back({to_string(m), format_number(a), format_number(rot.empty() ? kNaN : mean(rot)),
                        format_number(trans.empty() ? kNaN : mean(trans)),
                        format_number(rot.empty() ? kNaN : median(rot)), std::to_string(total),
                        std::to_string(total - rot.size())});
    }
  }
  const fs::path summary = common.out_dir / "sweep_angle.csv";
  write_csv(summary, s);
  if (common.format == OutputFormat::svg) plot_sweep_angle(summary, common.out_dir / "sweep_angle.svg");
  print_table(out, s);
  return 0;
}

int cmd_scaling(const CommonOptions& common, const ScalingOptions& opt_in, std::ostream& out) {
  ScalingOptions opt = opt_in;
  opt.seed = common.seed;
  const BenchConfig cfg = resolve_config(common);
  const PointNetParams params = resolve_weights(common);
  const ScalingResult res = run_scaling(opt, params, cfg);

  Table raw;
  raw.schema = "pnlk-scaling-runs/1";
  raw.header = {"method", "n", "repetition", "seconds"};
  for (const auto& s : res.samples) {
    raw.rows.push_back({to_string(s.method), std::to_string(s.n), std::to_string(s.repetition),
                        format_number(s.seconds)});
  }
  write_csv(common.out_dir / "scaling_runs.csv", raw);

  Table agg;
  agg.schema = "pnlk-scaling/1";
  agg.header = {"method", "n", "seconds", "aggregate", "repetitions"};
  for (const auto& p : res.aggregated) {
    agg.rows.push_back({to_string(p.method), std::to_string(p.n), format_number(p.seconds),
                        opt.use_mean ? "mean" : "median", std::to_string(opt.repetitions)});
  }
  const fs::path summary = common.out_dir / "scaling.csv";
  write_csv(summary, agg);

  Table fit;
  fit.schema = "pnlk-scaling-fit/1";
  fit.header = {"method", "slope", "intercept"};
  for (const auto& f : res.fits) {
    fit.rows.push_back({to_string(f.method), format_number(f.fit.slope), format_number(f.fit.intercept)});
  }
  write_csv(common.out_dir / "scaling_fit.csv", fit);
  if (common.format == OutputFormat::svg) plot_scaling(summary, common.out_dir / "scaling.svg");
  print_table(out, agg);
  print_table(out, fit);
  return 0;
}

int cmd_profile(const CommonOptions& common, const ProfileOptions& opt, std::ostream& out) {
  const BenchConfig cfg = resolve_config(common);
  const PointNetParams params = resolve_weights(common);
  PairSpec spec = opt.pair;
  spec.seed = common.seed;
  const PointCloud templ = opt.templ ? load_template(*opt.templ)
                                     : random_cloud(spec.num_points, derive_seed(common.seed, 7));
  const RegistrationPair pair = make_pair(templ, spec);
  const ProfileResult p = profile_run(pair, opt.method, params, cfg);

  Table t;
  t.schema = "pnlk-profile/1";
  t.header = {"method", "n", "phase", "seconds", "share_pct"};
  for (const auto& ph : p.phases) {
    t.rows.push_back({to_string(p.method), std::to_string(p.n), ph.phase, format_number(ph.seconds),
                      format_number(ph.share_pct)});
  }
  const fs::path csv = common.out_dir / "profile.csv";
  write_csv(csv, t);
  if (common.format == OutputFormat::svg) plot_profile(csv, common.out_dir / "profile.svg");
  print_table(out, t);
  return 0;
}

int cmd_quant_eval(const CommonOptions& common, const QuantEvalOptions& opt, std::ostream& out) {
  if (opt.formats.empty() || opt.angles.empty()) throw InvalidArgument("quant-eval needs formats and angles");
  if (opt.trials < 1) throw InvalidArgument("quant-eval needs at least 1 trial");
  for (int n : opt.formats) (void)QFormat(n);
  const BenchConfig cfg = resolve_config(common);
  const PointNetParams params = resolve_weights(common);
  const auto models = corpus_models(opt.corpus, opt.max_models);

  // Pairs are drawn once and shared by every format.
  std::vector<RegistrationPair> pairs;
  std::vector<std::string> names;
  std::vector<double> pair_angles;
  std::vector<std::uint64_t> seeds;
  std::vector<PointCloud> feature_clouds;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const PointCloud templ = load_template(models[mi]);
    for (std::size_t ai = 0; ai < opt.angles.size(); ++ai) {
      for (int ti = 0; ti < opt.trials; ++ti) {
        PairSpec spec;
        spec.initial_angle_deg = opt.angles[ai];
        spec.translation_bound = opt.translation_bound;
        spec.num_points = opt.num_points;
        spec.seed = derive_seed(common.seed, mi, ai, static_cast<std::uint64_t>(ti));
        pairs.push_back(make_pair(templ, spec));
        names.push_back(models[mi].stem().string());
        pair_angles.push_back(opt.angles[ai]);
        seeds.push_back(spec.seed);
        if (ai == 0 && ti == 0) feature_clouds.push_back(pairs.back().templ);
      }
    }
  }

  const std::vector<double> dev = feature_deviation(params, feature_clouds, opt.formats, cfg.accumulation, common.jobs);

  const std::size_t tasks = opt.formats.size() * pairs.size();
  std::vector<RunRecord> runs(tasks);
  parallel_for(tasks, common.jobs, [&](std::size_t task) {
    const std::size_t fi = task / pairs.size();
    const std::size_t pi = task % pairs.size();
    RunRecord r = run_registration_noexcept(pairs[pi], Method::pointnetlk_quant, params, cfg, opt.formats[fi]);
    r.model = names[pi];
    r.angle_deg = pair_angles[pi];
    r.seed = seeds[pi];
    runs[task] = r;
  });
  write_csv(common.out_dir / "quant_eval_runs.csv", runs_table(runs));

  Table s;
  s.schema = "pnlk-quant-eval/1";
  s.header = {"q_n", "total_bits", "angle_deg", "mean_rot_err_deg", "mean_trans_err", "mean_feature_dev",
              "runs", "failures"};
  std::map<int, double> rot_by_format;
  for (std::size_t fi = 0; fi < opt.formats.size(); ++fi) {
    const int n = opt.formats[fi];
    std::vector<double> all_rot;
    for (double a : opt.angles) {
      std::vector<double> rot, trans;
      std::size_t total = 0;
      for (const auto& r : runs) {
        if (r.q_n != n || r.angle_deg != a) continue;
        ++total;
        if (!finite_errors(r)) continue;
        rot.push_back(r.rot_err_deg);
        trans.push_back(r.trans_err);
      }
      all_rot.insert(all_rot.end(), rot.begin(), rot.end());
      s.rows.push_back({std::to_string(n), std::to_string(2 * n), format_number(a),
                        format_number(rot.empty() ? kNaN : mean(rot)),
                        format_number(trans.empty() ? kNaN : mean(trans)), format_number(dev[fi]),
                        std::to_string(total), std::to_string(total - rot.size())});
    }
    rot_by_format[n] = all_rot.empty() ? kNaN : mean(all_rot);
  }
  const fs::path summary = common.out_dir / "quant_eval.csv";
  write_csv(summary, s);
  if (common.format == OutputFormat::svg) plot_quant_eval(summary, common.out_dir / "quant_eval.svg");
  print_table(out, s);

  bool monotone = true;
  for (std::size_t i = 1; i < dev.size(); ++i) {
    if (opt.formats[i] > opt.formats[i - 1] && dev[i] > dev[i - 1]) monotone = false;
  }
  out << "feature deviation non-increasing in n: " << (monotone ? "yes" : "no") << '\n';
  const int lo = *std::min_element(opt.formats.begin(), opt.formats.end());
  const int hi = *std::max_element(opt.formats.begin(), opt.formats.end());
  out << "mean rotation error n=" << hi << " (" << format_number(rot_by_format[hi]) << ") <= n=" << lo
      << " (" << format_number(rot_by_format[lo]) << "): "
      << (rot_by_format[hi] <= rot_by_format[lo] ? "yes" : "no") << '\n';
  return 0;
}

namespace {

ResourceBudget parse_budget(const std::string& s, const CalibrationProfile& profile) {
  if (s == "none" || s.empty()) return ResourceBudget::unlimited();
  if (s.rfind("dsp=", 0) == 0) {
    ResourceBudget b;
    try {
      b.dsp = std::stod(s.substr(4));
    } catch (const std::exception&) {
      throw InvalidArgument("bad budget '" + s + "'");
    }
    return b;
  }
  return ResourceBudget::of(profile.device(s));
}

std::vector<std::string> resource_row(const std::string& name, const ResourceEstimate& r,
                                      const DeviceCapacity& d) {
  const auto f = r.fractions(d);
  return {name,
          format_number(r.dsp),
          format_number(r.bram),
          format_number(std::round(r.ff)),
          format_number(std::round(r.lut)),
          format_number(100 * f.dsp),
          format_number(100 * f.bram),
          format_number(100 * f.ff),
          format_number(100 * f.lut)};
}

}  // namespace

int cmd_accel(const CommonOptions& common, const AccelOptions& opt, std::ostream& out) {
  const CalibrationProfile profile = resolve_profile(opt.profile);
  const auto specs = core_pipeline(opt.unroll);
  const PipelineReport rep = pipeline_schedule(specs, opt.num_points, profile);
  const PipelineReport flat = pipeline_schedule(specs, opt.num_points, profile, LatencyModel::unpipelined);

  Table mods;
  mods.schema = "pnlk-accel-modules/1";
  mods.header = {"id", "module", "kind", "k", "l", "b", "model", "iterations", "ii", "depth", "cycles",
                 "latency_us", "bottleneck"};
  for (const PipelineReport* r : {&rep, &flat}) {
    for (std::size_t i = 0; i < r->modules.size(); ++i) {
      const auto& m = r->modules[i];
      mods.rows.push_back({std::to_string(i), m.spec.name(), to_string(m.spec.kind), std::to_string(m.spec.k),
                           std::to_string(m.spec.l), std::to_string(m.spec.b), to_string(m.model),
                           std::to_string(m.iterations), std::to_string(m.ii), std::to_string(m.depth),
                           std::to_string(m.cycles), format_number(m.latency_us),
                           i == r->bottleneck ? "1" : "0"});
    }
  }
  const fs::path modules_csv = common.out_dir / "accel_modules.csv";
  write_csv(modules_csv, mods);

  const DesignComparison cmp = compare_designs(opt.unroll, opt.num_points, profile);
  Table designs;
  designs.schema = "pnlk-accel-designs/1";
  designs.header = {"design", "model", "num_points", "total_us", "per_point_us", "speedup_vs_naive"};
  const double n = static_cast<double>(opt.num_points);
  designs.rows.push_back({"naive", "unpipelined", std::to_string(opt.num_points), format_number(cmp.naive_us),
                          format_number(cmp.naive_us / n), "1"});
  designs.rows.push_back({"intra", "calibrated", std::to_string(opt.num_points), format_number(cmp.intra_us),
                          format_number(cmp.intra_us / n), format_number(cmp.intra_speedup())});
  designs.rows.push_back({"inter_intra", "calibrated", std::to_string(opt.num_points),
                          format_number(cmp.inter_intra_us), format_number(cmp.inter_intra_us / n),
                          format_number(cmp.total_speedup())});
  write_csv(common.out_dir / "accel_designs.csv", designs);

  const DeviceCapacity& dev = profile.device(opt.device);
  Table res;
  res.schema = "pnlk-accel-resources/1";
  res.header = {"design", "dsp", "bram", "ff", "lut", "dsp_pct", "bram_pct", "ff_pct", "lut_pct"};
  const auto naive_specs = core_pipeline(kNaiveUnroll);
  res.rows.push_back(resource_row("naive", estimate_resources(naive_specs, opt.word_bits, profile), dev));
  const ResourceEstimate configured = estimate_resources(specs, opt.word_bits, profile);
  res.rows.push_back(resource_row("configured", configured, dev));
  write_csv(common.out_dir / "accel_resources.csv", res);

  out << "module latencies (calibrated, " << profile.clock_mhz << " MHz):\n";
  for (std::size_t i = 0; i < rep.modules.size(); ++i) {
    const auto& m = rep.modules[i];
    out << "  " << std::left << std::setw(16) << m.spec.name() << " B=" << std::setw(4) << m.spec.b
        << std::right << std::setw(10) << format_number(m.latency_us) << " us"
        << (i == rep.bottleneck ? "  <- bottleneck" : "") << '\n';
  }
  out << "interval " << format_number(rep.interval_us) << " us, fill " << format_number(rep.fill_us)
      << " us, total for N=" << opt.num_points << ": " << format_number(rep.total_us) << " us\n";
  out << "naive " << format_number(cmp.naive_us) << " us, intra " << format_number(cmp.intra_us)
      << " us (x" << format_number(cmp.intra_speedup()) << "), inter+intra "
      << format_number(cmp.inter_intra_us) << " us (x" << format_number(cmp.total_speedup()) << ")\n";
  const auto f = configured.fractions(dev);
  out << "resources on " << opt.device << ": DSP " << format_number(100 * f.dsp) << "%, BRAM "
      << format_number(100 * f.bram) << "%, FF " << format_number(100 * f.ff) << "%, LUT "
      << format_number(100 * f.lut) << "%\n";

  if (opt.explore) {
    const ResourceBudget budget = parse_budget(opt.budget, profile);
    const auto ranked = explore_design(DesignSpace::powers_of_two(), budget, opt.num_points, opt.word_bits, profile);
    Table ex;
    ex.schema = "pnlk-accel-explore/1";
    ex.header = {"rank", "id", "b_fc3_64", "b_fc64_64", "b_fc64_128", "b_fc128_1024", "b_bn64", "b_bn128",
                 "b_bn1024", "b_pool1024", "interval_us", "total_us", "bottleneck", "dsp", "bram", "ff", "lut"};
    const std::size_t shown = opt.top == 0 ? ranked.size() : std::min(opt.top, ranked.size());
    for (std::size_t i = 0; i < shown; ++i) {
      const auto& d = ranked[i];
      std::vector<std::string> row{std::to_string(i + 1), std::to_string(d.id)};
      for (int b : d.unroll) row.push_back(std::to_string(b));
      row.insert(row.end(), {format_number(d.report.interval_us), format_number(d.report.total_us),
                             d.report.modules[d.report.bottleneck].spec.name(), format_number(d.resources.dsp),
                             format_number(d.resources.bram), format_number(std::round(d.resources.ff)),
                             format_number(std::round(d.resources.lut))});
      ex.rows.push_back(std::move(row));
    }
    write_csv(common.out_dir / "accel_explore.csv", ex);
    if (ranked.empty()) {
      out << "no configuration fits the budget '" << opt.budget << "'\n";
    } else {
      out << ranked.size() << " feasible configurations under budget '" << opt.budget << "'; best total "
          << format_number(ranked.front().report.total_us) << " us\n";
    }
  }
  if (common.format == OutputFormat::svg) plot_accel(modules_csv, common.out_dir / "accel_modules.svg");
  return 0;
}

int cmd_gen_pair(const CommonOptions& common, const GenPairOptions& opt, std::ostream& out) {
  PairSpec spec = opt.pair;
  spec.seed = common.seed;
  const RegistrationPair pair = make_pair(load_template(opt.templ), spec);
  ensure_dir(common.out_dir);
  write_cloud_csv(common.out_dir / "template.csv", pair.templ);
  write_cloud_csv(common.out_dir / "source.csv", pair.source);
  write_matrix_csv(common.out_dir / "gt.csv", pair.gt.matrix());
  out << "wrote template.csv, source.csv (" << pair.source.size() << " points) and gt.csv to "
      << common.out_dir.string() << '\n';
  return 0;
}

int cmd_weights_info(const fs::path& path, std::ostream& out) {
  const WeightBlob blob = read_weights(path);
  out << "file: " << path.string() << '\n'
      << "version: " << blob.version_major << '.' << blob.version_minor << '\n'
      << "value bits: " << blob.options.value_bits << '\n'
      << "q-format: " << (blob.options.q_n ? "n=" + std::to_string(blob.options.q_n) : std::string("float"))
      << '\n'
      << "checksum: ok\n";
  std::size_t total = 0;
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    const LayerParams& l = blob.params.layers()[i];
    const std::size_t count = static_cast<std::size_t>(l.weight.size()) + 5 * l.out_dim() + 1;
    total += count;
    out << "layer " << i + 1 << ": " << l.in_dim() << " -> " << l.out_dim() << ", eps " << l.epsilon << ", "
        << count << " values\n";
  }
  out << "total values: " << total << '\n';
  return 0;
}

int cmd_gen_weights(const CommonOptions& common, const GenWeightsOptions& opt, std::ostream& out) {
  const PointNetParams params = make_random_params(common.seed);
  const fs::path path = opt.out.empty() ? common.out_dir / "weights.bin" : opt.out;
  ensure_dir(path.parent_path());
  write_weights(path, params, opt.blob);
  out << "wrote " << path.string() << " (seed " << common.seed << ", " << opt.blob.value_bits << "-bit values)\n";
  return 0;
}

void write_fixture_bundle(const fs::path& dir, const PointNetParams& params, const WeightBlobOptions& blob,
                          const PointCloud& cloud, const PointCloud& source, const LkConfig& lk) {
  fs::create_directories(dir);
  write_weights(dir / "weights.bin", params, blob);
  // Expected values come from the stored (possibly narrowed) parameters.
  const PointNetParams stored = read_weights(dir / "weights.bin").params;
  const FeatureFn f = [&stored](const PointCloud& c) { return global_feature(stored, c); };
  const Jacobian jac = compute_jacobian(f, cloud, lk);
  const TwistSolution step = solve_twist(jac.matrix, f(source) - jac.base_feature, lk.svd_cutoff);

  write_cloud_csv(dir / "cloud.csv", cloud);
  write_cloud_csv(dir / "source.csv", source);
  write_matrix_csv(dir / "feature.csv", jac.base_feature);
  write_matrix_csv(dir / "jacobian.csv", jac.matrix);
  write_matrix_csv(dir / "twist.csv", step.xi.coeffs());
  json meta;
  meta["schema"] = "pnlk-fixture/1";
  meta["perturbation"] = lk.perturbation[0];
  meta["scheme"] = lk.scheme == DifferenceScheme::forward ? "forward" : "central";
  meta["num_points"] = cloud.size();
  std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

int cmd_gen_fixtures(const CommonOptions& common, const GenFixturesOptions& opt, std::ostream& out) {
  const BenchConfig cfg = resolve_config(common);
  const PointNetParams params = resolve_weights(common);
  std::vector<fs::path> dirs(opt.count);
  parallel_for(opt.count, common.jobs, [&](std::size_t i) {
    std::ostringstream name;
    name << "fixture_" << std::setw(3) << std::setfill('0') << i;
    dirs[i] = common.out_dir / name.str();
    const PointCloud cloud = random_cloud(opt.num_points, derive_seed(common.seed, i, 0));
    std::mt19937_64 rng(derive_seed(common.seed, i, 1));
    const Vec3 axis = random_axis(rng);
    const PointCloud source = apply(axis_angle(axis, opt.angle_deg * std::numbers::pi / 180.0), cloud);
    write_fixture_bundle(dirs[i], params, opt.blob, cloud, source, cfg.lk);
  });
  out << "wrote " << opt.count << " fixture bundles to " << common.out_dir.string() << '\n';
  return 0;
}

int cmd_gen_corpus(const CommonOptions& common, const GenCorpusOptions& opt, std::ostream& out) {
  const fs::path dir = opt.dir.empty() ? common.out_dir : opt.dir;
  const auto paths = write_synthetic_corpus(dir, opt.count, common.seed);
  out << "wrote " << paths.size() << " OFF meshes to " << dir.string() << '\n';
  return 0;
}

}  // namespace pnlk::bench
