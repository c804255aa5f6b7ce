#include "pnlk/accel_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pnlk/data.hpp"
#include "pnlk/error.hpp"

namespace pnlk {

namespace {

using json = nlohmann::json;

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

std::int64_t ceil_log2(std::int64_t b) {
  std::int64_t r = 0;
  while ((std::int64_t{1} << r) < b) ++r;
  return r;
}

// BRAM18 primitives needed for `words` values of `bits` each in one bank.
double bram18_for(std::int64_t words, int bits, double block_kbits) {
  if (words <= 0) return 0.0;
  const double half_bits = block_kbits * 1024.0 / 2.0;
  return std::ceil(static_cast<double>(words) * bits / half_bits);
}

// Storage of a vector of `words` spread evenly over `banks` memories.
double banked_bram18(std::int64_t words, std::int64_t banks, int bits, double block_kbits) {
  return static_cast<double>(banks) * bram18_for(ceil_div(words, banks), bits, block_kbits);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace

const char* to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::fc: return "fc";
    case ModuleKind::bn_relu: return "bn_relu";
    case ModuleKind::maxpool: return "maxpool";
  }
  return "?";
}

ModuleKind module_kind_from_string(const std::string& s) {
  if (s == "fc") return ModuleKind::fc;
  if (s == "bn_relu") return ModuleKind::bn_relu;
  if (s == "maxpool") return ModuleKind::maxpool;
  throw InvalidArgument("unknown module kind '" + s + "'");
}

const char* to_string(LatencyModel m) {
  return m == LatencyModel::calibrated ? "calibrated" : "unpipelined";
}

void HwModuleSpec::validate() const {
  if (k < 1 || l < 1) throw InvalidArgument(name() + ": dimensions must be >= 1");
  if (kind != ModuleKind::fc && l != k) throw InvalidArgument(name() + ": element-wise stage needs L == K");
  if (b < 1) throw InvalidArgument(name() + ": unroll factor must be >= 1");
  if (b > k) throw InvalidArgument(name() + ": unroll factor " + std::to_string(b) + " exceeds K");
}

std::string HwModuleSpec::name() const {
  switch (kind) {
    case ModuleKind::fc: return "FC(" + std::to_string(k) + "," + std::to_string(l) + ")";
    case ModuleKind::bn_relu: return "BN-ReLU(" + std::to_string(k) + ")";
    case ModuleKind::maxpool: return "MaxPool(" + std::to_string(k) + ")";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Calibration profile
// ---------------------------------------------------------------------------

CalibrationProfile CalibrationProfile::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("calibration profile: ") + e.what(), 0);
  }
  CalibrationProfile p;
  try {
    const auto schema = get_or<std::string>(j, "schema", "");
    if (schema != "pnlk-calibration/1") {
      throw InvalidArgument("calibration profile: unsupported schema '" + schema + "'");
    }
    p.clock_mhz = get_or(j, "clock_mhz", p.clock_mhz);
    if (!(p.clock_mhz > 0.0)) throw InvalidArgument("calibration profile: clock_mhz must be > 0");

    const json& lat = j.at("latency");
    const json& fc = lat.at("fc");
    p.fc.serial_ii_per_input = fc.at("serial_ii_per_input").get<int>();
    p.fc.tree_overhead = fc.at("tree_overhead").get<int>();
    p.fc.depth = fc.at("depth").get<int>();
    p.fc.full_unroll_depth = fc.at("full_unroll_depth").get<int>();
    p.bn_relu = {lat.at("bn_relu").at("ii").get<int>(), lat.at("bn_relu").at("depth").get<int>()};
    p.maxpool = {lat.at("maxpool").at("ii").get<int>(), lat.at("maxpool").at("depth").get<int>()};

    const json& res = j.at("resources");
    p.bram_block_kbits = res.at("bram_block_kbits").get<double>();
    for (const auto& [bits, c] : res.at("dsp_per_multiplier").items()) {
      p.dsp_per_multiplier[std::stoi(bits)] = c.get<double>();
    }
    p.ff_base = res.at("ff_base").get<double>();
    p.ff_per_lane_bit = res.at("ff_per_lane_bit").get<double>();
    p.lut_base = res.at("lut_base").get<double>();
    p.lut_per_lane_bit = res.at("lut_per_lane_bit").get<double>();

    if (j.contains("devices")) {
      for (const auto& [name, d] : j.at("devices").items()) {
        p.devices[name] = {name, d.at("bram").get<double>(), d.at("dsp").get<double>(),
                           d.at("ff").get<double>(), d.at("lut").get<double>()};
      }
    }
    if (j.contains("reference_modules")) {
      for (const auto& m : j.at("reference_modules")) {
        HwModuleSpec s;
        s.kind = module_kind_from_string(m.at("kind").get<std::string>());
        s.k = m.at("k").get<int>();
        s.l = get_or(m, "l", s.k);
        s.b = m.at("b").get<int>();
        s.validate();
        p.reference_modules.push_back({s, m.at("latency_us").get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("calibration profile: ") + e.what());
  }
  return p;
}

CalibrationProfile CalibrationProfile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration profile " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

const DeviceCapacity& CalibrationProfile::device(const std::string& name) const {
  const auto it = devices.find(name);
  if (it == devices.end()) throw InvalidArgument("unknown device '" + name + "'");
  return it->second;
}

double CalibrationProfile::dsp_per_mult(int word_bits) const {
  // Smallest tabulated width that holds the word.
  const auto it = dsp_per_multiplier.lower_bound(word_bits);
  if (it == dsp_per_multiplier.end()) {
    throw InvalidArgument("no DSP cost for " + std::to_string(word_bits) + "-bit words");
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// Latency
// ---------------------------------------------------------------------------

std::int64_t unrolled_iteration_count(int k, int l, int b) {
  if (k < 1 || l < 1) throw InvalidArgument("unrolled_iteration_count: K and L must be >= 1");
  if (b < 1) throw InvalidArgument("unrolled_iteration_count: B must be >= 1");
  if (b > k) throw InvalidArgument("unrolled_iteration_count: B must not exceed K");
  return static_cast<std::int64_t>(l) * (ceil_div(k, b) + ceil_log2(b));
}

std::int64_t unpipelined_cycles(const HwModuleSpec& spec) {
  spec.validate();
  if (spec.kind == ModuleKind::fc) return unrolled_iteration_count(spec.k, spec.l, spec.b);
  return ceil_div(spec.k, spec.b);
}

ModuleTiming module_timing(const HwModuleSpec& spec, const CalibrationProfile& profile,
                           LatencyModel model) {
  spec.validate();
  ModuleTiming t;
  t.spec = spec;
  t.model = model;
  if (model == LatencyModel::unpipelined) {
    t.iterations = unpipelined_cycles(spec);
    t.ii = 1;
    t.depth = 0;
  } else {
    switch (spec.kind) {
      case ModuleKind::fc:
        t.iterations = spec.l;
        if (spec.b == 1) {
          t.ii = static_cast<std::int64_t>(profile.fc.serial_ii_per_input) * spec.k;
          t.depth = profile.fc.depth;
        } else if (spec.b < spec.k) {
          t.ii = ceil_div(spec.k, spec.b) + profile.fc.tree_overhead;
          t.depth = profile.fc.depth;
        } else {
          t.ii = 1;
          t.depth = profile.fc.full_unroll_depth;
        }
        break;
      case ModuleKind::bn_relu:
        t.iterations = ceil_div(spec.k, spec.b);
        t.ii = profile.bn_relu.ii;
        t.depth = profile.bn_relu.depth;
        break;
      case ModuleKind::maxpool:
        t.iterations = ceil_div(spec.k, spec.b);
        t.ii = profile.maxpool.ii;
        t.depth = profile.maxpool.depth;
        break;
    }
  }
  t.cycles = t.iterations * t.ii + t.depth;
  t.latency_us = static_cast<double>(t.cycles) / profile.clock_mhz;
  return t;
}

double module_latency(const HwModuleSpec& spec, const CalibrationProfile& profile, LatencyModel model) {
  return module_timing(spec, profile, model).latency_us;
}

// ---------------------------------------------------------------------------
// Resources
// ---------------------------------------------------------------------------

ResourceEstimate::Fractions ResourceEstimate::fractions(const DeviceCapacity& d) const {
  return {dsp / d.dsp, bram / d.bram, ff / d.ff, lut / d.lut};
}

ResourceEstimate estimate_resources(std::span<const HwModuleSpec> specs, int word_bits,
                                    const CalibrationProfile& profile) {
  ResourceEstimate r;
  r.word_bits = word_bits;
  const double dsp_each = profile.dsp_per_mult(word_bits);
  const double kb = profile.bram_block_kbits;
  double multipliers = 0.0;
  double lanes = 0.0;
  double bram18 = 0.0;
  for (const auto& s : specs) {
    s.validate();
    lanes += s.b;
    switch (s.kind) {
      case ModuleKind::fc:
        multipliers += s.b;
        // Weights split column-wise over B banks, bias in one memory.
        bram18 += banked_bram18(static_cast<std::int64_t>(s.k) * s.l, s.b, word_bits, kb);
        bram18 += bram18_for(s.l, word_bits, kb);
        break;
      case ModuleKind::bn_relu:
        multipliers += s.b;
        bram18 += 2.0 * banked_bram18(s.k, s.b, word_bits, kb);  // folded scale and shift
        break;
      case ModuleKind::maxpool:
        bram18 += banked_bram18(s.k, s.b, word_bits, kb);  // running max
        break;
    }
  }
  r.dsp = multipliers * dsp_each;
  r.bram = bram18 / 2.0;
  r.ff = profile.ff_base + profile.ff_per_lane_bit * lanes * word_bits;
  r.lut = profile.lut_base + profile.lut_per_lane_bit * lanes * word_bits;
  return r;
}

bool ResourceBudget::admits(const ResourceEstimate& r) const {
  return r.dsp <= dsp && r.bram <= bram && r.ff <= ff && r.lut <= lut;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

PipelineReport pipeline_schedule(std::span<const HwModuleSpec> specs, std::size_t num_points,
                                 const CalibrationProfile& profile, LatencyModel model) {
  if (specs.empty()) throw InvalidArgument("pipeline_schedule: need at least one module");
  if (num_points < 1) throw InvalidArgument("pipeline_schedule: need at least one point");
  PipelineReport rep;
  rep.num_points = num_points;
  rep.modules.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    rep.modules.push_back(module_timing(specs[i], profile, model));
    const double lat = rep.modules.back().latency_us;
    rep.fill_us += lat;
    if (lat > rep.interval_us) {
      rep.interval_us = lat;
      rep.bottleneck = i;
    }
  }
  rep.total_us = rep.fill_us + static_cast<double>(num_points - 1) * rep.interval_us;
  return rep;
}

std::array<HwModuleSpec, 8> core_module_groups() {
  return {HwModuleSpec::fc(3, 64, 1),     HwModuleSpec::fc(64, 64, 1),
          HwModuleSpec::fc(64, 128, 1),   HwModuleSpec::fc(128, 1024, 1),
          HwModuleSpec::bn_relu(64, 1),   HwModuleSpec::bn_relu(128, 1),
          HwModuleSpec::bn_relu(1024, 1), HwModuleSpec::maxpool(1024, 1)};
}

std::vector<HwModuleSpec> core_pipeline(const UnrollAssignment& u) {
  std::vector<HwModuleSpec> s{
      HwModuleSpec::fc(3, 64, u[0]),       HwModuleSpec::bn_relu(64, u[4]),
      HwModuleSpec::fc(64, 64, u[1]),      HwModuleSpec::bn_relu(64, u[4]),
      HwModuleSpec::fc(64, 64, u[1]),      HwModuleSpec::bn_relu(64, u[4]),
      HwModuleSpec::fc(64, 128, u[2]),     HwModuleSpec::bn_relu(128, u[5]),
      HwModuleSpec::fc(128, 1024, u[3]),   HwModuleSpec::bn_relu(1024, u[6]),
      HwModuleSpec::maxpool(1024, u[7]),
  };
  for (const auto& m : s) m.validate();
  return s;
}

DesignComparison compare_designs(const UnrollAssignment& unroll, std::size_t num_points,
                                 const CalibrationProfile& profile) {
  if (num_points < 1) throw InvalidArgument("compare_designs: need at least one point");
  const auto naive = core_pipeline(kNaiveUnroll);
  const auto tuned = core_pipeline(unroll);
  const double n = static_cast<double>(num_points);
  DesignComparison c;
  c.num_points = num_points;
  c.naive_us = pipeline_schedule(naive, 1, profile, LatencyModel::unpipelined).fill_us * n;
  c.intra_us = pipeline_schedule(tuned, 1, profile).fill_us * n;
  c.inter_intra_us = pipeline_schedule(tuned, num_points, profile).total_us;
  return c;
}

// ---------------------------------------------------------------------------
// Design exploration
// ---------------------------------------------------------------------------

DesignSpace DesignSpace::powers_of_two(int max_b, int max_elementwise_b) {
  DesignSpace space;
  const auto groups = core_module_groups();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const bool fc = groups[g].kind == ModuleKind::fc;
    const int cap = std::min(groups[g].k, fc ? max_b : max_elementwise_b);
    auto& c = space.candidates[g];
    for (int b = 1; b <= cap; b *= 2) c.push_back(b);
    if (c.back() != cap) c.push_back(cap);
  }
  return space;
}

std::vector<DesignPoint> explore_design(const DesignSpace& space, const ResourceBudget& budget,
                                        std::size_t num_points, int word_bits,
                                        const CalibrationProfile& profile) {
  const auto groups = core_module_groups();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (space.candidates[g].empty()) throw InvalidArgument("explore_design: empty candidate list");
  }

  std::vector<DesignPoint> out;
  UnrollAssignment u{};
  std::array<std::size_t, 8> idx{};
  std::size_t id = 0;
  while (true) {
    bool valid = true;
    for (std::size_t g = 0; g < 8; ++g) {
      u[g] = space.candidates[g][idx[g]];
      if (u[g] < 1 || u[g] > groups[g].k) valid = false;
    }
    if (valid) {
      const auto specs = core_pipeline(u);
      const auto res = estimate_resources(specs, word_bits, profile);
      if (budget.admits(res)) {
        out.push_back({id, u, pipeline_schedule(specs, num_points, profile), res});
      }
      ++id;
    }
    std::size_t g = 0;
    while (g < 8 && ++idx[g] == space.candidates[g].size()) idx[g++] = 0;
    if (g == 8) break;
  }

  std::sort(out.begin(), out.end(), [](const DesignPoint& a, const DesignPoint& b) {
    if (a.report.total_us != b.report.total_us) return a.report.total_us < b.report.total_us;
    if (a.resources.dsp != b.resources.dsp) return a.resources.dsp < b.resources.dsp;
    return a.id < b.id;
  });
  return out;
}

// ---------------------------------------------------------------------------
// Protocol core
// ---------------------------------------------------------------------------

struct PointNetCore::State {
  CoreOptions options;
  std::optional<PointNetParams> params;
  std::optional<QuantizedPointNet> quantized;
  bool in_frame = false;
  GlobalFeature running;
  std::vector<std::int64_t> raw;
  std::vector<std::int64_t> psi;
  SaturationStats stats;
};

PointNetCore::PointNetCore(CoreOptions options) : state_(std::make_unique<State>()) {
  state_->options = options;
}
PointNetCore::~PointNetCore() = default;
PointNetCore::PointNetCore(PointNetCore&&) noexcept = default;
PointNetCore& PointNetCore::operator=(PointNetCore&&) noexcept = default;

std::uint32_t PointNetCore::initialize(std::span<const std::uint32_t> weight_words) {
  auto& s = *state_;
  s.params.reset();
  s.quantized.reset();
  s.in_frame = false;

  WeightBlob blob = [&] {
    try {
      return decode_weight_blob(weight_words);
    } catch (const BlobError& e) {
      throw ProtocolError(std::string("weight initialisation rejected: ") + e.what());
    }
  }();

  bool fixed = false;
  int n = s.options.q_n.value_or(blob.options.q_n);
  switch (s.options.arithmetic) {
    case CoreArithmetic::from_blob: fixed = n != 0; break;
    case CoreArithmetic::float64: fixed = false; break;
    case CoreArithmetic::fixed_point:
      fixed = true;
      if (n == 0) n = kDefaultQn;
      break;
  }
  if (fixed) {
    if (n < QFormat::kMinN || n > QFormat::kMaxN) {
      throw ProtocolError("weight initialisation rejected: unsupported Q-format n=" + std::to_string(n));
    }
    s.quantized.emplace(blob.params, QFormat(n), s.options.accumulation);
  }
  s.params.emplace(std::move(blob.params));
  return kAck;
}

bool PointNetCore::ready() const { return state_->params.has_value(); }

bool PointNetCore::fixed_point() const { return state_->quantized.has_value(); }

std::optional<QFormat> PointNetCore::format() const {
  if (!state_->quantized) return std::nullopt;
  return state_->quantized->format();
}

void PointNetCore::begin_frame() {
  auto& s = *state_;
  if (!s.params) throw ProtocolError("feature extraction requested before weight initialisation");
  if (s.in_frame) throw ProtocolError("frame already open");
  s.in_frame = true;
  s.stats = {};
  if (s.quantized) {
    s.raw.assign(kFeatureDim, 0);
  } else {
    s.running = GlobalFeature::Zero(kFeatureDim);
  }
}

void PointNetCore::push_point(const Vec3& p) {
  auto& s = *state_;
  if (!s.in_frame) throw ProtocolError("point pushed outside a frame");
  if (!p.allFinite()) throw ProtocolError("non-finite point in stream");
  if (s.quantized) {
    const QFormat fmt = s.quantized->format();
    const std::array<std::int64_t, 3> q{quantize(p.x(), fmt, &s.stats).raw,
                                        quantize(p.y(), fmt, &s.stats).raw,
                                        quantize(p.z(), fmt, &s.stats).raw};
    s.quantized->local_feature_raw(q, s.psi, s.stats);
    for (int i = 0; i < kFeatureDim; ++i) s.raw[i] = std::max(s.raw[i], s.psi[i]);
  } else {
    maxpool_update(s.running, local_feature(*s.params, p));
  }
}

GlobalFeature PointNetCore::end_frame() {
  auto& s = *state_;
  if (!s.in_frame) throw ProtocolError("no open frame");
  s.in_frame = false;
  if (!s.quantized) return s.running;
  GlobalFeature f(kFeatureDim);
  const QFormat fmt = s.quantized->format();
  for (int i = 0; i < kFeatureDim; ++i) f(i) = dequantize({s.raw[i], fmt});
  return f;
}

const std::vector<std::int64_t>& PointNetCore::last_raw() const { return state_->raw; }

SaturationStats PointNetCore::last_stats() const { return state_->stats; }

ProtocolTrace stream_protocol_emulate(std::span<const std::uint32_t> weight_words,
                                      std::span<const Vec3> points, const CoreOptions& options) {
  PointNetCore core(options);
  ProtocolTrace t;
  t.ack = core.initialize(weight_words);
  core.begin_frame();
  for (const auto& p : points) core.push_point(p);
  t.feature = core.end_frame();
  if (core.fixed_point()) t.raw = core.last_raw();
  return t;
}

}  // namespace pnlk
