#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pnlk/fixedpoint.hpp"
#include "pnlk/geometry.hpp"
#include "pnlk/pointnet.hpp"

namespace pnlk {

enum class ModuleKind { fc, bn_relu, maxpool };

const char* to_string(ModuleKind kind);
ModuleKind module_kind_from_string(const std::string& s);

/// One hardware stage. For BN-ReLU and MaxPool only k is meaningful (l == k).
struct HwModuleSpec {
  ModuleKind kind = ModuleKind::fc;
  int k = 1;
  int l = 1;
  int b = 1;  // unroll factor

  static HwModuleSpec fc(int k, int l, int b) { return {ModuleKind::fc, k, l, b}; }
  static HwModuleSpec bn_relu(int k, int b) { return {ModuleKind::bn_relu, k, k, b}; }
  static HwModuleSpec maxpool(int k, int b) { return {ModuleKind::maxpool, k, k, b}; }

  void validate() const;
  std::string name() const;  // e.g. "FC(128,1024)"
  bool operator==(const HwModuleSpec&) const = default;
};

struct DeviceCapacity {
  std::string name;
  double bram = 0;
  double dsp = 0;
  double ff = 0;
  double lut = 0;
};

/// Fitted constants for the latency and resource models. Loaded from a JSON
/// profile (see data/calibration/table1_profile.json for the schema).
struct CalibrationProfile {
  double clock_mhz = 100.0;

  struct Fc {
    int serial_ii_per_input = 3;  // B == 1: cycles per input element per output
    int tree_overhead = 4;        // 1 < B < K: added to ceil(K/B) per output
    int depth = 1;
    int full_unroll_depth = 4;  // B >= K: one output per cycle
  } fc;
  struct Elementwise {
    int ii = 1;
    int depth = 0;
  } bn_relu{1, 4}, maxpool{1, 2};

  double bram_block_kbits = 36;
  std::map<int, double> dsp_per_multiplier;  // keyed by word width in bits
  double ff_base = 0, ff_per_lane_bit = 0;
  double lut_base = 0, lut_per_lane_bit = 0;

  std::map<std::string, DeviceCapacity> devices;

  struct Reference {
    HwModuleSpec spec;
    double latency_us;
  };
  std::vector<Reference> reference_modules;

  static CalibrationProfile load(const std::filesystem::path& path);
  static CalibrationProfile from_json_text(const std::string& text);

  const DeviceCapacity& device(const std::string& name) const;
  double dsp_per_mult(int word_bits) const;
};

/// Iteration count of an FC(K, L) loop nest with the inner loop unrolled by
/// B and an adder tree: L * (ceil(K/B) + ceil(log2 B)). Unpipelined.
std::int64_t unrolled_iteration_count(int k, int l, int b);

/// Unpipelined cycle count of a module (FC: formula above; element-wise
/// modules: ceil(K/B)).
std::int64_t unpipelined_cycles(const HwModuleSpec& spec);

enum class LatencyModel {
  calibrated,   ///< cycles = iterations * II + depth, constants from the profile
  unpipelined,  ///< the closed-form iteration count, one cycle per iteration
};
const char* to_string(LatencyModel m);

struct ModuleTiming {
  HwModuleSpec spec;
  LatencyModel model = LatencyModel::calibrated;
  std::int64_t iterations = 0;
  std::int64_t ii = 0;
  std::int64_t depth = 0;
  std::int64_t cycles = 0;
  double latency_us = 0.0;
};

ModuleTiming module_timing(const HwModuleSpec& spec, const CalibrationProfile& profile,
                           LatencyModel model = LatencyModel::calibrated);
double module_latency(const HwModuleSpec& spec, const CalibrationProfile& profile,
                      LatencyModel model = LatencyModel::calibrated);

struct ResourceEstimate {
  double dsp = 0, bram = 0, ff = 0, lut = 0;
  int word_bits = 32;

  struct Fractions {
    double dsp = 0, bram = 0, ff = 0, lut = 0;
  };
  Fractions fractions(const DeviceCapacity& device) const;
};

ResourceEstimate estimate_resources(std::span<const HwModuleSpec> specs, int word_bits,
                                    const CalibrationProfile& profile);

struct PipelineReport {
  std::vector<ModuleTiming> modules;
  std::size_t bottleneck = 0;  // index of the slowest stage (earliest on ties)
  double interval_us = 0.0;    // steady-state time per point
  double fill_us = 0.0;        // sum of stage latencies
  double total_us = 0.0;       // fill + (N - 1) * interval
  std::size_t num_points = 0;
};

/// Inter-layer pipeline over `specs`: a new point enters every `interval`.
PipelineReport pipeline_schedule(std::span<const HwModuleSpec> specs, std::size_t num_points,
                                 const CalibrationProfile& profile,
                                 LatencyModel model = LatencyModel::calibrated);

// ---------------------------------------------------------------------------
// The PointNet core and its design space
// ---------------------------------------------------------------------------

/// Unroll factors of the eight distinct module shapes of the core, in order:
/// FC(3,64), FC(64,64), FC(64,128), FC(128,1024),
/// BN-ReLU(64), BN-ReLU(128), BN-ReLU(1024), MaxPool(1024).
/// Stages with the same shape share a factor.
using UnrollAssignment = std::array<int, 8>;

inline constexpr UnrollAssignment kPublishedUnroll{1, 16, 32, 128, 1, 1, 2, 2};
inline constexpr UnrollAssignment kNaiveUnroll{1, 1, 1, 1, 1, 1, 1, 1};

/// Shapes (with b = 1) of the eight groups, same order as UnrollAssignment.
std::array<HwModuleSpec, 8> core_module_groups();

/// The eleven-stage chain FC -> BN-ReLU x5 -> MaxPool for an assignment.
std::vector<HwModuleSpec> core_pipeline(const UnrollAssignment& unroll);

struct DesignComparison {
  std::size_t num_points = 0;
  double naive_us = 0.0;        // all B = 1, unpipelined, stages run back to back
  double intra_us = 0.0;        // unrolled + pipelined stages, run back to back
  double inter_intra_us = 0.0;  // additionally overlapped across points
  double intra_speedup() const { return naive_us / intra_us; }
  double inter_speedup() const { return intra_us / inter_intra_us; }
  double total_speedup() const { return naive_us / inter_intra_us; }
};

DesignComparison compare_designs(const UnrollAssignment& unroll, std::size_t num_points,
                                 const CalibrationProfile& profile);

struct ResourceBudget {
  double dsp = std::numeric_limits<double>::infinity();
  double bram = std::numeric_limits<double>::infinity();
  double ff = std::numeric_limits<double>::infinity();
  double lut = std::numeric_limits<double>::infinity();

  static ResourceBudget unlimited() { return {}; }
  static ResourceBudget of(const DeviceCapacity& d) { return {d.dsp, d.bram, d.ff, d.lut}; }
  bool admits(const ResourceEstimate& r) const;
};

struct DesignSpace {
  std::array<std::vector<int>, 8> candidates;

  /// Powers of two up to each group's input width (and the width itself when
  /// it is not a power of two), capped at max_b for FC stages and at
  /// max_elementwise_b for BN-ReLU and MaxPool.
  static DesignSpace powers_of_two(int max_b = 128, int max_elementwise_b = 2);
};

struct DesignPoint {
  std::size_t id = 0;  // position in enumeration order
  UnrollAssignment unroll{};
  PipelineReport report;
  ResourceEstimate resources;
};

/// Enumerates every assignment in the space (factors larger than a stage's
/// input width are skipped), keeps those inside the budget and ranks them
/// by total latency for `num_points`, then DSP count, then id.
std::vector<DesignPoint> explore_design(const DesignSpace& space, const ResourceBudget& budget,
                                        std::size_t num_points, int word_bits,
                                        const CalibrationProfile& profile);

// ---------------------------------------------------------------------------
// Two-mode stream protocol
// ---------------------------------------------------------------------------

enum class CoreArithmetic {
  from_blob,    ///< fixed point when the blob declares a Q-format, else float
  float64,
  fixed_point,
};

struct CoreOptions {
  CoreArithmetic arithmetic = CoreArithmetic::from_blob;
  std::optional<int> q_n;  // overrides the blob's Q-format
  AccumulationMode accumulation = AccumulationMode::per_output;
};

/// Behavioural model of the IP core: a weight-initialisation phase that
/// consumes the blob word stream and answers with a nonzero ack, then
/// feature-extraction frames fed one point at a time.
class PointNetCore {
 public:
  static constexpr std::uint32_t kAck = 0x00000001u;
  static constexpr int kDefaultQn = 16;

  explicit PointNetCore(CoreOptions options = {});
  ~PointNetCore();
  PointNetCore(PointNetCore&&) noexcept;
  PointNetCore& operator=(PointNetCore&&) noexcept;

  /// Throws ProtocolError (and stays uninitialised) on a malformed stream.
  std::uint32_t initialize(std::span<const std::uint32_t> weight_words);
  bool ready() const;
  bool fixed_point() const;
  std::optional<QFormat> format() const;

  void begin_frame();
  void push_point(const Vec3& p);
  /// Emits the 1024-value feature and returns to the idle state.
  GlobalFeature end_frame();
  /// Raw words of the last frame (fixed-point mode only).
  const std::vector<std::int64_t>& last_raw() const;
  SaturationStats last_stats() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

struct ProtocolTrace {
  std::uint32_t ack = 0;
  GlobalFeature feature;
  std::vector<std::int64_t> raw;  // fixed-point mode only
};

/// Drives a fresh core through initialisation and one extraction frame.
ProtocolTrace stream_protocol_emulate(std::span<const std::uint32_t> weight_words,
                                      std::span<const Vec3> points, const CoreOptions& options = {});

}  // namespace pnlk
