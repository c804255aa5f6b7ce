#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "pnlk/geometry.hpp"
#include "pnlk/pointnet.hpp"

namespace pnlk {

using Wide = __int128;

/// Signed two's-complement word of 2n bits: 1 sign bit, n integer bits and
/// n - 1 fraction bits. value = raw / 2^(n-1).
class QFormat {
 public:
  static constexpr int kMinN = 2;
  static constexpr int kMaxN = 31;

  explicit QFormat(int n);

  int n() const { return n_; }
  int total_bits() const { return 2 * n_; }
  int integer_bits() const { return n_; }
  int fraction_bits() const { return n_ - 1; }
  std::int64_t raw_max() const { return (std::int64_t{1} << (2 * n_ - 1)) - 1; }
  std::int64_t raw_min() const { return -(std::int64_t{1} << (2 * n_ - 1)); }
  /// Range of the double-width accumulator used inside FC dot products.
  Wide acc_max() const { return (Wide{1} << (4 * n_ - 1)) - 1; }
  Wide acc_min() const { return -(Wide{1} << (4 * n_ - 1)); }
  double resolution() const;

  bool operator==(const QFormat&) const = default;

 private:
  int n_;
};

/// Clamp counts, one bucket per place a clamp can happen.
struct SaturationStats {
  std::uint64_t quantize = 0;     // real -> raw conversions (inputs, parameters)
  std::uint64_t accumulator = 0;  // double-width accumulator range
  std::uint64_t output = 0;       // narrowing back to 2n bits

  std::uint64_t total() const { return quantize + accumulator + output; }
  SaturationStats& operator+=(const SaturationStats& o);
  bool operator==(const SaturationStats&) const = default;
};

struct QValue {
  std::int64_t raw = 0;
  QFormat format{16};

  double value() const;
};

/// Round-to-nearest-even of x * 2^f, saturated to the word range.
QValue quantize(double x, QFormat fmt, SaturationStats* stats = nullptr);
double dequantize(QValue q);

QValue q_add(QValue a, QValue b, SaturationStats* stats = nullptr);
/// Exact product, shifted right by the fraction width with round-half-even.
QValue q_mul(QValue a, QValue b, SaturationStats* stats = nullptr);

/// Arithmetic right shift by `shift` bits with round-half-to-even.
Wide round_shift_even(Wide v, int shift);

enum class AccumulationMode {
  per_output,  ///< double-width accumulate, one rounding per output element
  per_mac,     ///< every product rounded and saturated to the word width
};

/// PointNet with every parameter pre-quantized to one Q-format. BN is folded
/// into a per-channel (scale, shift) pair in double before quantization.
class QuantizedPointNet {
 public:
  QuantizedPointNet(const PointNetParams& params, QFormat fmt,
                    AccumulationMode mode = AccumulationMode::per_output);

  struct Layer {
    int in_dim = 0;
    int out_dim = 0;
    std::vector<std::int64_t> weight;  // row-major L x K
    std::vector<std::int64_t> bias;
    std::vector<std::int64_t> scale;
    std::vector<std::int64_t> shift;
  };

  QFormat format() const { return fmt_; }
  AccumulationMode mode() const { return mode_; }
  const std::array<Layer, kNumLayers>& layers() const { return layers_; }
  /// Clamps made while quantizing the parameters.
  const SaturationStats& parameter_stats() const { return param_stats_; }

  /// Raw 1024-word local feature for one already-quantized point.
  void local_feature_raw(const std::array<std::int64_t, 3>& point, std::vector<std::int64_t>& out,
                         SaturationStats& stats) const;

  struct Result {
    GlobalFeature feature;           // dequantized
    std::vector<std::int64_t> raw;   // max-pooled words
    SaturationStats stats;           // forward-pass clamps only
  };
  Result global_feature(const PointCloud& cloud) const;

 private:
  QFormat fmt_;
  AccumulationMode mode_;
  std::array<Layer, kNumLayers> layers_;
  SaturationStats param_stats_;
};

struct QuantizedFeature {
  GlobalFeature feature;
  std::vector<std::int64_t> raw;
  SaturationStats stats;  // parameter + forward clamps
};

QuantizedFeature quantized_global_feature(const PointNetParams& params, const PointCloud& cloud,
                                          QFormat fmt,
                                          AccumulationMode mode = AccumulationMode::per_output);

}  // namespace pnlk
