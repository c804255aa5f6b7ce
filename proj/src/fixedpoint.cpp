#include "pnlk/fixedpoint.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pnlk/error.hpp"

namespace pnlk {

namespace {

std::int64_t quantize_raw(double x, const QFormat& fmt, SaturationStats* stats) {
  if (std::isnan(x)) throw InvalidArgument("cannot quantize NaN");
  // nearbyint uses the default round-to-nearest-even mode.
  const double scaled = std::nearbyint(std::ldexp(x, fmt.fraction_bits()));
  const double limit = std::ldexp(1.0, fmt.total_bits() - 1);
  if (scaled >= limit) {
    if (stats) ++stats->quantize;
    return fmt.raw_max();
  }
  if (scaled < -limit) {
    if (stats) ++stats->quantize;
    return fmt.raw_min();
  }
  return static_cast<std::int64_t>(scaled);
}

std::int64_t narrow(Wide v, const QFormat& fmt, SaturationStats& stats) {
  if (v > fmt.raw_max()) {
    ++stats.output;
    return fmt.raw_max();
  }
  if (v < fmt.raw_min()) {
    ++stats.output;
    return fmt.raw_min();
  }
  return static_cast<std::int64_t>(v);
}

Wide clamp_acc(Wide v, const QFormat& fmt, SaturationStats& stats) {
  if (v > fmt.acc_max()) {
    ++stats.accumulator;
    return fmt.acc_max();
  }
  if (v < fmt.acc_min()) {
    ++stats.accumulator;
    return fmt.acc_min();
  }
  return v;
}

std::int64_t sat_add(std::int64_t a, std::int64_t b, const QFormat& fmt, SaturationStats& stats) {
  const Wide s = static_cast<Wide>(a) + b;
  if (s > fmt.raw_max()) {
    ++stats.accumulator;
    return fmt.raw_max();
  }
  if (s < fmt.raw_min()) {
    ++stats.accumulator;
    return fmt.raw_min();
  }
  return static_cast<std::int64_t>(s);
}

}  // namespace

QFormat::QFormat(int n) : n_(n) {
  if (n < kMinN || n > kMaxN) {
    throw InvalidArgument("Q-format half width n=" + std::to_string(n) + " outside [" +
                          std::to_string(kMinN) + ", " + std::to_string(kMaxN) + "]");
  }
}

double QFormat::resolution() const { return std::ldexp(1.0, -fraction_bits()); }

SaturationStats& SaturationStats::operator+=(const SaturationStats& o) {
  quantize += o.quantize;
  accumulator += o.accumulator;
  output += o.output;
  return *this;
}

double QValue::value() const { return dequantize(*this); }

QValue quantize(double x, QFormat fmt, SaturationStats* stats) {
  return {quantize_raw(x, fmt, stats), fmt};
}

double dequantize(QValue q) {
  return std::ldexp(static_cast<double>(q.raw), -q.format.fraction_bits());
}

Wide round_shift_even(Wide v, int shift) {
  if (shift <= 0) return v;
  const Wide floor = v >> shift;  // arithmetic shift: floor division
  const Wide rem = v - (floor << shift);
  const Wide half = Wide{1} << (shift - 1);
  if (rem > half || (rem == half && (floor & 1) != 0)) return floor + 1;
  return floor;
}

QValue q_add(QValue a, QValue b, SaturationStats* stats) {
  if (!(a.format == b.format)) throw InvalidArgument("q_add: operands have different formats");
  SaturationStats local;
  const auto raw = narrow(static_cast<Wide>(a.raw) + b.raw, a.format, local);
  if (stats) *stats += local;
  return {raw, a.format};
}

QValue q_mul(QValue a, QValue b, SaturationStats* stats) {
  if (!(a.format == b.format)) throw InvalidArgument("q_mul: operands have different formats");
  SaturationStats local;
  const Wide product = static_cast<Wide>(a.raw) * b.raw;
  const auto raw = narrow(round_shift_even(product, a.format.fraction_bits()), a.format, local);
  if (stats) *stats += local;
  return {raw, a.format};
}

QuantizedPointNet::QuantizedPointNet(const PointNetParams& params, QFormat fmt,
                                     AccumulationMode mode)
    : fmt_(fmt), mode_(mode) {
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    const auto& src = params.layer(i);
    auto& dst = layers_[i];
    dst.in_dim = src.in_dim();
    dst.out_dim = src.out_dim();
    dst.weight.resize(static_cast<std::size_t>(dst.in_dim) * dst.out_dim);
    for (int r = 0; r < dst.out_dim; ++r) {
      for (int c = 0; c < dst.in_dim; ++c) {
        dst.weight[static_cast<std::size_t>(r) * dst.in_dim + c] =
            quantize_raw(src.weight(r, c), fmt_, &param_stats_);
      }
    }
    dst.bias.resize(dst.out_dim);
    dst.scale.resize(dst.out_dim);
    dst.shift.resize(dst.out_dim);
    for (int r = 0; r < dst.out_dim; ++r) {
      const double scale = src.bn_weight(r) / std::sqrt(src.bn_var(r) + src.epsilon);
      const double shift = src.bn_bias(r) - src.bn_mean(r) * scale;
      dst.bias[r] = quantize_raw(src.bias(r), fmt_, &param_stats_);
      dst.scale[r] = quantize_raw(scale, fmt_, &param_stats_);
      dst.shift[r] = quantize_raw(shift, fmt_, &param_stats_);
    }
  }
}

void QuantizedPointNet::local_feature_raw(const std::array<std::int64_t, 3>& point,
                                          std::vector<std::int64_t>& out,
                                          SaturationStats& stats) const {
  const int f = fmt_.fraction_bits();
  thread_local std::vector<std::int64_t> a;
  thread_local std::vector<std::int64_t> b;
  a.assign(point.begin(), point.end());

  for (std::size_t li = 0; li < kNumLayers; ++li) {
    const Layer& layer = layers_[li];
    b.resize(layer.out_dim);
    const std::int64_t* w = layer.weight.data();
    for (int r = 0; r < layer.out_dim; ++r, w += layer.in_dim) {
      std::int64_t y = 0;
      if (mode_ == AccumulationMode::per_output) {
        Wide acc = static_cast<Wide>(layer.bias[r]) << f;
        for (int c = 0; c < layer.in_dim; ++c) {
          acc = clamp_acc(acc + static_cast<Wide>(w[c]) * a[c], fmt_, stats);
        }
        y = narrow(round_shift_even(acc, f), fmt_, stats);
      } else {
        y = layer.bias[r];
        for (int c = 0; c < layer.in_dim; ++c) {
          const auto prod = narrow(round_shift_even(static_cast<Wide>(w[c]) * a[c], f), fmt_, stats);
          y = sat_add(y, prod, fmt_, stats);
        }
      }

      // BN-ReLU with folded (scale, shift).
      std::int64_t z = 0;
      if (mode_ == AccumulationMode::per_output) {
        const Wide acc = static_cast<Wide>(layer.scale[r]) * y + (static_cast<Wide>(layer.shift[r]) << f);
        z = narrow(round_shift_even(acc, f), fmt_, stats);
      } else {
        const auto prod = narrow(round_shift_even(static_cast<Wide>(layer.scale[r]) * y, f), fmt_, stats);
        z = sat_add(prod, layer.shift[r], fmt_, stats);
      }
      b[r] = std::max<std::int64_t>(z, 0);
    }
    std::swap(a, b);
  }
  out.assign(a.begin(), a.end());
}

QuantizedPointNet::Result QuantizedPointNet::global_feature(const PointCloud& cloud) const {
  Result res;
  res.raw.assign(kFeatureDim, 0);
  std::vector<std::int64_t> psi;
  psi.reserve(kFeatureDim);
  for (const auto& p : cloud) {
    const std::array<std::int64_t, 3> q{quantize_raw(p.x(), fmt_, &res.stats),
                                        quantize_raw(p.y(), fmt_, &res.stats),
                                        quantize_raw(p.z(), fmt_, &res.stats)};
    local_feature_raw(q, psi, res.stats);
    for (int i = 0; i < kFeatureDim; ++i) res.raw[i] = std::max(res.raw[i], psi[i]);
  }
  res.feature.resize(kFeatureDim);
  for (int i = 0; i < kFeatureDim; ++i) res.feature(i) = dequantize({res.raw[i], fmt_});
  return res;
}

QuantizedFeature quantized_global_feature(const PointNetParams& params, const PointCloud& cloud,
                                          QFormat fmt, AccumulationMode mode) {
  const QuantizedPointNet net(params, fmt, mode);
  auto r = net.global_feature(cloud);
  QuantizedFeature out{std::move(r.feature), std::move(r.raw), r.stats};
  out.stats += net.parameter_stats();
  return out;
}

}  // namespace pnlk
