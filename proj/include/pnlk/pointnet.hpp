#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Core>

#include "pnlk/geometry.hpp"

namespace pnlk {

using Feature = Eigen::VectorXd;
/// 1024-d cloud descriptor produced by max-pooling point features.
using GlobalFeature = Eigen::VectorXd;

inline constexpr std::size_t kNumLayers = 5;
/// Width chain of the five FC layers: 3 -> 64 -> 64 -> 64 -> 128 -> 1024.
inline constexpr std::array<int, kNumLayers + 1> kLayerWidths{3, 64, 64, 64, 128, 1024};
inline constexpr int kFeatureDim = kLayerWidths.back();
inline constexpr double kDefaultBnEpsilon = 1e-5;

/// One FC(K, L) layer followed by a BN-ReLU(L) stage, inference statistics.
struct LayerParams {
  Eigen::MatrixXd weight;  // L x K
  Eigen::VectorXd bias;    // L
  Eigen::VectorXd bn_weight;
  Eigen::VectorXd bn_bias;
  Eigen::VectorXd bn_mean;
  Eigen::VectorXd bn_var;
  double epsilon = kDefaultBnEpsilon;

  int in_dim() const { return static_cast<int>(weight.cols()); }
  int out_dim() const { return static_cast<int>(weight.rows()); }

  /// Zero-initialised layer with collapsed BN (mean 0, var 1 - eps, w 1, b 0).
  static LayerParams zeros(int in_dim, int out_dim, double epsilon = kDefaultBnEpsilon);

  void validate() const;
  bool operator==(const LayerParams&) const = default;
};

class PointNetParams {
 public:
  explicit PointNetParams(std::array<LayerParams, kNumLayers> layers);

  const LayerParams& layer(std::size_t i) const { return layers_[i]; }
  const std::array<LayerParams, kNumLayers>& layers() const { return layers_; }

  bool operator==(const PointNetParams&) const = default;

 private:
  std::array<LayerParams, kNumLayers> layers_;
};

/// How the running max is seeded before the first point arrives.
enum class PoolInit {
  zeros,         ///< what the IP core does
  negative_inf,  ///< only differs from zeros when activations can go negative
};

/// y = W x + b
Eigen::VectorXd fc_forward(const LayerParams& params, const Eigen::VectorXd& x);

/// y_i = max(0, (x_i - mu_i) / sqrt(var_i + eps) * w_i + b_i)
Eigen::VectorXd bn_relu_forward(const LayerParams& params, const Eigen::VectorXd& x);

/// phi_i <- max(phi_i, psi_i), in place.
void maxpool_update(GlobalFeature& phi, const Eigen::VectorXd& psi);
GlobalFeature maxpool_update(const GlobalFeature& phi, const Eigen::VectorXd& psi);

Eigen::VectorXd local_feature(const PointNetParams& params, const Vec3& p);

/// Streams the cloud one point at a time through the five layers and folds
/// each local feature into the running max. Scratch storage is fixed by the
/// layer widths and does not grow with the number of points.
GlobalFeature global_feature(const PointNetParams& params, const PointCloud& cloud,
                             PoolInit init = PoolInit::zeros);

}  // namespace pnlk
