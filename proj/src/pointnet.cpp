#include "pnlk/pointnet.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pnlk/error.hpp"

namespace pnlk {

namespace {

void check_length(const char* what, Eigen::Index got, Eigen::Index want) {
  if (got != want) {
    throw InvalidArgument(std::string(what) + ": expected length " + std::to_string(want) +
                          ", got " + std::to_string(got));
  }
}

void fc_into(const LayerParams& p, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
  y.noalias() = p.weight * x;
  y += p.bias;
}

void bn_relu_inplace(const LayerParams& p, Eigen::VectorXd& x) {
  x = (((x - p.bn_mean).array() / (p.bn_var.array() + p.epsilon).sqrt()) * p.bn_weight.array() +
       p.bn_bias.array())
          .cwiseMax(0.0)
          .matrix();
}

// Per-point scratch: one activation buffer per layer. Sized by the layer
// widths only.
struct Workspace {
  Eigen::VectorXd input{3};
  std::array<Eigen::VectorXd, kNumLayers> act;

  Workspace() {
    for (std::size_t i = 0; i < kNumLayers; ++i) act[i].resize(kLayerWidths[i + 1]);
  }

  const Eigen::VectorXd& forward(const PointNetParams& params, const Vec3& p) {
    input = p;
    const Eigen::VectorXd* x = &input;
    for (std::size_t i = 0; i < kNumLayers; ++i) {
      fc_into(params.layer(i), *x, act[i]);
      bn_relu_inplace(params.layer(i), act[i]);
      x = &act[i];
    }
    return *x;
  }
};

}  // namespace

LayerParams LayerParams::zeros(int in_dim, int out_dim, double epsilon) {
  LayerParams p;
  p.weight = Eigen::MatrixXd::Zero(out_dim, in_dim);
  p.bias = Eigen::VectorXd::Zero(out_dim);
  p.bn_weight = Eigen::VectorXd::Ones(out_dim);
  p.bn_bias = Eigen::VectorXd::Zero(out_dim);
  p.bn_mean = Eigen::VectorXd::Zero(out_dim);
  p.bn_var = Eigen::VectorXd::Constant(out_dim, 1.0 - epsilon);
  p.epsilon = epsilon;
  return p;
}

void LayerParams::validate() const {
  const auto l = weight.rows();
  if (bias.size() != l || bn_weight.size() != l || bn_bias.size() != l || bn_mean.size() != l ||
      bn_var.size() != l) {
    throw InvalidArgument("layer parameter vectors disagree with weight rows");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("BN epsilon must be > 0");
  if ((bn_var.array() < 0.0).any()) throw InvalidArgument("BN variance must be non-negative");
  if (!weight.allFinite() || !bias.allFinite() || !bn_weight.allFinite() || !bn_bias.allFinite() ||
      !bn_mean.allFinite() || !bn_var.allFinite()) {
    throw InvalidArgument("layer parameters must be finite");
  }
}

PointNetParams::PointNetParams(std::array<LayerParams, kNumLayers> layers)
    : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < kNumLayers; ++i) {
    const auto& l = layers_[i];
    if (l.in_dim() != kLayerWidths[i] || l.out_dim() != kLayerWidths[i + 1]) {
      throw InvalidArgument("layer " + std::to_string(i) + " is FC(" + std::to_string(l.in_dim()) +
                            "," + std::to_string(l.out_dim()) + "), expected FC(" +
                            std::to_string(kLayerWidths[i]) + "," +
                            std::to_string(kLayerWidths[i + 1]) + ")");
    }
    l.validate();
  }
}

Eigen::VectorXd fc_forward(const LayerParams& params, const Eigen::VectorXd& x) {
  check_length("fc_forward", x.size(), params.weight.cols());
  Eigen::VectorXd y(params.weight.rows());
  fc_into(params, x, y);
  return y;
}

Eigen::VectorXd bn_relu_forward(const LayerParams& params, const Eigen::VectorXd& x) {
  check_length("bn_relu_forward", x.size(), params.bn_mean.size());
  Eigen::VectorXd y = x;
  bn_relu_inplace(params, y);
  return y;
}

void maxpool_update(GlobalFeature& phi, const Eigen::VectorXd& psi) {
  check_length("maxpool_update", psi.size(), phi.size());
  phi = phi.cwiseMax(psi);
}

GlobalFeature maxpool_update(const GlobalFeature& phi, const Eigen::VectorXd& psi) {
  GlobalFeature out = phi;
  maxpool_update(out, psi);
  return out;
}

Eigen::VectorXd local_feature(const PointNetParams& params, const Vec3& p) {
  Workspace ws;
  return ws.forward(params, p);
}

GlobalFeature global_feature(const PointNetParams& params, const PointCloud& cloud,
                             PoolInit init) {
  Workspace ws;
  GlobalFeature phi = init == PoolInit::zeros
                          ? GlobalFeature::Zero(kFeatureDim)
                          : GlobalFeature::Constant(kFeatureDim,
                                                    -std::numeric_limits<double>::infinity());
  for (const auto& p : cloud) phi = phi.cwiseMax(ws.forward(params, p));
  return phi;
}

}  // namespace pnlk
