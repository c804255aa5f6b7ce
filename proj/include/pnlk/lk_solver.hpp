#pragma once

#include <array>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "pnlk/geometry.hpp"

namespace pnlk {

/// Any cloud -> K-d descriptor map: float PointNet, quantized PointNet, or
/// a test stub.
using FeatureFn = std::function<Eigen::VectorXd(const PointCloud&)>;

enum class DifferenceScheme { forward, central };

struct LkConfig {
  int max_iterations = 20;
  /// Finite-difference step per twist direction.
  std::array<double, 6> perturbation{1e-2, 1e-2, 1e-2, 1e-2, 1e-2, 1e-2};
  /// Stop once |xi| drops below this.
  double convergence_tol = 1e-7;
  DifferenceScheme scheme = DifferenceScheme::forward;
  /// Singular values below cutoff * sigma_max are treated as zero.
  double svd_cutoff = 1e-10;
  /// Evaluate the six perturbed features on separate threads.
  bool parallel_jacobian = false;

  void validate() const;
};

struct Jacobian {
  Eigen::MatrixXd matrix;        // K x 6
  Eigen::VectorXd base_feature;  // phi(template)
  /// Template feature was all zeros; the Jacobian carries no information.
  bool degenerate = false;
  int feature_calls = 0;
};

/// Column i = (phi(exp(-t_i e_i) . T) - phi(T)) / t_i, or the central
/// variant when configured.
Jacobian compute_jacobian(const FeatureFn& feature, const PointCloud& templ, const LkConfig& cfg);

/// Moore-Penrose pseudo-inverse through an SVD with a relative cutoff.
class PseudoInverse {
 public:
  explicit PseudoInverse(const Eigen::MatrixXd& j, double cutoff = 1e-10);

  Twist solve(const Eigen::VectorXd& r) const;
  int rank() const { return rank_; }
  bool rank_deficient() const { return rank_ < 6; }
  const Eigen::MatrixXd& matrix() const { return pinv_; }

 private:
  Eigen::MatrixXd pinv_;  // 6 x K
  int rank_ = 0;
};

struct TwistSolution {
  Twist xi;
  int rank = 0;
  bool rank_deficient = false;
};

/// Minimum-norm least-squares xi = J^+ r.
TwistSolution solve_twist(const Eigen::MatrixXd& j, const Eigen::VectorXd& r,
                          double cutoff = 1e-10);

struct PhaseTimings {
  double feature_s = 0.0;    // every feature-extractor call
  double jacobian_s = 0.0;   // perturbing clouds and differencing, excluding features
  double solve_s = 0.0;      // pseudo-inverse and twist solves
  double transform_s = 0.0;  // exp map, cloud update, pose accumulation
  double total_s = 0.0;
};

struct LkResult {
  RigidTransform transform;  // maps the source onto the template
  int iterations_used = 0;
  std::vector<double> residual_history;  // |phi(S_k) - phi(T)| per iteration
  bool converged = false;
  bool degenerate_jacobian = false;
  bool rank_deficient = false;
  int feature_calls = 0;
  PhaseTimings timings;
};

/// PointNetLK iteration: Jacobian from the template once, then
/// xi = J^+ (phi(S) - phi(T)), S <- exp(xi) S, G <- exp(xi) G until
/// |xi| < tol or the iteration cap.
LkResult lk_register(const PointCloud& templ, const PointCloud& source, const FeatureFn& feature,
                     const LkConfig& cfg = {});

}  // namespace pnlk
