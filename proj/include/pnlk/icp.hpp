#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pnlk/geometry.hpp"

namespace pnlk {

struct Neighbor {
  std::size_t index = 0;
  double squared_distance = 0.0;
};

/// Exhaustive O(N*M) scan; ties resolve to the lowest template index.
std::vector<Neighbor> nearest_neighbors(const PointCloud& source, const PointCloud& templ);

/// Least-squares rigid transform taking src[i] onto dst[i] (Kabsch with
/// reflection guard). Throws RankDeficient for fewer than three points or
/// a collinear source set.
RigidTransform best_fit_transform(std::span<const Vec3> src, std::span<const Vec3> dst);

struct IcpConfig {
  int max_iterations = 20;
  /// Stop once successive correspondence MSEs differ by less than this.
  double mse_change_tol = 1e-8;

  void validate() const;
};

struct IcpTimings {
  double nn_s = 0.0;
  double fit_s = 0.0;
  double transform_s = 0.0;
  double total_s = 0.0;
};

struct IcpResult {
  RigidTransform transform;  // maps the source onto the template
  int iterations_used = 0;
  std::vector<double> mse_history;  // correspondence MSE at the start of each iteration
  bool converged = false;
  IcpTimings timings;
};

/// Point-to-point ICP with brute-force correspondences.
IcpResult icp_register(const PointCloud& templ, const PointCloud& source, const IcpConfig& cfg = {});

}  // namespace pnlk
