#pragma once

// Reference implementations the tests compare the library against. None of
// these call into the code under test beyond plain data types.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <tuple>
#include <vector>

#include <Eigen/Core>

#include "pnlk/geometry.hpp"
#include "pnlk/pointnet.hpp"

namespace oracle {

using pnlk::PointCloud;
using pnlk::Vec3;

/// Truncated power series of the matrix exponential.
inline Eigen::Matrix4d expm_series(const Eigen::Matrix4d& a, int terms = 30) {
  Eigen::Matrix4d sum = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d term = Eigen::Matrix4d::Identity();
  for (int k = 1; k < terms; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

inline Eigen::Matrix4d hat(const pnlk::Vector6& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m(0, 1) = -xi(2);
  m(0, 2) = xi(1);
  m(1, 0) = xi(2);
  m(1, 2) = -xi(0);
  m(2, 0) = -xi(1);
  m(2, 1) = xi(0);
  m.block<3, 1>(0, 3) = xi.tail<3>();
  return m;
}

/// Whole-cloud PointNet: every layer as one N-column matrix product.
inline Eigen::VectorXd batch_global_feature(const pnlk::PointNetParams& params, const PointCloud& cloud) {
  Eigen::MatrixXd x(3, static_cast<Eigen::Index>(cloud.size()));
  for (std::size_t j = 0; j < cloud.size(); ++j) x.col(static_cast<Eigen::Index>(j)) = cloud[j];
  for (const auto& l : params.layers()) {
    Eigen::MatrixXd y = l.weight * x;
    y.colwise() += l.bias;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double s = l.bn_weight(i) / std::sqrt(l.bn_var(i) + l.epsilon);
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        y(i, j) = std::max(0.0, (y(i, j) - l.bn_mean(i)) * s + l.bn_bias(i));
      }
    }
    x = std::move(y);
  }
  Eigen::VectorXd phi = Eigen::VectorXd::Zero(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) phi = phi.cwiseMax(x.col(j));
  return phi;
}

/// Feature = centroid of the cloud (K = 3).
inline Eigen::VectorXd centroid_feature(const PointCloud& c) {
  Vec3 s = Vec3::Zero();
  for (const auto& p : c) s += p;
  return s / static_cast<double>(c.size());
}

/// d/dt centroid(exp(-t e_i) P) at t = 0: rotation columns -(e_i x c),
/// translation columns -e_i.
inline Eigen::MatrixXd centroid_jacobian(const PointCloud& c) {
  const Vec3 m = centroid_feature(c);
  Eigen::MatrixXd j(3, 6);
  for (int i = 0; i < 3; ++i) {
    const Vec3 e = Vec3::Unit(i);
    j.col(i) = -e.cross(m);
    j.col(3 + i) = -e;
  }
  return j;
}

/// Nearest neighbours through a uniform grid; searches rings of cells until
/// the best distance is provably final. Ties go to the lowest index.
inline std::vector<std::pair<std::size_t, double>> grid_nearest(const PointCloud& source, const PointCloud& templ,
                                                                double cell) {
  using Key = std::tuple<long, long, long>;
  std::map<Key, std::vector<std::size_t>> grid;
  auto key = [cell](const Vec3& p) {
    return Key{static_cast<long>(std::floor(p.x() / cell)), static_cast<long>(std::floor(p.y() / cell)),
               static_cast<long>(std::floor(p.z() / cell))};
  };
  for (std::size_t i = 0; i < templ.size(); ++i) grid[key(templ[i])].push_back(i);
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& p : source) {
    const auto [kx, ky, kz] = key(p);
    std::size_t best = 0;
    double best_d = INFINITY;
    for (long r = 0;; ++r) {
      for (long dx = -r; dx <= r; ++dx) {
        for (long dy = -r; dy <= r; ++dy) {
          for (long dz = -r; dz <= r; ++dz) {
            if (std::max({std::labs(dx), std::labs(dy), std::labs(dz)}) != r) continue;
            const auto it = grid.find(Key{kx + dx, ky + dy, kz + dz});
            if (it == grid.end()) continue;
            for (std::size_t i : it->second) {
              const Vec3 d = templ[i] - p;
              const double dd = d.x() * d.x() + d.y() * d.y() + d.z() * d.z();
              if (dd < best_d || (dd == best_d && i < best)) {
                best_d = dd;
                best = i;
              }
            }
          }
        }
      }
      // Every unvisited cell is at least r * cell away.
      if (best_d < INFINITY && std::sqrt(best_d) <= static_cast<double>(r) * cell) break;
      if (r > 1000) break;
    }
    out.emplace_back(best, best_d);
  }
  return out;
}

inline PointCloud random_points(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  return PointCloud(std::move(pts));
}

inline pnlk::Vector6 random_twist(std::mt19937_64& rng, double rot_scale = 1.0, double trans_scale = 1.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  pnlk::Vector6 xi;
  for (int i = 0; i < 3; ++i) xi(i) = rot_scale * u(rng);
  for (int i = 3; i < 6; ++i) xi(i) = trans_scale * u(rng);
  return xi;
}

}  // namespace oracle
