#include "pnlk/icp.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "pnlk/error.hpp"

namespace pnlk {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Template coordinates in structure-of-arrays form for the inner scan.
struct SoA {
  std::vector<double> x, y, z;
  explicit SoA(const PointCloud& c) {
    x.reserve(c.size());
    y.reserve(c.size());
    z.reserve(c.size());
    for (const auto& p : c) {
      x.push_back(p.x());
      y.push_back(p.y());
      z.push_back(p.z());
    }
  }
};

Neighbor scan(const SoA& t, const Vec3& p) {
  Neighbor best{0, std::numeric_limits<double>::infinity()};
  const std::size_t n = t.x.size();
  for (std::size_t j = 0; j < n; ++j) {
    const double dx = t.x[j] - p.x();
    const double dy = t.y[j] - p.y();
    const double dz = t.z[j] - p.z();
    const double d = dx * dx + dy * dy + dz * dz;
    if (d < best.squared_distance) best = {j, d};
  }
  return best;
}

}  // namespace

void IcpConfig::validate() const {
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
  if (!(mse_change_tol >= 0.0)) throw InvalidArgument("mse_change_tol must be >= 0");
}

std::vector<Neighbor> nearest_neighbors(const PointCloud& source, const PointCloud& templ) {
  const SoA t(templ);
  std::vector<Neighbor> out;
  out.reserve(source.size());
  for (const auto& p : source) out.push_back(scan(t, p));
  return out;
}

RigidTransform best_fit_transform(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw InvalidArgument("best_fit_transform: pair lists differ in length");
  if (src.size() < 3) throw RankDeficient("best_fit_transform: need at least 3 pairs");

  const double n = static_cast<double>(src.size());
  Vec3 cs = Vec3::Zero();
  Vec3 cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= n;
  cd /= n;

  Mat3 h = Mat3::Zero();
  Mat3 spread = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 a = src[i] - cs;
    h += a * (dst[i] - cd).transpose();
    spread += a * a.transpose();
  }

  // A rank < 2 spread means the source points are collinear (or coincident)
  // and the rotation about that line is unconstrained.
  Eigen::SelfAdjointEigenSolver<Mat3> es(spread, Eigen::EigenvaluesOnly);
  const auto ev = es.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= 1e-12 * ev(2)) {
    throw RankDeficient("best_fit_transform: source points are collinear or coincident");
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return project_to_rigid(r, cd - r * cs);
}

IcpResult icp_register(const PointCloud& templ, const PointCloud& source, const IcpConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  IcpResult res;
  const SoA t(templ);

  std::vector<Vec3> current = source.points();
  std::vector<Vec3> matched(current.size());
  RigidTransform g;
  double prev_mse = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    auto t0 = Clock::now();
    double sum = 0.0;
    for (std::size_t i = 0; i < current.size(); ++i) {
      const Neighbor nb = scan(t, current[i]);
      matched[i] = templ[nb.index];
      sum += nb.squared_distance;
    }
    const double mse = sum / static_cast<double>(current.size());
    res.mse_history.push_back(mse);
    res.timings.nn_s += seconds_since(t0);

    t0 = Clock::now();
    RigidTransform step;
    try {
      step = best_fit_transform(current, matched);
    } catch (const RankDeficient& e) {
      throw RegistrationFailure(std::string("ICP correspondence set is degenerate: ") + e.what(), it);
    }
    res.timings.fit_s += seconds_since(t0);

    t0 = Clock::now();
    for (auto& p : current) p = step * p;
    g = compose(step, g);
    res.timings.transform_s += seconds_since(t0);

    res.iterations_used = it;
    if (mse <= cfg.mse_change_tol || std::abs(prev_mse - mse) < cfg.mse_change_tol) {
      res.converged = true;
      break;
    }
    prev_mse = mse;
  }
  res.transform = g;
  res.timings.total_s = seconds_since(start);
  return res;
}

}  // namespace pnlk
