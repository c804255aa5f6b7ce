#include "pnlk/lk_solver.hpp"

#include <chrono>
#include <future>
#include <string>

#include <Eigen/SVD>

#include "pnlk/error.hpp"

namespace pnlk {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Wraps the user's extractor: counts calls, times them and rejects
// non-finite output.
class TimedFeature {
 public:
  TimedFeature(const FeatureFn& fn, PhaseTimings& timings) : fn_(fn), timings_(timings) {}

  Eigen::VectorXd operator()(const PointCloud& cloud, int iteration) {
    const auto start = Clock::now();
    Eigen::VectorXd f = fn_(cloud);
    timings_.feature_s += seconds_since(start);
    ++calls_;
    check(f, iteration);
    return f;
  }

  static void check(const Eigen::VectorXd& f, int iteration) {
    if (f.size() == 0 || !f.allFinite()) {
      throw RegistrationFailure("feature extractor returned a non-finite feature", iteration);
    }
  }

  // Thread-safe: no bookkeeping. The caller accounts for calls and time.
  Eigen::VectorXd untimed(const PointCloud& cloud) const { return fn_(cloud); }

  int calls() const { return calls_; }
  void add_calls(int n) { calls_ += n; }

 private:
  const FeatureFn& fn_;
  PhaseTimings& timings_;
  int calls_ = 0;
};

Jacobian jacobian_impl(TimedFeature& feature, const PointCloud& templ, const LkConfig& cfg,
                       PhaseTimings& timings) {
  const auto start = Clock::now();
  const double feature_before = timings.feature_s;

  Jacobian jac;
  jac.base_feature = feature(templ, 0);
  const auto k = jac.base_feature.size();
  jac.matrix.resize(k, 6);
  jac.degenerate = (jac.base_feature.array() == 0.0).all();

  const bool central = cfg.scheme == DifferenceScheme::central;
  auto perturbed = [&](int i, double sign) {
    return apply(exp_se3(Twist::basis(i, -sign * cfg.perturbation[i])), templ);
  };

  if (cfg.parallel_jacobian) {
    // Feature time is attributed as wall time of the parallel section.
    std::array<std::future<Eigen::VectorXd>, 6> plus;
    std::array<std::future<Eigen::VectorXd>, 6> minus;
    const auto fstart = Clock::now();
    for (int i = 0; i < 6; ++i) {
      plus[i] = std::async(std::launch::async, [&, i] { return feature.untimed(perturbed(i, 1.0)); });
      if (central) {
        minus[i] =
            std::async(std::launch::async, [&, i] { return feature.untimed(perturbed(i, -1.0)); });
      }
    }
    for (int i = 0; i < 6; ++i) {
      const Eigen::VectorXd fp = plus[i].get();
      TimedFeature::check(fp, 0);
      if (fp.size() != k) throw RegistrationFailure("feature dimension changed", 0);
      if (central) {
        const Eigen::VectorXd fm = minus[i].get();
        TimedFeature::check(fm, 0);
        jac.matrix.col(i) = (fp - fm) / (2.0 * cfg.perturbation[i]);
      } else {
        jac.matrix.col(i) = (fp - jac.base_feature) / cfg.perturbation[i];
      }
    }
    timings.feature_s += seconds_since(fstart);
    feature.add_calls(central ? 12 : 6);
  } else {
    for (int i = 0; i < 6; ++i) {
      const Eigen::VectorXd fp = feature(perturbed(i, 1.0), 0);
      if (fp.size() != k) throw RegistrationFailure("feature dimension changed", 0);
      if (central) {
        const Eigen::VectorXd fm = feature(perturbed(i, -1.0), 0);
        jac.matrix.col(i) = (fp - fm) / (2.0 * cfg.perturbation[i]);
      } else {
        jac.matrix.col(i) = (fp - jac.base_feature) / cfg.perturbation[i];
      }
    }
  }
  jac.feature_calls = feature.calls();
  timings.jacobian_s += seconds_since(start) - (timings.feature_s - feature_before);
  return jac;
}

}  // namespace

void LkConfig::validate() const {
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be >= 1");
  for (double t : perturbation) {
    if (!(t > 0.0)) throw InvalidArgument("perturbation steps must be > 0");
  }
  if (!(convergence_tol >= 0.0)) throw InvalidArgument("convergence_tol must be >= 0");
  if (!(svd_cutoff >= 0.0)) throw InvalidArgument("svd_cutoff must be >= 0");
}

PseudoInverse::PseudoInverse(const Eigen::MatrixXd& j, double cutoff) {
  if (j.cols() != 6) throw InvalidArgument("Jacobian must have 6 columns");
  if (!j.allFinite()) throw InvalidArgument("Jacobian has non-finite entries");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  rank_ = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (smax > 0.0 && s(i) > cutoff * smax) {
      inv(i) = 1.0 / s(i);
      ++rank_;
    }
  }
  pinv_ = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

Twist PseudoInverse::solve(const Eigen::VectorXd& r) const {
  if (r.size() != pinv_.cols()) throw InvalidArgument("residual length does not match Jacobian rows");
  return Twist(Vector6(pinv_ * r));
}

TwistSolution solve_twist(const Eigen::MatrixXd& j, const Eigen::VectorXd& r, double cutoff) {
  const PseudoInverse pinv(j, cutoff);
  return {pinv.solve(r), pinv.rank(), pinv.rank_deficient()};
}

Jacobian compute_jacobian(const FeatureFn& feature, const PointCloud& templ, const LkConfig& cfg) {
  cfg.validate();
  PhaseTimings timings;
  TimedFeature timed(feature, timings);
  return jacobian_impl(timed, templ, cfg, timings);
}

LkResult lk_register(const PointCloud& templ, const PointCloud& source, const FeatureFn& feature,
                     const LkConfig& cfg) {
  cfg.validate();
  const auto start = Clock::now();
  LkResult res;
  TimedFeature timed(feature, res.timings);

  const Jacobian jac = jacobian_impl(timed, templ, cfg, res.timings);
  res.degenerate_jacobian = jac.degenerate;

  auto t0 = Clock::now();
  const PseudoInverse pinv(jac.matrix, cfg.svd_cutoff);
  res.rank_deficient = pinv.rank_deficient();
  res.timings.solve_s += seconds_since(t0);

  PointCloud current = source;
  RigidTransform g;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Eigen::VectorXd f = timed(current, it);
    if (f.size() != jac.base_feature.size()) throw RegistrationFailure("feature dimension changed", it);

    t0 = Clock::now();
    const Eigen::VectorXd r = f - jac.base_feature;
    res.residual_history.push_back(r.norm());
    const Twist xi = pinv.solve(r);
    res.timings.solve_s += seconds_since(t0);

    t0 = Clock::now();
    const RigidTransform dg = exp_se3(xi);
    current = apply(dg, current);
    g = compose(dg, g);
    res.timings.transform_s += seconds_since(t0);

    res.iterations_used = it;
    if (xi.norm() < cfg.convergence_tol) {
      res.converged = true;
      break;
    }
  }
  res.transform = g;
  res.feature_calls = timed.calls();
  res.timings.total_s = seconds_since(start);
  return res;
}

}  // namespace pnlk
