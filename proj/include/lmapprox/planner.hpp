#pragma once

// Choosing the number of Monte-Carlo samples N.
//
// Analytic route: with X_v the sample mean of N Bernoulli(p_v) indicators,
// Hoeffding gives Pr(|X_v - p_v| > gamma) < 2 exp(-2 N gamma^2); a union bound
// over the vocabulary keeps Pr(||X - p||_inf > gamma) below epsilon whenever
//   N > ln(2 |V| / epsilon) / (2 gamma^2).
//
// Empirical route: pick the smallest N on the alpha grid for which the mean
// (over evaluation positions) of ||G_{N-alpha} - G_N||_inf drops below gamma'.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "lmapprox/approximator.hpp"
#include "lmapprox/parallel.hpp"
#include "lmapprox/seeding.hpp"

namespace lmapprox {

struct BoundQuery {
  double gamma = 1e-3;
  double epsilon = 1e-2;
  std::size_t vocab_size = 27;
};

inline void validate(const BoundQuery& q) {
  if (!(q.gamma > 0.0 && q.gamma < 1.0)) {
    throw Error(ErrorKind::InvalidBoundQuery, "gamma must lie in (0,1), got " + std::to_string(q.gamma));
  }
  if (!(q.epsilon > 0.0 && q.epsilon < 1.0)) {
    throw Error(ErrorKind::InvalidBoundQuery, "epsilon must lie in (0,1), got " + std::to_string(q.epsilon));
  }
  if (q.vocab_size < 2) {
    throw Error(ErrorKind::InvalidBoundQuery, "vocab_size must be at least 2");
  }
}

/// Smallest integer N strictly greater than ln(2|V|/epsilon) / (2 gamma^2),
/// and at least 1.
inline std::int64_t hoeffding_bound_n(const BoundQuery& q) {
  validate(q);
  const double threshold =
      std::log(2.0 * static_cast<double>(q.vocab_size) / q.epsilon) / (2.0 * q.gamma * q.gamma);
  if (threshold < 1.0) return 1;
  return static_cast<std::int64_t>(std::floor(threshold)) + 1;
}

/// Per-coordinate tail bound 2 exp(-2 n gamma^2). Multiply by |V| for the
/// union bound over the vocabulary.
inline double hoeffding_violation_probability(double gamma, std::int64_t n) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw Error(ErrorKind::InvalidBoundQuery, "gamma must lie in (0,1), got " + std::to_string(gamma));
  }
  if (n < 1) throw Error(ErrorKind::InvalidBoundQuery, "n must be at least 1");
  return 2.0 * std::exp(-2.0 * static_cast<double>(n) * gamma * gamma);
}

enum class PlanStatus { Converged, NotConverged };

inline std::string_view to_string(PlanStatus s) {
  return s == PlanStatus::Converged ? "converged" : "not_converged";
}

struct EmpiricalPlan {
  std::int64_t alpha = 10;
  double gamma_prime = 1e-3;
  std::int64_t n_max = 100'000;
  std::size_t subset_size = 64;
  std::optional<std::int64_t> chosen_n;
  PlanStatus status = PlanStatus::NotConverged;
  /// Per-N error averaged over the positions.
  ConvergenceCurve curve;
};

/// Runs one convergence curve per position (position p uses
/// position_seed(seed, p.index)), averages the errors pointwise and records
/// the first N whose averaged error is below gamma'. Not reaching the
/// threshold is reported through `status`, not thrown.
inline EmpiricalPlan select_n_empirical(const Generator& gen, const std::vector<EvalPosition>& positions,
                                        EmpiricalPlan plan, std::uint64_t seed, std::size_t workers = 1) {
  if (positions.empty()) throw Error(ErrorKind::NoPositions, "no positions to average over");
  if (plan.alpha < 1) throw Error(ErrorKind::InvalidArgument, "alpha must be at least 1");
  if (!(plan.gamma_prime > 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma_prime must be positive");
  if (plan.n_max < 2 * plan.alpha) throw Error(ErrorKind::InvalidArgument, "n_max must be at least 2 * alpha");

  std::vector<ConvergenceCurve> curves(positions.size());
  detail::parallel_for(positions.size(), gen.concurrent_sampling() ? workers : 1, [&](std::size_t i) {
    const auto& p = positions[i];
    curves[i] = approximate_curve(gen, p.prefix, plan.n_max, plan.alpha, position_seed(seed, p.index), p.index);
  });

  ConvergenceCurve averaged;
  averaged.alpha = plan.alpha;
  averaged.points = curves.front().points;
  for (std::size_t k = 0; k < averaged.points.size(); ++k) {
    double sum = 0.0;
    for (const auto& c : curves) sum += c.points[k].error;
    averaged.points[k].error = sum / static_cast<double>(curves.size());
  }

  plan.chosen_n.reset();
  plan.status = PlanStatus::NotConverged;
  for (const auto& pt : averaged.points) {
    if (pt.error < plan.gamma_prime) {
      plan.chosen_n = pt.n;
      plan.status = PlanStatus::Converged;
      break;
    }
  }
  plan.curve = std::move(averaged);
  return plan;
}

/// `n,error` rows; with a threshold, a constant `gamma_prime` column is added
/// so plots can draw the stopping line.
inline std::string curve_to_csv(const ConvergenceCurve& curve, std::optional<double> gamma_prime = std::nullopt) {
  std::string out = gamma_prime ? "n,error,gamma_prime\n" : "n,error\n";
  char buf[96];
  for (const auto& pt : curve.points) {
    if (gamma_prime) {
      std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g\n", static_cast<long long>(pt.n), pt.error, *gamma_prime);
    } else {
      std::snprintf(buf, sizeof buf, "%lld,%.17g\n", static_cast<long long>(pt.n), pt.error);
    }
    out += buf;
  }
  return out;
}

}  // namespace lmapprox
