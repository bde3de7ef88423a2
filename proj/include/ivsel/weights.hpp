#pragma once

// Outcome-dependent complier selection models and their calibration.
//
// Within the matched cell (Z=A, D=A) a subject with outcome y is a complier
// with probability w_A(y) = logistic(alpha0_A + alpha1_A * y); likewise for
// arm B. The slope alpha1 is a sensitivity parameter; the intercept alpha0 is
// pinned by requiring the average weight over the cell's outcome
// distribution to equal the complier share gamma.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ivsel/error.hpp"
#include "ivsel/numeric.hpp"
#include "ivsel/types.hpp"

namespace ivsel {

struct SelectionModel {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  Arm arm = Arm::A;
};

/// The four free sensitivity parameters. Intercepts are always calibrated.
struct SensitivityParams {
  double gamma_A = 1.0;
  double gamma_B = 1.0;
  double alpha1_A = 0.0;
  double alpha1_B = 0.0;

  void validate() const {
    for (double g : {gamma_A, gamma_B})
      if (!(g > 0.0 && g <= 1.0))
        throw ValidationError("complier shares must lie in (0, 1]", "invalid_params");
    if (!std::isfinite(alpha1_A) || !std::isfinite(alpha1_B))
      throw ValidationError("selection slopes must be finite", "invalid_params");
  }
};

/// Sorted, non-empty sample of outcomes.
class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw ValidationError("empirical distribution is empty", "empty_sample");
    for (double v : values_)
      if (!std::isfinite(v)) throw ValidationError("non-finite outcome", "non_finite");
    std::sort(values_.begin(), values_.end());
  }

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

 private:
  std::vector<double> values_;
};

/// Location-scale normal outcome density.
struct NormalDensity {
  double mean = 0.0;
  double sd = 1.0;

  double pdf(double y) const { return numeric::normal_pdf(y, mean, sd); }
  double lower() const { return mean - 10.0 * sd; }
  double upper() const { return mean + 10.0 * sd; }
};

/// Anything with a pdf and a finite integration range carrying all but a
/// negligible part of its mass.
template <class D>
concept DensitySpec = requires(const D& d, double y) {
  { d.pdf(y) } -> std::convertible_to<double>;
  { d.lower() } -> std::convertible_to<double>;
  { d.upper() } -> std::convertible_to<double>;
};

inline constexpr std::size_t quadrature_panels = 4096;

inline double selection_weight(double y, const SelectionModel& model) noexcept {
  return numeric::logistic(model.alpha0 + model.alpha1 * y);
}

namespace detail {

inline void check_share(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw ValidationError("complier share must lie strictly inside (0, 1) for calibration",
                          "invalid_params");
}

// Half-width of the initial intercept bracket and its expansion limit.
inline constexpr double bracket_start = 50.0;
inline constexpr double bracket_limit = 1e4;

}  // namespace detail

/// Intercept making the sample mean of the weights equal `gamma`.
inline double calibrate_intercept(std::span<const double> values, double alpha1, double gamma) {
  detail::check_share(gamma);
  if (values.empty()) throw ValidationError("cannot calibrate on an empty sample", "empty_sample");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;

  auto fdf = [&](double a0) {
    double s = 0.0, ds = 0.0;
    for (double v : values) {
      const double p = numeric::logistic(a0 + alpha1 * v);
      s += p;
      ds += p * (1.0 - p);
    }
    return std::pair{s / n - gamma, ds / n};
  };
  const double start = numeric::logit(gamma) - alpha1 * mean;
  return numeric::solve_increasing_newton(fdf, start, -detail::bracket_start,
                                          detail::bracket_start, 1e-12, detail::bracket_limit,
                                          "selection intercept")
      .root;
}

inline double calibrate_intercept(const EmpiricalDistribution& dist, double alpha1, double gamma) {
  return calibrate_intercept(dist.values(), alpha1, gamma);
}

/// Intercept making the integral of w(y) f(y) equal `gamma` for a continuous
/// base density, by Simpson quadrature.
template <DensitySpec D>
double calibrate_intercept(const D& base, double alpha1, double gamma) {
  detail::check_share(gamma);
  const double lo = base.lower(), hi = base.upper();
  auto fdf = [&](double a0) {
    const double s = numeric::simpson(
        [&](double y) { return numeric::logistic(a0 + alpha1 * y) * base.pdf(y); }, lo, hi,
        quadrature_panels);
    const double ds = numeric::simpson(
        [&](double y) {
          const double p = numeric::logistic(a0 + alpha1 * y);
          return p * (1.0 - p) * base.pdf(y);
        },
        lo, hi, quadrature_panels);
    return std::pair{s - gamma, ds};
  };
  const double centre = 0.5 * (lo + hi);
  return numeric::solve_increasing_newton(fdf, numeric::logit(gamma) - alpha1 * centre,
                                          -detail::bracket_start, detail::bracket_start, 1e-12,
                                          detail::bracket_limit, "selection intercept")
      .root;
}

/// Mean weight of a model over a sample; the calibration target.
inline double mean_weight(std::span<const double> values, const SelectionModel& model) {
  double s = 0.0;
  for (double v : values) s += selection_weight(v, model);
  return s / static_cast<double>(values.size());
}

/// Complier outcome density w(y) f(y) / gamma.
template <DensitySpec D>
double complier_density(double y, const D& base, const SelectionModel& model, double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("complier share must be positive", "invalid_params");
  return selection_weight(y, model) * base.pdf(y) / gamma;
}

/// Integral of y^k times the complier density, k in {0, 1, 2}.
template <DensitySpec D>
double complier_moment(const D& base, const SelectionModel& model, double gamma, int order) {
  return numeric::simpson(
      [&](double y) { return std::pow(y, order) * complier_density(y, base, model, gamma); },
      base.lower(), base.upper(), quadrature_panels);
}

/// Calibrated selection model for one arm.
inline SelectionModel calibrated_model(std::span<const double> values, double alpha1, double gamma,
                                       Arm arm) {
  return {calibrate_intercept(values, alpha1, gamma), alpha1, arm};
}

}  // namespace ivsel
