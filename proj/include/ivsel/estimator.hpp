#pragma once

// Sensitivity-indexed estimator of the complier effect from the two matched
// cells, with nonparametric bootstrap standard errors and Wald-type tests.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ivsel/error.hpp"
#include "ivsel/numeric.hpp"
#include "ivsel/parallel.hpp"
#include "ivsel/rng.hpp"
#include "ivsel/weights.hpp"

namespace ivsel {

/// Outcomes of the matched cells: y_A from (Z=A, D=A), y_B from (Z=B, D=B).
struct ArmSample {
  std::vector<double> y_A;
  std::vector<double> y_B;

  void validate() const {
    if (y_A.empty()) throw ValidationError("arm A sample is empty", "empty_arm");
    if (y_B.empty()) throw ValidationError("arm B sample is empty", "empty_arm");
    for (const auto* arm : {&y_A, &y_B})
      for (double v : *arm)
        if (!std::isfinite(v)) throw ValidationError("non-finite outcome in arm sample", "non_finite");
  }
};

struct EstimateResult {
  double theta_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool reject_null = false;
  double level = 0.05;
};

struct WaldResult {
  bool reject = false;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

inline constexpr std::size_t default_bootstrap_replicates = 500;

namespace detail {

inline double mean(std::span<const double> y) {
  double s = 0.0;
  for (double v : y) s += v;
  return s / static_cast<double>(y.size());
}

// Complier mean of one arm: sum(y * w(y)) / (gamma * n).
inline double complier_mean(std::span<const double> y, double gamma, double alpha1, Arm arm) {
  // A flat or saturated selection model gives constant weights equal to
  // gamma, so the weighted mean is the plain mean.
  if (alpha1 == 0.0 || gamma == 1.0) return mean(y);
  const SelectionModel model = calibrated_model(y, alpha1, gamma, arm);
  double s = 0.0;
  for (double v : y) s += v * selection_weight(v, model);
  return s / (gamma * static_cast<double>(y.size()));
}

inline double theta_unchecked(std::span<const double> y_A, std::span<const double> y_B,
                              const SensitivityParams& p) {
  return complier_mean(y_A, p.gamma_A, p.alpha1_A, Arm::A) -
         complier_mean(y_B, p.gamma_B, p.alpha1_B, Arm::B);
}

inline double sample_sd(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

}  // namespace detail

inline double estimate_theta(const ArmSample& sample, const SensitivityParams& params) {
  sample.validate();
  params.validate();
  return detail::theta_unchecked(sample.y_A, sample.y_B, params);
}

/// Bootstrap replicates of theta-hat. Replicate b draws from its own stream
/// derived from (seed, b), so the result is independent of `jobs`.
inline std::vector<double> bootstrap_replicates(const ArmSample& sample,
                                                const SensitivityParams& params,
                                                std::size_t n_boot, std::uint64_t seed,
                                                unsigned jobs = 1) {
  sample.validate();
  params.validate();
  if (n_boot < 2) throw ValidationError("need at least 2 bootstrap replicates", "invalid_boot");
  constexpr int max_attempts = 10;
  std::vector<double> out(n_boot);
  parallel_for(n_boot, jobs, [&](std::size_t b) {
    Engine eng = make_engine(derive_seed(seed, StreamPurpose::bootstrap, b));
    std::vector<double> ra(sample.y_A.size()), rb(sample.y_B.size());
    std::uniform_int_distribution<std::size_t> pick_a(0, ra.size() - 1), pick_b(0, rb.size() - 1);
    for (int attempt = 1;; ++attempt) {
      for (double& v : ra) v = sample.y_A[pick_a(eng)];
      for (double& v : rb) v = sample.y_B[pick_b(eng)];
      try {
        out[b] = detail::theta_unchecked(ra, rb, params);
        return;
      } catch (const NumericalError&) {
        if (attempt == max_attempts)
          throw NumericalError("bootstrap replicate " + std::to_string(b) +
                                   " failed calibration " + std::to_string(max_attempts) +
                                   " times",
                               "bootstrap_failure");
      }
    }
  });
  return out;
}

inline double bootstrap_se(const ArmSample& sample, const SensitivityParams& params,
                           std::size_t n_boot, std::uint64_t seed, unsigned jobs = 1) {
  const auto reps = bootstrap_replicates(sample, params, n_boot, seed, jobs);
  return detail::sample_sd(reps);
}

inline void check_level(double level) {
  if (!(level > 0.0 && level < 1.0))
    throw ValidationError("test level must lie in (0, 1)", "invalid_level");
}

/// Equal-tailed percentile interval of bootstrap replicates, with linear
/// interpolation between order statistics.
inline std::pair<double, double> percentile_interval(std::vector<double> reps, double level) {
  check_level(level);
  if (reps.empty()) throw ValidationError("no bootstrap replicates", "invalid_boot");
  std::sort(reps.begin(), reps.end());
  auto quantile = [&](double q) {
    const double h = q * static_cast<double>(reps.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(h));
    if (i + 1 >= reps.size()) return reps.back();
    return reps[i] + (h - static_cast<double>(i)) * (reps[i + 1] - reps[i]);
  };
  return {quantile(level / 2.0), quantile(1.0 - level / 2.0)};
}

/// Two-sided normal-reference test of theta = null_value.
inline WaldResult wald_test(double theta_hat, double se, double null_value, double level) {
  check_level(level);
  if (!(se >= 0.0) || (se == 0.0 && theta_hat != null_value))
    throw ValidationError("standard error must be positive", "invalid_se");
  const double z = numeric::normal_quantile(1.0 - level / 2.0);
  return {std::abs(theta_hat - null_value) > z * se, theta_hat - z * se, theta_hat + z * se};
}

/// One-sided test of theta = null_value against the alternative on the side
/// given by the sign of `direction`.
inline bool one_sided_reject(double theta_hat, double se, double null_value, double level,
                             double direction) {
  check_level(level);
  if (!(se >= 0.0) || (se == 0.0 && theta_hat != null_value))
    throw ValidationError("standard error must be positive", "invalid_se");
  if (se == 0.0) return false;
  const double z = numeric::normal_quantile(1.0 - level);
  const double sign = direction >= 0.0 ? 1.0 : -1.0;
  return sign * (theta_hat - null_value) > z * se;
}

inline EstimateResult estimate(const ArmSample& sample, const SensitivityParams& params,
                               std::size_t n_boot, std::uint64_t seed, double level = 0.05,
                               unsigned jobs = 1) {
  check_level(level);
  EstimateResult r;
  r.level = level;
  r.theta_hat = estimate_theta(sample, params);
  r.se = bootstrap_se(sample, params, n_boot, seed, jobs);
  if (r.se == 0.0) {
    r.ci_lo = r.ci_hi = r.theta_hat;
    r.reject_null = r.theta_hat != 0.0;
    return r;
  }
  const WaldResult w = wald_test(r.theta_hat, r.se, 0.0, level);
  r.ci_lo = w.ci_lo;
  r.ci_hi = w.ci_hi;
  r.reject_null = w.reject;
  return r;
}

struct SweepGrid {
  std::vector<double> gamma_A_values;
  std::vector<double> gamma_B_values;
  std::vector<double> alpha1_A_values;
  std::vector<double> alpha1_B_values;
  bool fixed_gammas = false;

  void validate() const {
    for (const auto* axis : {&gamma_A_values, &gamma_B_values, &alpha1_A_values, &alpha1_B_values})
      if (axis->empty()) throw ValidationError("sweep grid axis is empty", "invalid_grid");
    for (const auto* axis : {&gamma_A_values, &gamma_B_values})
      for (double g : *axis)
        if (!(g > 0.0 && g <= 1.0))
          throw ValidationError("complier shares on the grid must lie in (0, 1]", "invalid_grid");
    for (const auto* axis : {&alpha1_A_values, &alpha1_B_values})
      for (double a : *axis)
        if (!std::isfinite(a)) throw ValidationError("non-finite slope on the grid", "invalid_grid");
  }

  std::size_t size() const {
    return gamma_A_values.size() * gamma_B_values.size() * alpha1_A_values.size() *
           alpha1_B_values.size();
  }

  /// Parameters at flat index i; the last axis (alpha1_B) varies fastest.
  SensitivityParams at(std::size_t i) const {
    SensitivityParams p;
    p.alpha1_B = alpha1_B_values[i % alpha1_B_values.size()];
    i /= alpha1_B_values.size();
    p.alpha1_A = alpha1_A_values[i % alpha1_A_values.size()];
    i /= alpha1_A_values.size();
    p.gamma_B = gamma_B_values[i % gamma_B_values.size()];
    i /= gamma_B_values.size();
    p.gamma_A = gamma_A_values[i];
    return p;
  }
};

struct SweepRow {
  SensitivityParams params;
  double theta_hat = std::nan("");
  double se = std::nan("");
  double ci_lo = std::nan("");
  double ci_hi = std::nan("");
  std::string status = "ok";
};

/// Seed used for the bootstrap at flat grid index `index`.
inline std::uint64_t sweep_point_seed(std::uint64_t seed, std::size_t index) {
  return derive_seed(seed, StreamPurpose::sweep_point, index);
}

inline std::vector<SweepRow> sweep(const ArmSample& sample, const SweepGrid& grid,
                                   std::size_t n_boot, std::uint64_t seed, double level = 0.05,
                                   unsigned jobs = 1) {
  sample.validate();
  grid.validate();
  check_level(level);
  std::vector<SweepRow> rows(grid.size());
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    SweepRow& row = rows[i];
    row.params = grid.at(i);
    try {
      const EstimateResult r = estimate(sample, row.params, n_boot, sweep_point_seed(seed, i), level);
      row.theta_hat = r.theta_hat;
      row.se = r.se;
      row.ci_lo = r.ci_lo;
      row.ci_hi = r.ci_hi;
    } catch (const Error& e) {
      row.status = e.kind();
    }
  });
  return rows;
}

}  // namespace ivsel
