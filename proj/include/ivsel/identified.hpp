#pragma once

// Estimators for the regimes in which restricting to subjects on A or B does
// not bias the IV analysis:
//   * selection independent of the instrument given confounders (no
//     S5/S6 strata): a plug-in moment estimator over the four observable
//     (Z, D) cells with D in {A, B};
//   * selection independent of unmeasured confounders given (X, Z):
//     inverse-probability-weighted two-stage least squares with a logistic
//     selection model fitted on the full data.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ivsel/error.hpp"
#include "ivsel/numeric.hpp"
#include "ivsel/types.hpp"

namespace ivsel {

struct Record {
  double y = 0.0;
  Arm z = Arm::A;
  Treatment d = Treatment::A;
  std::vector<double> x;
  int r = 1;  // 1 iff d is A or B
};

struct Dataset {
  std::vector<Record> records;

  std::size_t covariate_count() const { return records.empty() ? 0 : records.front().x.size(); }

  void validate() const {
    const std::size_t k = covariate_count();
    for (std::size_t i = 0; i < records.size(); ++i) {
      const Record& rec = records[i];
      const std::string where = " (record " + std::to_string(i) + ")";
      if (rec.x.size() != k) throw ValidationError("covariate length mismatch" + where, "invalid_dataset");
      if (!std::isfinite(rec.y)) throw ValidationError("non-finite outcome" + where, "non_finite");
      for (double v : rec.x)
        if (!std::isfinite(v)) throw ValidationError("non-finite covariate" + where, "non_finite");
      if (rec.r != (rec.d == Treatment::C ? 0 : 1))
        throw ValidationError("selection flag must equal 1{d in {A,B}}" + where, "invalid_dataset");
    }
  }

  Dataset selected() const {
    Dataset out;
    for (const auto& rec : records)
      if (rec.r == 1) out.records.push_back(rec);
    return out;
  }
};

inline Record make_record(double y, Arm z, Treatment d, std::vector<double> x = {}) {
  return {y, z, d, std::move(x), d == Treatment::C ? 0 : 1};
}

// ---------------------------------------------------------------------------
// Plug-in estimator without S5/S6.

struct A1Estimate {
  double theta_hat = 0.0;
  double pi_S1 = 0.0;
  double pi_S2 = 0.0;
  double pi_S4_A = 0.0;  // complier mass recovered from Z=A
  double pi_S4_B = 0.0;  // complier mass recovered from Z=B
};

inline A1Estimate estimate_a1(const Dataset& data) {
  data.validate();
  double count[2][3] = {};
  double sum[2][3] = {};
  for (const auto& rec : data.records) {
    const auto z = static_cast<std::size_t>(rec.z), d = static_cast<std::size_t>(rec.d);
    count[z][d] += 1.0;
    sum[z][d] += rec.y;
  }
  constexpr auto A = static_cast<std::size_t>(Arm::A), B = static_cast<std::size_t>(Arm::B);
  constexpr auto tA = static_cast<std::size_t>(Treatment::A), tB = static_cast<std::size_t>(Treatment::B);
  const double n_zA = count[A][0] + count[A][1] + count[A][2];
  const double n_zB = count[B][0] + count[B][1] + count[B][2];
  if (count[A][tA] == 0.0 || count[B][tB] == 0.0)
    throw ValidationError("matched cells (Z=A,D=A) and (Z=B,D=B) must be non-empty", "identification");

  auto cell_mean = [&](std::size_t z, std::size_t d) {
    return count[z][d] > 0.0 ? sum[z][d] / count[z][d] : 0.0;
  };
  const double p_AA = count[A][tA] / n_zA, p_BA = count[A][tB] / n_zA;
  const double p_AB = count[B][tA] / n_zB, p_BB = count[B][tB] / n_zB;

  A1Estimate e;
  e.pi_S2 = p_AB;
  e.pi_S1 = p_BA;
  e.pi_S4_A = p_AA - e.pi_S2;
  e.pi_S4_B = p_BB - e.pi_S1;
  if (!(e.pi_S4_A > 0.0) || !(e.pi_S4_B > 0.0))
    throw ValidationError("no positive complier mass in the observed cells", "identification");

  const double gA4 = e.pi_S4_A / p_AA, gA2 = e.pi_S2 / p_AA;
  const double gB4 = e.pi_S4_B / p_BB, gB1 = e.pi_S1 / p_BB;
  // Cells (Z=B, D=A) and (Z=A, D=B) contain only always-takers, so their
  // means estimate the always-taker means directly.
  const double complier_A = (cell_mean(A, tA) - gA2 * cell_mean(B, tA)) / gA4;
  const double complier_B = (cell_mean(B, tB) - gB1 * cell_mean(A, tB)) / gB4;
  e.theta_hat = complier_A - complier_B;
  return e;
}

// ---------------------------------------------------------------------------
// Logistic selection model fitted by IRLS.

struct LogitFit {
  Eigen::VectorXd coefficients;  // intercept, covariate slopes, 1{z=A}
  Eigen::VectorXd std_errors;
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;  // sup-norm of the score at the returned point
};

inline Eigen::MatrixXd selection_design(const Dataset& data) {
  const std::size_t n = data.records.size(), k = data.covariate_count();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k + 2));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = data.records[i];
    const auto row = static_cast<Eigen::Index>(i);
    X(row, 0) = 1.0;
    for (std::size_t j = 0; j < k; ++j) X(row, static_cast<Eigen::Index>(j + 1)) = rec.x[j];
    X(row, static_cast<Eigen::Index>(k + 1)) = rec.z == Arm::A ? 1.0 : 0.0;
  }
  return X;
}

inline Eigen::VectorXd selection_response(const Dataset& data) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(data.records.size()));
  for (std::size_t i = 0; i < data.records.size(); ++i)
    r(static_cast<Eigen::Index>(i)) = data.records[i].r;
  return r;
}

namespace detail {
inline double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
}  // namespace detail

inline double logit_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& r,
                                   const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += r(i) * eta(i) - detail::softplus(eta(i));
  return ll;
}

inline Eigen::VectorXd logit_score(const Eigen::MatrixXd& X, const Eigen::VectorXd& r,
                                   const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd resid(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid(i) = r(i) - numeric::logistic(eta(i));
  return X.transpose() * resid;
}

inline constexpr double logit_score_tolerance = 1e-8;
inline constexpr int logit_max_iterations = 100;
inline constexpr double separation_threshold = 30.0;

inline LogitFit fit_selection_logit(const Dataset& data) {
  data.validate();
  if (data.records.empty()) throw ValidationError("dataset is empty", "invalid_dataset");
  const Eigen::MatrixXd X = selection_design(data);
  const Eigen::VectorXd r = selection_response(data);
  const Eigen::Index p = X.cols();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  if (qr.rank() < p)
    throw NumericalError("selection design (1, x, 1{z=A}) is rank deficient", "singular_design");

  LogitFit fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = logit_log_likelihood(X, r, beta);
  Eigen::MatrixXd info(p, p);
  for (int it = 0; it <= logit_max_iterations; ++it) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd w(eta.size()), resid(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      const double pr = numeric::logistic(eta(i));
      w(i) = pr * (1.0 - pr);
      resid(i) = r(i) - pr;
    }
    const Eigen::VectorXd score = X.transpose() * resid;
    info = X.transpose() * w.asDiagonal() * X;
    fit.iterations = it;
    fit.score_norm = score.lpNorm<Eigen::Infinity>();
    if (fit.score_norm <= logit_score_tolerance) {
      fit.converged = true;
      break;
    }
    if (it == logit_max_iterations) break;

    const Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    Eigen::VectorXd step = ldlt.solve(score);
    Eigen::VectorXd candidate = beta + step;
    double ll_new = logit_log_likelihood(X, r, candidate);
    for (int halving = 0; halving < 40 && !(ll_new >= ll); ++halving) {
      step *= 0.5;
      candidate = beta + step;
      ll_new = logit_log_likelihood(X, r, candidate);
    }
    beta = candidate;
    ll = ll_new;
    if (beta.lpNorm<Eigen::Infinity>() > separation_threshold)
      throw NumericalError("selection model coefficients diverge (complete separation)", "separation");
  }
  fit.coefficients = beta;
  fit.std_errors = info.inverse().diagonal().cwiseSqrt();
  return fit;
}

/// Fitted selection probability for one record.
inline double selection_probability(const LogitFit& fit, const Record& rec) {
  double eta = fit.coefficients(0);
  for (std::size_t j = 0; j < rec.x.size(); ++j)
    eta += fit.coefficients(static_cast<Eigen::Index>(j + 1)) * rec.x[j];
  eta += fit.coefficients(fit.coefficients.size() - 1) * (rec.z == Arm::A ? 1.0 : 0.0);
  return numeric::logistic(eta);
}

// ---------------------------------------------------------------------------
// Weighted two-stage least squares for binary instrument and treatment.

struct TwoStageResult {
  double theta_hat = 0.0;    // stage-2 slope
  double wald_ratio = 0.0;   // Cov_w(y, z) / Cov_w(d, z)
  double first_stage = 0.0;  // Cov_w(d, z)
};

namespace detail {

inline Eigen::VectorXd weighted_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                              const Eigen::VectorXd& w) {
  const Eigen::MatrixXd XtW = X.transpose() * w.asDiagonal();
  return (XtW * X).ldlt().solve(XtW * y);
}

}  // namespace detail

/// Treatment indicator is 1{d=A}, instrument indicator 1{z=A}; every record
/// must have d in {A, B}.
inline TwoStageResult weighted_2sls(const Dataset& selected, std::span<const double> weights) {
  selected.validate();
  const std::size_t n = selected.records.size();
  if (weights.size() != n) throw ValidationError("one weight per record is required", "invalid_weights");
  std::size_t n_zA = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (selected.records[i].r != 1)
      throw ValidationError("two-stage estimator needs records with d in {A,B} only", "invalid_dataset");
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
      throw ValidationError("weights must be positive and finite", "invalid_weights");
    if (selected.records[i].z == Arm::A) ++n_zA;
  }
  if (n_zA == 0 || n_zA == n)
    throw ValidationError("both instrument groups must be present", "identification");

  const auto N = static_cast<Eigen::Index>(n);
  Eigen::VectorXd y(N), d(N), z(N), w(N);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rec = selected.records[i];
    const auto k = static_cast<Eigen::Index>(i);
    y(k) = rec.y;
    d(k) = rec.d == Treatment::A ? 1.0 : 0.0;
    z(k) = rec.z == Arm::A ? 1.0 : 0.0;
    w(k) = weights[i];
  }

  const double sw = w.sum();
  const double my = w.dot(y) / sw, md = w.dot(d) / sw, mz = w.dot(z) / sw;
  const Eigen::VectorXd zc = (z.array() - mz).matrix();
  const double cov_yz = w.dot((y.array() - my).matrix().cwiseProduct(zc)) / sw;
  const double cov_dz = w.dot((d.array() - md).matrix().cwiseProduct(zc)) / sw;
  const double var_z = w.dot(zc.cwiseProduct(zc)) / sw;
  const double var_d = w.dot((d.array() - md).square().matrix()) / sw;
  if (std::abs(cov_dz) <= 1e-12 * std::sqrt(var_d * var_z) || var_d == 0.0)
    throw NumericalError("instrument does not move the treatment in the weighted data", "weak_instrument");

  Eigen::MatrixXd X1(N, 2);
  X1.col(0).setOnes();
  X1.col(1) = z;
  const Eigen::VectorXd fitted = X1 * detail::weighted_least_squares(X1, d, w);
  Eigen::MatrixXd X2(N, 2);
  X2.col(0).setOnes();
  X2.col(1) = fitted;
  const Eigen::VectorXd b2 = detail::weighted_least_squares(X2, y, w);

  TwoStageResult res{b2(1), cov_yz / cov_dz, cov_dz};
  if (std::abs(res.theta_hat - res.wald_ratio) > 1e-8 * std::max(1.0, std::abs(res.wald_ratio)))
    throw NumericalError("two-stage and ratio forms disagree", "numerical");
  return res;
}

inline TwoStageResult wald_selected(const Dataset& data) {
  const Dataset sel = data.selected();
  const std::vector<double> ones(sel.records.size(), 1.0);
  return weighted_2sls(sel, ones);
}

enum class WeightMode {
  inverse,  // 1 / p(R=1 | X, Z)
  literal,  // p(R=1 | X, Z) itself
};

inline constexpr double selection_probability_floor = 0.01;

struct A2Estimate {
  double theta_hat = 0.0;
  double naive_theta = 0.0;  // unweighted two-stage estimate on the selected data
  std::size_t n_clipped = 0;
  std::size_t n_selected = 0;
  WeightMode mode = WeightMode::inverse;
  LogitFit fit;
};

inline A2Estimate estimate_a2(const Dataset& data, WeightMode mode = WeightMode::inverse) {
  A2Estimate e;
  e.mode = mode;
  e.fit = fit_selection_logit(data);
  const Dataset sel = data.selected();
  e.n_selected = sel.records.size();
  std::vector<double> w(sel.records.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    double p = selection_probability(e.fit, sel.records[i]);
    if (p < selection_probability_floor) {
      p = selection_probability_floor;
      ++e.n_clipped;
    }
    w[i] = mode == WeightMode::inverse ? 1.0 / p : p;
  }
  e.theta_hat = weighted_2sls(sel, w).theta_hat;
  e.naive_theta = wald_selected(data).theta_hat;
  return e;
}

}  // namespace ivsel
