#pragma once

// Small numerical kernels shared by the estimators: a stable logistic,
// composite Simpson quadrature and a monotone root finder.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <tuple>

#include <boost/math/distributions/normal.hpp>

#include "ivsel/error.hpp"

namespace ivsel::numeric {

/// exp(t) / (1 + exp(t)) without overflow for any finite t.
inline double logistic(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Standard normal quantile.
inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double normal_cdf(double x) {
  return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

inline double normal_pdf(double x, double mean, double sd) {
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  const double z = (x - mean) / sd;
  return inv_sqrt_2pi / sd * std::exp(-0.5 * z * z);
}

/// Composite Simpson rule on [lo, hi] with `panels` sub-intervals (rounded up
/// to even).
template <class F>
double simpson(F&& f, double lo, double hi, std::size_t panels) {
  if (panels < 2) panels = 2;
  if (panels % 2 != 0) ++panels;
  const double h = (hi - lo) / static_cast<double>(panels);
  double odd = 0.0, even = 0.0;
  for (std::size_t k = 1; k < panels; ++k) {
    const double v = f(lo + static_cast<double>(k) * h);
    if (k % 2 != 0)
      odd += v;
    else
      even += v;
  }
  return h / 3.0 * (f(lo) + f(hi) + 4.0 * odd + 2.0 * even);
}

struct RootResult {
  double root;
  double residual;
  int iterations;
};

/// Root of a strictly increasing function. The initial bracket [lo, hi] is
/// widened geometrically around its centre until it straddles zero or its
/// half-width exceeds `max_abs`. Iterates bisection until |f| <= tol or the
/// bracket collapses to adjacent doubles.
template <class F>
RootResult solve_increasing(F&& f, double lo, double hi, double tol, double max_abs,
                            const std::string& what) {
  double flo = f(lo), fhi = f(hi);
  while (flo > 0.0 || fhi < 0.0) {
    if (std::max(std::abs(lo), std::abs(hi)) >= max_abs)
      throw NumericalError("no root of " + what + " within |x| <= " + std::to_string(max_abs),
                           "no_solution");
    const double mid = 0.5 * (lo + hi), half = hi - lo;
    if (flo > 0.0) {
      lo = mid - half;
      flo = f(lo);
    }
    if (fhi < 0.0) {
      hi = mid + half;
      fhi = f(hi);
    }
  }
  if (std::abs(flo) <= tol) return {lo, flo, 0};
  if (std::abs(fhi) <= tol) return {hi, fhi, 0};
  for (int it = 1; it <= 2000; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) {
      const double r = std::abs(flo) < std::abs(fhi) ? lo : hi;
      const double fr = r == lo ? flo : fhi;
      return {r, fr, it};
    }
    const double fm = f(mid);
    if (std::abs(fm) <= tol) return {mid, fm, it};
    if (fm < 0.0) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
      fhi = fm;
    }
  }
  throw NumericalError("bisection for " + what + " did not converge", "no_convergence");
}

/// Safeguarded Newton iteration for a strictly increasing function with
/// known derivative; falls back to bisection whenever the Newton step leaves
/// the current bracket. Same bracket-expansion contract as `solve_increasing`.
/// `fdf(x)` returns {f(x), f'(x)}.
template <class FdF>
RootResult solve_increasing_newton(FdF&& fdf, double start, double lo, double hi, double tol,
                                   double max_abs, const std::string& what) {
  auto [flo, dlo] = fdf(lo);
  auto [fhi, dhi] = fdf(hi);
  while (flo > 0.0 || fhi < 0.0) {
    if (std::max(std::abs(lo), std::abs(hi)) >= max_abs)
      throw NumericalError("no root of " + what + " within |x| <= " + std::to_string(max_abs),
                           "no_solution");
    const double mid = 0.5 * (lo + hi), half = hi - lo;
    if (flo > 0.0) {
      lo = mid - half;
      std::tie(flo, dlo) = fdf(lo);
    }
    if (fhi < 0.0) {
      hi = mid + half;
      std::tie(fhi, dhi) = fdf(hi);
    }
  }
  if (std::abs(flo) <= tol) return {lo, flo, 0};
  if (std::abs(fhi) <= tol) return {hi, fhi, 0};

  double x = (start > lo && start < hi) ? start : 0.5 * (lo + hi);
  for (int it = 1; it <= 500; ++it) {
    auto [fx, dfx] = fdf(x);
    if (std::abs(fx) <= tol) return {x, fx, it};
    if (fx < 0.0)
      lo = x;
    else
      hi = x;
    double next = dfx > 0.0 ? x - fx / dfx : lo - 1.0;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == x || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(x)) {
      return {x, fx, it};
    }
    x = next;
  }
  throw NumericalError("root search for " + what + " did not converge", "no_convergence");
}

}  // namespace ivsel::numeric
