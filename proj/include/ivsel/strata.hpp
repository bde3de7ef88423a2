#pragma once

// Principal-strata bookkeeping for a binary instrument Z in {A, B} and a
// three-valued treatment D in {A, B, C}.
//
//   S1 always-B      S4 complier (D(A)=A, D(B)=B)   S7 D(A)=B, D(B)=A
//   S2 always-A      S5 D(A)=C, D(B)=B              S8 D(A)=B, D(B)=C
//   S3 always-C      S6 D(A)=A, D(B)=C              S9 D(A)=C, D(B)=A
//
// S7-S9 are ruled out by the monotonicity assumptions and always carry zero
// mass here.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "ivsel/error.hpp"
#include "ivsel/types.hpp"

namespace ivsel {

enum class Stratum { S1 = 0, S2, S3, S4, S5, S6, S7, S8, S9 };

inline constexpr std::size_t stratum_count = 9;

inline constexpr bool excluded_by_monotonicity(Stratum s) {
  return s == Stratum::S7 || s == Stratum::S8 || s == Stratum::S9;
}

inline std::string to_string(Stratum s) {
  return "S" + std::to_string(static_cast<int>(s) + 1);
}

/// Proportions over the nine principal strata. Only constructible through
/// `make`, which enforces non-negativity, zero mass on S7-S9 and unit sum.
class StrataProportions {
 public:
  static StrataProportions make(const std::array<double, stratum_count>& pi) {
    double total = 0.0;
    for (std::size_t i = 0; i < stratum_count; ++i) {
      const auto s = static_cast<Stratum>(i);
      if (!std::isfinite(pi[i]) || pi[i] < 0.0)
        throw ValidationError("proportion for " + to_string(s) + " must be finite and >= 0",
                              "invalid_strata");
      if (excluded_by_monotonicity(s) && pi[i] != 0.0)
        throw ValidationError(to_string(s) + " is excluded by monotonicity and must be 0",
                              "invalid_strata");
      total += pi[i];
    }
    if (std::abs(total - 1.0) > 1e-12)
      throw ValidationError("strata proportions must sum to 1 (got " + std::to_string(total) + ")",
                            "invalid_strata");
    return StrataProportions(pi);
  }

  /// Convenience for the six admissible strata S1..S6.
  static StrataProportions make(double s1, double s2, double s3, double s4, double s5, double s6) {
    return make({s1, s2, s3, s4, s5, s6, 0.0, 0.0, 0.0});
  }

  double operator[](Stratum s) const { return pi_[static_cast<std::size_t>(s)]; }
  const std::array<double, stratum_count>& values() const { return pi_; }

 private:
  explicit StrataProportions(const std::array<double, stratum_count>& pi) : pi_(pi) {}
  std::array<double, stratum_count> pi_;
};

/// p(D = d | Z = z) for the six observable cells.
class CellProbabilities {
 public:
  using Table = std::array<std::array<double, 3>, 2>;

  static CellProbabilities make(const Table& p) {
    for (std::size_t z = 0; z < 2; ++z) {
      double row = 0.0;
      for (std::size_t d = 0; d < 3; ++d) {
        if (!std::isfinite(p[z][d]) || p[z][d] < 0.0 || p[z][d] > 1.0)
          throw ValidationError("cell probabilities must lie in [0, 1]", "invalid_cells");
        row += p[z][d];
      }
      if (std::abs(row - 1.0) > 1e-12)
        throw ValidationError("cell probabilities for Z=" +
                                  std::string(to_string(static_cast<Arm>(z))) +
                                  " must sum to 1",
                              "invalid_cells");
    }
    return CellProbabilities(p);
  }

  double operator()(Arm z, Treatment d) const {
    return p_[static_cast<std::size_t>(z)][static_cast<std::size_t>(d)];
  }
  const Table& table() const { return p_; }

 private:
  explicit CellProbabilities(const Table& p) : p_(p) {}
  Table p_;
};

/// Complier shares of the two matched cells (Z=A,D=A) and (Z=B,D=B).
struct Gammas {
  double gamma_A;
  double gamma_B;
};

inline CellProbabilities cell_probabilities(const StrataProportions& pi) {
  using S = Stratum;
  CellProbabilities::Table p{};
  auto& a = p[static_cast<std::size_t>(Arm::A)];
  auto& b = p[static_cast<std::size_t>(Arm::B)];
  a[0] = pi[S::S2] + pi[S::S4] + pi[S::S6];
  a[1] = pi[S::S1];
  a[2] = pi[S::S3] + pi[S::S5];
  b[0] = pi[S::S2];
  b[1] = pi[S::S1] + pi[S::S4] + pi[S::S5];
  b[2] = pi[S::S3] + pi[S::S6];
  // Absorb rounding from the additions so the result always validates.
  for (auto* row : {&a, &b}) {
    const double total = (*row)[0] + (*row)[1] + (*row)[2];
    for (double& v : *row) v /= total;
  }
  return CellProbabilities::make(p);
}

inline Gammas gammas_from_strata(const StrataProportions& pi) {
  using S = Stratum;
  const double denom_A = pi[S::S2] + pi[S::S4] + pi[S::S6];
  const double denom_B = pi[S::S1] + pi[S::S4] + pi[S::S5];
  if (!(denom_A > 0.0))
    throw ValidationError("cell (Z=A, D=A) has zero mass", "degenerate_cell");
  if (!(denom_B > 0.0))
    throw ValidationError("cell (Z=B, D=B) has zero mass", "degenerate_cell");
  return {pi[S::S4] / denom_A, pi[S::S4] / denom_B};
}

/// Inverts the cell map under the assumption that one of S3, S5, S6 is empty,
/// which makes the system exactly determined.
inline StrataProportions identify_strata(const CellProbabilities& cells, Stratum empty) {
  using S = Stratum;
  using T = Treatment;
  const double aa = cells(Arm::A, T::A), ba = cells(Arm::A, T::B), ca = cells(Arm::A, T::C);
  const double ab = cells(Arm::B, T::A), bb = cells(Arm::B, T::B), cb = cells(Arm::B, T::C);

  std::array<double, stratum_count> pi{};
  auto at = [&pi](S s) -> double& { return pi[static_cast<std::size_t>(s)]; };
  at(S::S1) = ba;
  at(S::S2) = ab;
  switch (empty) {
    case S::S6:
      at(S::S3) = cb;
      at(S::S5) = ca - cb;
      at(S::S4) = aa - ab;
      break;
    case S::S5:
      at(S::S3) = ca;
      at(S::S6) = cb - ca;
      at(S::S4) = bb - ba;
      break;
    case S::S3:
      at(S::S5) = ca;
      at(S::S6) = cb;
      at(S::S4) = aa - ab - cb;
      break;
    default:
      throw ValidationError("the empty stratum must be one of S3, S5, S6", "invalid_restriction");
  }

  double total = 0.0;
  for (std::size_t i = 0; i < stratum_count; ++i) {
    if (pi[i] < -1e-9)
      throw ValidationError("cells are inconsistent with " + to_string(empty) +
                                " empty: recovered " + to_string(static_cast<S>(i)) + " = " +
                                std::to_string(pi[i]),
                            "inconsistent_cells");
    if (pi[i] < 0.0) pi[i] = 0.0;
    total += pi[i];
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw ValidationError("recovered strata proportions sum to " + std::to_string(total),
                          "inconsistent_cells");
  for (double& v : pi) v /= total;
  return StrataProportions::make(pi);
}

inline Gammas identify_gammas(const CellProbabilities& cells, Stratum empty) {
  return gammas_from_strata(identify_strata(cells, empty));
}

}  // namespace ivsel
