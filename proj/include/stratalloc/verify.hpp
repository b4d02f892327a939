#pragma once

// Optimality certificates and desk-scale oracles for the allocation solvers.
//
// check_optimal certifies a point of the lower-bounded problem directly from
// the structure of its optimum: z must equal z^L for a take-set L such that
// either L is a proper subset with
//     h in L  <=>  s(L) <= sqrt(c_h) m_h / A_h,
// or L covers every stratum and Vt = sum c_h m_h.
//
// Two oracles back the solvers independently of the recursion:
//   oracle_subsets  exhaustive search over every candidate z^L, L subset of H;
//   oracle_grid     a structure-free scan of the budget hyperplane (|H| <= 3).

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stratalloc/core.hpp"

namespace stratalloc {

inline constexpr double kDefaultVerifyTol = 1e-9;
inline constexpr std::size_t kOracleMaxStrata = 20;

enum class VerdictReason {
  kOptimal,
  kNotCandidateForm,
  kTakeSetConditionFails,
  kOffSetConditionFails,
  kEqualityResidual,
  kBoundViolated,
  kCaseIIBudgetMismatch,
};

std::string_view to_string(VerdictReason reason);

struct Verdict {
  bool accepted = false;
  VerdictReason reason = VerdictReason::kNotCandidateForm;
  std::string label;             // offending stratum, when the reason names one
  std::optional<double> value;   // offending residual or value
  std::optional<StratumSet> take_set;  // certifying take-set when accepted
  bool all_at_bound = false;     // accepted through the Vt = sum c m branch

  static Verdict optimal(StratumSet take_set, bool all_at_bound = false);
  static Verdict reject(VerdictReason reason, std::string label = {},
                        std::optional<double> value = std::nullopt);
};

/// Certifies z against the optimality conditions of the lower-bounded
/// problem. Strata with |z_h - m_h| <= tol m_h are read as taken. When that
/// reading fails, the take-set of strata exactly at their bound and the set
/// with failing boundary members removed are also tried; the vector, not the
/// labelling of ties, is what gets certified.
Verdict check_optimal(const LowerProblem& problem, std::span<const double> z,
                      double tol = kDefaultVerifyTol);

struct KktMultipliers {
  double lambda = 0.0;
  std::vector<double> mu;  // row order
};

/// Multipliers for the stationarity system
///     -A_h^2 / z_h^2 + lambda c_h - mu_h = 0,   mu_h >= 0,   mu_h (m_h - z_h) = 0.
/// Proper take-set: lambda = 1/s(L)^2, mu_h = lambda c_h - A_h^2/m_h^2 on L and 0
/// elsewhere. Full take-set: lambda = max_h A_h^2/(m_h^2 c_h).
/// Throws NegativeMultiplier when some mu_h < -tol lambda c_h; smaller
/// negatives are rounding and are clamped to zero.
KktMultipliers kkt_multipliers(const LowerProblem& problem, std::span<const double> z,
                               const StratumSet& take_set, double tol = kDefaultVerifyTol);

struct KktResiduals {
  double stationarity = 0.0;     // max_h |grad| / max(A_h^2/z_h^2, lambda c_h)
  double complementarity = 0.0;  // max_h |mu_h (m_h - z_h)|
  double min_mu = 0.0;
};

KktResiduals kkt_residuals(const LowerProblem& problem, std::span<const double> z,
                           const KktMultipliers& multipliers);

/// admissible only when Vt == sum c_h m_h, and is then the only one.
/// Candidates equal coordinate-wise to a relative 1e-12 count as one point
/// and report the larger take-set. Throws TooLarge above kOracleMaxStrata
/// strata.
Allocation oracle_subsets(const LowerProblem& problem);

/// Grid search over the budget hyperplane for |H| = 2 or 3 (label order fixes
/// which coordinates are scanned). `resolution` cells per scanned coordinate;
/// each zoom level rescans the neighbourhood of the incumbent at the same
/// resolution. Candidates are compared through a cancellation-free form of the
/// objective difference. Throws UnsupportedDimension otherwise.
///
/// For |H| = 3 the second coordinate is scanned as a fraction of its feasible
/// range at each value of the first. The zoom window is the incumbent's
/// neighbouring cells in those two coordinates, which is a heuristic on badly
/// scaled instances.
std::vector<double> oracle_grid(const LowerProblem& problem, std::size_t resolution,
                                std::size_t zoom_levels = 0);

/// Evaluates both sides of
///     s(A) >= s(B)  <=>  s(A) sum_{B\A} A_h sqrt(c_h) <= sum_{B\A} c_h m_h
/// and reports whether they agree. Throws InvalidPair unless A is a subset of
/// B and B is a proper subset of H.
bool check_lemma_s_mono(const LowerProblem& problem, const StratumSet& a, const StratumSet& b);

/// Exhaustive search over take-sets U for the upper-bounded problem.
Allocation oracle_subsets_upper(const UpperProblem& problem);

/// Accepts x when it matches the best feasible x^U from exhaustive search.
/// Rejections name the mirrored take-set condition that fails when x is of
/// candidate form.
Verdict check_optimal_upper(const UpperProblem& problem, std::span<const double> x,
                            double tol = kDefaultVerifyTol);

}  // namespace stratalloc
