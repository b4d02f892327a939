#pragma once

#include "stratalloc/core.hpp"

namespace stratalloc {

enum class RoundMode { kNone, kCeil };

struct SolveOptions {
  /// Relative slack for comparisons against bounds: lhs <= rhs * (1 + tol).
  double tol = 0.0;
  /// Record a SolveTrace.
  bool trace = false;
  /// Report the per-stratum bound multipliers (one extra pass).
  bool duals = false;
  /// Post-hoc integerization; `Allocation::rounded` holds the result.
  RoundMode round_mode = RoundMode::kNone;
};

struct Solution {
  Allocation allocation;
  SolveTrace trace;  // empty unless SolveOptions::trace
};

/// Recursive Neyman allocation under lower bounds.
///
/// Starting from an empty take-set L, every pass moves into L all strata whose
/// proportional share (A_h / sqrt(c_h)) s(L) does not exceed m_h, and stops on
/// the first pass that moves nothing. The result is z^L for the final L.
/// Boundary ties join the take-set. At most |H| + 1 passes are made; each pass
/// is O(|H|).
///
/// When Vt equals sum c_h m_h (compared exactly) the only feasible point is
/// z = m; if rounding stalls the recursion short of the full take-set, the
/// remaining strata are moved in on the final pass.
///
/// In the proper-subset case `dual_lambda` is 1 / s(L)^2. `dual_mu` is filled
/// only when SolveOptions::duals is set.
Solution lrna(const LowerProblem& problem, const SolveOptions& opts = {});

/// Recursive Neyman allocation under upper bounds: the mirror of lrna, with
/// strata whose Neyman share reaches M_h pinned at M_h. Trace steps record the
/// share factor (n - sum_U M) / sum_{not U} A in place of s.
Solution rna(const UpperProblem& problem, const SolveOptions& opts = {});

/// x_h = A_h n / sum_i A_i.
Allocation neyman(const ClassicalProblem& problem, const SolveOptions& opts = {});

/// Maps the minimum-cost problem onto the lower-bounded one through
/// z_h = A_h^2 / (c_h x_h): m_h = A_h^2 / (c_h M_h), Vt = V + A_0.
/// At the feasibility boundary Vt is set to sum c_h m_h exactly.
LowerProblem to_lower(const MinCostProblem& problem);

/// x_h = A_h^2 / (c_h z_h). Strata in the take-set land exactly on M_h; the
/// objective becomes the survey cost including the overhead.
Allocation from_lower(const MinCostProblem& problem, const Allocation& lower_solution);

/// from_lower(problem, lrna(to_lower(problem))).
Solution solve_min_cost(const MinCostProblem& problem, const SolveOptions& opts = {});

}  // namespace stratalloc
