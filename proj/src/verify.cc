#include "stratalloc/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

namespace stratalloc {

std::string_view to_string(VerdictReason reason) {
  switch (reason) {
    case VerdictReason::kOptimal: return "Optimal";
    case VerdictReason::kNotCandidateForm: return "NotCandidateForm";
    case VerdictReason::kTakeSetConditionFails: return "TakeSetConditionFails";
    case VerdictReason::kOffSetConditionFails: return "OffSetConditionFails";
    case VerdictReason::kEqualityResidual: return "EqualityResidual";
    case VerdictReason::kBoundViolated: return "BoundViolated";
    case VerdictReason::kCaseIIBudgetMismatch: return "CaseIIBudgetMismatch";
  }
  return "Unknown";
}

Verdict Verdict::optimal(StratumSet take_set, bool all_at_bound) {
  Verdict v;
  v.accepted = true;
  v.reason = VerdictReason::kOptimal;
  v.take_set = std::move(take_set);
  v.all_at_bound = all_at_bound;
  return v;
}

Verdict Verdict::reject(VerdictReason reason, std::string label, std::optional<double> value) {
  Verdict v;
  v.accepted = false;
  v.reason = reason;
  v.label = std::move(label);
  v.value = value;
  return v;
}

namespace {

void check_length(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw Error(ErrorCode::kSizeMismatch, "allocation has " + std::to_string(got) +
                                              " entries, frame has " + std::to_string(expected));
  }
}

bool close(double value, double reference, double tol) {
  return std::abs(value - reference) <= tol * std::abs(reference);
}

double ratio_of(const Stratum& row) { return detail::ratio(row.weight, row.unit_cost); }

// Certifies z against a single take-set reading.
Verdict certify_lower(const LowerProblem& problem, std::span<const double> z,
                      const StratumSet& take_set, double tol) {
  const StrataFrame& frame = problem.frame();
  if (take_set.is_full()) {
    const double gap = problem.budget() - problem.min_spend();
    if (std::abs(gap) <= tol * problem.budget()) return Verdict::optimal(take_set, true);
    return Verdict::reject(VerdictReason::kCaseIIBudgetMismatch, {}, gap);
  }

  const double s = s_value(problem, take_set);
  const std::vector<double> expected = candidate(problem, take_set);
  for (std::size_t i : frame.label_order()) {
    if (!close(z[i], expected[i], tol)) {
      return Verdict::reject(VerdictReason::kNotCandidateForm, frame[i].label, z[i] - expected[i]);
    }
  }
  for (std::size_t i : frame.label_order()) {
    if (!take_set.contains(i)) continue;
    // s(L) <= sqrt(c_h) m_h / A_h, multiplied through by A_h / sqrt(c_h).
    if (!at_most(ratio_of(frame[i]) * s, problem.lower(i), tol)) {
      return Verdict::reject(VerdictReason::kTakeSetConditionFails, frame[i].label, s);
    }
  }
  for (std::size_t i : frame.label_order()) {
    if (take_set.contains(i)) continue;
    if (!(ratio_of(frame[i]) * s > problem.lower(i) * (1.0 - tol))) {
      return Verdict::reject(VerdictReason::kOffSetConditionFails, frame[i].label, s);
    }
  }
  return Verdict::optimal(take_set);
}

}  // namespace

Verdict check_optimal(const LowerProblem& problem, std::span<const double> z, double tol) {
  const StrataFrame& frame = problem.frame();
  const std::size_t n = frame.size();
  check_length(n, z.size());

  for (std::size_t i : frame.label_order()) {
    if (!(z[i] > 0.0) || z[i] < problem.lower(i) * (1.0 - tol)) {
      return Verdict::reject(VerdictReason::kBoundViolated, frame[i].label, z[i]);
    }
  }
  double spent = 0.0;
  for (std::size_t i : frame.label_order()) spent += frame[i].unit_cost * z[i];
  const double residual = spent - problem.budget();
  if (std::abs(residual) > tol * problem.budget()) {
    return Verdict::reject(VerdictReason::kEqualityResidual, {}, residual);
  }

  StratumSet near(n);
  StratumSet exact(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (close(z[i], problem.lower(i), tol)) near.insert(i);
    if (z[i] <= problem.lower(i)) exact.insert(i);
  }

  const Verdict first = certify_lower(problem, z, near, tol);
  if (first.accepted) return first;

  if (exact != near) {
    Verdict v = certify_lower(problem, z, exact, tol);
    if (v.accepted) return v;
  }
  if (!near.is_full()) {
    // Drop boundary members whose take-set condition fails at s(near).
    const double s = s_value(problem, near);
    StratumSet trimmed = near;
    for (std::size_t i : near.members()) {
      if (!at_most(ratio_of(frame[i]) * s, problem.lower(i), tol)) trimmed.erase(i);
    }
    if (trimmed != near && trimmed != exact) {
      Verdict v = certify_lower(problem, z, trimmed, tol);
      if (v.accepted) return v;
    }
  }
  return first;
}

KktMultipliers kkt_multipliers(const LowerProblem& problem, std::span<const double> z,
                               const StratumSet& take_set, double tol) {
  const StrataFrame& frame = problem.frame();
  const std::size_t n = frame.size();
  check_length(n, z.size());
  check_length(n, take_set.universe());

  KktMultipliers out;
  out.mu.assign(n, 0.0);
  if (take_set.is_full()) {
    for (std::size_t i : frame.label_order()) {
      const Stratum& row = frame[i];
      const double m = problem.lower(i);
      out.lambda = std::max(out.lambda, row.weight * row.weight / (m * m * row.unit_cost));
    }
  } else {
    const double s = s_value(problem, take_set);
    out.lambda = 1.0 / (s * s);
  }

  for (std::size_t i : frame.label_order()) {
    if (!take_set.contains(i)) continue;
    const Stratum& row = frame[i];
    const double m = problem.lower(i);
    const double price = out.lambda * row.unit_cost;
    double mu = price - row.weight * row.weight / (m * m);
    if (mu < 0.0) {
      if (mu < -tol * price) {
        throw Error(ErrorCode::kNegativeMultiplier,
                    "multiplier for stratum '" + row.label + "' is negative: the point is not optimal",
                    row.label);
      }
      mu = 0.0;
    }
    out.mu[i] = mu;
  }
  return out;
}

KktResiduals kkt_residuals(const LowerProblem& problem, std::span<const double> z,
                           const KktMultipliers& multipliers) {
  const StrataFrame& frame = problem.frame();
  check_length(frame.size(), z.size());
  check_length(frame.size(), multipliers.mu.size());
  KktResiduals out;
  out.min_mu = std::numeric_limits<double>::infinity();
  for (std::size_t i : frame.label_order()) {
    const Stratum& row = frame[i];
    const double curvature = row.weight * row.weight / (z[i] * z[i]);
    const double price = multipliers.lambda * row.unit_cost;
    const double grad = -curvature + price - multipliers.mu[i];
    out.stationarity = std::max(out.stationarity, std::abs(grad) / std::max(curvature, price));
    out.complementarity =
        std::max(out.complementarity, std::abs(multipliers.mu[i] * (problem.lower(i) - z[i])));
    out.min_mu = std::min(out.min_mu, multipliers.mu[i]);
  }
  return out;
}

namespace {

void check_oracle_size(std::size_t n) {
  if (n > kOracleMaxStrata) {
    throw Error(ErrorCode::kTooLarge, "subset enumeration is capped at " +
                                          std::to_string(kOracleMaxStrata) + " strata");
  }
}

// Incumbent of an exhaustive search.
struct Incumbent {
  explicit Incumbent(const std::vector<double>& weight_sq) : weight_sq(weight_sq) {}

  const std::vector<double>& weight_sq;
  bool found = false;
  double objective = 0.0;
  std::size_t taken = 0;
  std::uint32_t mask = 0;
  std::vector<double> values;

  // Candidates that agree coordinate-wise to 1e-12 are the same point under
  // two labellings and go to the larger take-set. Otherwise obj(x) - obj(b)
  // decides, summed term by term as w^2 (b - x) / (x b) so that shared
  // coordinates contribute exactly zero; near the optimum the objective is
  // flat and a window on the difference would swallow distinct points.
  void offer(double objective_value, std::size_t taken_count, std::uint32_t subset,
             const std::vector<double>& x) {
    bool better = !found;
    if (found) {
      bool same = true;
      double delta = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (x[k] == values[k]) continue;
        same = same && std::abs(x[k] - values[k]) <= 1e-12 * values[k];
        delta += weight_sq[k] * (values[k] - x[k]) / (x[k] * values[k]);
      }
      better = same ? taken_count > taken : delta < 0.0;
    }
    if (better) {
      found = true;
      objective = objective_value;
      taken = taken_count;
      mask = subset;
      values = x;
    }
  }
};

}  // namespace

Allocation oracle_subsets(const LowerProblem& problem) {
  const StrataFrame& frame = problem.frame();
  const std::size_t n = frame.size();
  check_oracle_size(n);
  const auto order = frame.label_order();

  std::vector<double> spend(n), mass(n), ratio(n), bound(n), weight_sq(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Stratum& row = frame[order[k]];
    spend[k] = detail::spend(row.unit_cost, *row.lower);
    mass[k] = detail::mass(row.weight, row.unit_cost);
    ratio[k] = detail::ratio(row.weight, row.unit_cost);
    bound[k] = *row.lower;
    weight_sq[k] = row.weight * row.weight;
  }
  const double budget = problem.budget();
  const std::uint32_t full = (std::uint32_t{1} << n) - 1;
  // At Vt == sum c m the bounds leave z = m as the only feasible point. Other
  // candidates would clear their bounds by cancellation noise alone.
  const bool tight = budget == problem.min_spend();

  Incumbent best(weight_sq);
  std::vector<double> z(n);  // label order
  for (std::uint32_t mask = tight ? full : 0; mask <= full; ++mask) {
    if (mask == full) {
      if (!tight) continue;
      double objective = 0.0;
      for (std::size_t k = 0; k < n; ++k) objective += weight_sq[k] / bound[k];
      best.offer(objective, n, mask, bound);
      break;
    }
    double spent = 0.0;
    double free_mass = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (mask >> k & 1u) {
        spent += spend[k];
      } else {
        free_mass += mass[k];
      }
    }
    const double s = (budget - spent) / free_mass;
    bool feasible = true;
    double objective = 0.0;
    for (std::size_t k = 0; k < n && feasible; ++k) {
      z[k] = (mask >> k & 1u) ? bound[k] : ratio[k] * s;
      feasible = z[k] >= bound[k];
      objective += weight_sq[k] / z[k];
    }
    if (feasible) best.offer(objective, static_cast<std::size_t>(__builtin_popcount(mask)), mask, z);
  }

  if (!best.found) {
    // Vt exceeds sum c m by rounding only: the bound vector is the answer.
    if (std::abs(budget - problem.min_spend()) <= 1e-12 * budget) {
      double objective = 0.0;
      for (std::size_t k = 0; k < n; ++k) objective += weight_sq[k] / bound[k];
      best.offer(objective, n, full, bound);
    } else {
      throw Error(ErrorCode::kInfeasible, "no candidate allocation satisfies the lower bounds");
    }
  }

  Allocation out;
  out.values.resize(n);
  out.take_set = StratumSet(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[order[k]] = best.values[k];
    if (best.mask >> k & 1u) out.take_set.insert(order[k]);
  }
  out.objective = best.objective;
  return out;
}

std::vector<double> oracle_grid(const LowerProblem& problem, std::size_t resolution,
                                std::size_t zoom_levels) {
  const StrataFrame& frame = problem.frame();
  const std::size_t n = frame.size();
  if (n != 2 && n != 3) {
    throw Error(ErrorCode::kUnsupportedDimension, "grid oracle supports 2 or 3 strata only");
  }
  if (resolution == 0) {
    throw Error(ErrorCode::kNonPositiveParameter, "grid resolution must be positive", {},
                "resolution");
  }
  const auto order = frame.label_order();
  double c[3], a2[3], m[3];
  for (std::size_t k = 0; k < n; ++k) {
    const Stratum& row = frame[order[k]];
    c[k] = row.unit_cost;
    a2[k] = row.weight * row.weight;
    m[k] = *row.lower;
  }
  const double budget = problem.budget();
  const double steps = static_cast<double>(resolution);

  auto grid_point = [steps](double lo, double hi, std::size_t i) {
    return i == 0 ? lo : (static_cast<double>(i) == steps ? hi : lo + (hi - lo) * (i / steps));
  };

  std::vector<double> result(n);
  if (n == 2) {
    auto dependent = [&](double z0) { return (budget - c[0] * z0) / c[1]; };
    double lo = m[0];
    double hi = std::max(lo, (budget - c[1] * m[1]) / c[0]);
    double best0 = lo;
    for (std::size_t level = 0; level <= zoom_levels; ++level) {
      std::size_t best_i = 0;
      best0 = lo;
      double best1 = dependent(lo);
      for (std::size_t i = 1; i <= resolution; ++i) {
        const double z0 = grid_point(lo, hi, i);
        const double z1 = dependent(z0);
        const double d0 = best0 - z0;
        const double d1 = -c[0] * d0 / c[1];
        // f(z) - f(best) without cancellation.
        const double delta = a2[0] * d0 / (z0 * best0) + a2[1] * d1 / (z1 * best1);
        if (delta < 0.0) {
          best_i = i;
          best0 = z0;
          best1 = z1;
        }
      }
      const double new_lo = best_i == 0 ? lo : grid_point(lo, hi, best_i - 1);
      const double new_hi = best_i == resolution ? hi : grid_point(lo, hi, best_i + 1);
      lo = new_lo;
      hi = new_hi;
    }
    result[order[0]] = best0;
    result[order[1]] = dependent(best0);
    return result;
  }

  // The inner coordinate is scanned as a fraction t of its feasible range at
  // each z0, so t = 0 and t = 1 stay on the bound edges while zooming.
  auto last = [&](double z0, double z1) { return (budget - c[0] * z0 - c[1] * z1) / c[2]; };
  auto inner_hi = [&](double z0) {
    return std::max(m[1], (budget - c[0] * z0 - c[2] * m[2]) / c[1]);
  };
  double lo0 = m[0];
  double hi0 = std::max(lo0, (budget - c[1] * m[1] - c[2] * m[2]) / c[0]);
  double lo_t = 0.0;
  double hi_t = 1.0;
  double b0 = lo0, b1 = m[1], b2 = last(lo0, m[1]);
  for (std::size_t level = 0; level <= zoom_levels; ++level) {
    bool have = false;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i <= resolution; ++i) {
      const double z0 = grid_point(lo0, hi0, i);
      const double hi1 = inner_hi(z0);
      for (std::size_t j = 0; j <= resolution; ++j) {
        const double t = grid_point(lo_t, hi_t, j);
        const double z1 = t == 1.0 ? hi1 : m[1] + (hi1 - m[1]) * t;
        const double z2 = last(z0, z1);
        if (!(z2 > 0.0)) continue;
        bool better = !have;
        if (have) {
          const double d0 = b0 - z0;
          const double d1 = b1 - z1;
          const double d2 = -(c[0] * d0 + c[1] * d1) / c[2];
          const double delta =
              a2[0] * d0 / (z0 * b0) + a2[1] * d1 / (z1 * b1) + a2[2] * d2 / (z2 * b2);
          better = delta < 0.0;
        }
        if (better) {
          have = true;
          b0 = z0;
          b1 = z1;
          b2 = z2;
          bi = i;
          bj = j;
        }
      }
    }
    const double new_lo0 = bi == 0 ? lo0 : grid_point(lo0, hi0, bi - 1);
    const double new_hi0 = bi == resolution ? hi0 : grid_point(lo0, hi0, bi + 1);
    const double new_lo_t = bj == 0 ? lo_t : grid_point(lo_t, hi_t, bj - 1);
    const double new_hi_t = bj == resolution ? hi_t : grid_point(lo_t, hi_t, bj + 1);
    lo0 = new_lo0;
    hi0 = new_hi0;
    lo_t = new_lo_t;
    hi_t = new_hi_t;
  }
  result[order[0]] = b0;
  result[order[1]] = b1;
  result[order[2]] = b2;
  return result;
}

bool check_lemma_s_mono(const LowerProblem& problem, const StratumSet& a, const StratumSet& b) {
  const StrataFrame& frame = problem.frame();
  if (a.universe() != frame.size() || b.universe() != frame.size() || !a.is_subset_of(b) ||
      b.is_full()) {
    throw Error(ErrorCode::kInvalidPair, "lemma pair must satisfy A subset of B, B proper subset of H");
  }
  const double s_a = s_value(problem, a);
  const double s_b = s_value(problem, b);
  double diff_mass = 0.0;
  double diff_spend = 0.0;
  for (std::size_t i : frame.label_order()) {
    if (b.contains(i) && !a.contains(i)) {
      diff_mass += detail::mass(frame[i].weight, frame[i].unit_cost);
      diff_spend += detail::spend(frame[i].unit_cost, problem.lower(i));
    }
  }
  const bool left = s_a >= s_b;
  const bool right = s_a * diff_mass <= diff_spend;
  return left == right;
}

Allocation oracle_subsets_upper(const UpperProblem& problem) {
  const StrataFrame& frame = problem.frame();
  const std::size_t n = frame.size();
  check_oracle_size(n);
  const auto order = frame.label_order();

  std::vector<double> weight(n), bound(n), weight_sq(n);
  for (std::size_t k = 0; k < n; ++k) {
    weight[k] = frame[order[k]].weight;
    bound[k] = *frame[order[k]].upper;
    weight_sq[k] = weight[k] * weight[k];
  }
  const double total = problem.sample_size();
  const std::uint32_t full = (std::uint32_t{1} << n) - 1;

  const bool tight = total == problem.capacity();

  Incumbent best(weight_sq);
  std::vector<double> x(n);
  for (std::uint32_t mask = tight ? full : 0; mask <= full; ++mask) {
    if (mask == full) {
      if (!tight) continue;
      double objective = 0.0;
      for (std::size_t k = 0; k < n; ++k) objective += weight_sq[k] / bound[k];
      best.offer(objective, n, mask, bound);
      break;
    }
    double placed = 0.0;
    double free_weight = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (mask >> k & 1u) {
        placed += bound[k];
      } else {
        free_weight += weight[k];
      }
    }
    const double share = (total - placed) / free_weight;
    if (!(share > 0.0)) continue;
    bool feasible = true;
    double objective = 0.0;
    for (std::size_t k = 0; k < n && feasible; ++k) {
      x[k] = (mask >> k & 1u) ? bound[k] : weight[k] * share;
      feasible = x[k] <= bound[k];
      objective += weight_sq[k] / x[k];
    }
    if (feasible) best.offer(objective, static_cast<std::size_t>(__builtin_popcount(mask)), mask, x);
  }

  if (!best.found) {
    if (std::abs(total - problem.capacity()) <= 1e-12 * total) {
      double objective = 0.0;
      for (std::size_t k = 0; k < n; ++k) objective += weight_sq[k] / bound[k];
      best.offer(objective, n, full, bound);
    } else {
      throw Error(ErrorCode::kInfeasible, "no candidate allocation satisfies the upper bounds");
    }
  }

  Allocation out;
  out.values.resize(n);
  out.take_set = StratumSet(n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[order[k]] = best.values[k];
    if (best.mask >> k & 1u) out.take_set.insert(order[k]);
  }
  out.objective = best.objective;
  return out;
}

Verdict check_optimal_upper(const UpperProblem& problem, std::span<const double> x, double tol) {
  const StrataFrame& frame = problem.frame();
  const std::size_t n = frame.size();
  check_length(n, x.size());

  for (std::size_t i : frame.label_order()) {
    if (!(x[i] > 0.0) || x[i] > problem.upper(i) * (1.0 + tol)) {
      return Verdict::reject(VerdictReason::kBoundViolated, frame[i].label, x[i]);
    }
  }
  double placed = 0.0;
  for (std::size_t i : frame.label_order()) placed += x[i];
  const double residual = placed - problem.sample_size();
  if (std::abs(residual) > tol * problem.sample_size()) {
    return Verdict::reject(VerdictReason::kEqualityResidual, {}, residual);
  }

  const Allocation best = oracle_subsets_upper(problem);
  bool matches = true;
  for (std::size_t i = 0; i < n && matches; ++i) matches = close(x[i], best.values[i], tol);
  if (matches) return Verdict::optimal(best.take_set, best.take_set.is_full());

  // Not optimal: say why in terms of the take-set x itself implies.
  StratumSet pinned(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] >= problem.upper(i) * (1.0 - tol)) pinned.insert(i);
  }
  if (pinned.is_full()) {
    return Verdict::reject(VerdictReason::kCaseIIBudgetMismatch, {},
                           problem.sample_size() - problem.capacity());
  }
  double pinned_total = 0.0;
  double free_weight = 0.0;
  for (std::size_t i : frame.label_order()) {
    if (pinned.contains(i)) {
      pinned_total += problem.upper(i);
    } else {
      free_weight += frame[i].weight;
    }
  }
  const double share = (problem.sample_size() - pinned_total) / free_weight;
  for (std::size_t i : frame.label_order()) {
    const double expected = pinned.contains(i) ? problem.upper(i) : frame[i].weight * share;
    if (!close(x[i], expected, tol)) {
      return Verdict::reject(VerdictReason::kNotCandidateForm, frame[i].label, x[i] - expected);
    }
  }
  for (std::size_t i : frame.label_order()) {
    if (pinned.contains(i) && !at_most(problem.upper(i), frame[i].weight * share, tol)) {
      return Verdict::reject(VerdictReason::kTakeSetConditionFails, frame[i].label, share);
    }
  }
  for (std::size_t i : frame.label_order()) {
    if (!pinned.contains(i) && at_most(problem.upper(i), frame[i].weight * share, 0.0)) {
      return Verdict::reject(VerdictReason::kOffSetConditionFails, frame[i].label, share);
    }
  }
  return Verdict::reject(VerdictReason::kNotCandidateForm);
}

}  // namespace stratalloc
