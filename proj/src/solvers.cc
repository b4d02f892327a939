#include "stratalloc/solvers.hpp"

#include <algorithm>
#include <cmath>

namespace stratalloc {

namespace {

void check_options(const SolveOptions& opts) {
  if (!(std::isfinite(opts.tol) && opts.tol >= 0.0)) {
    throw Error(ErrorCode::kNonPositiveParameter, "tolerance must be finite and >= 0", {}, "tol");
  }
}

double inverse_square_sum(const StrataFrame& frame, const std::vector<double>& x) {
  double total = 0.0;
  for (std::size_t i : frame.label_order()) total += frame[i].weight * frame[i].weight / x[i];
  return total;
}

void apply_rounding(Allocation& allocation, RoundMode mode) {
  if (mode != RoundMode::kCeil) return;
  std::vector<double> rounded(allocation.values.size());
  std::transform(allocation.values.begin(), allocation.values.end(), rounded.begin(),
                 [](double v) { return std::ceil(v); });
  allocation.rounded = std::move(rounded);
}

}  // namespace

Solution lrna(const LowerProblem& problem, const SolveOptions& opts) {
  check_options(opts);
  const StrataFrame& frame = problem.frame();
  const std::size_t n = frame.size();
  const auto order = frame.label_order();

  // Per-stratum terms laid out in label order.
  std::vector<double> spend(n), mass(n), ratio(n), bound(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Stratum& row = frame[order[k]];
    spend[k] = detail::spend(row.unit_cost, *row.lower);
    mass[k] = detail::mass(row.weight, row.unit_cost);
    ratio[k] = detail::ratio(row.weight, row.unit_cost);
    bound[k] = *row.lower;
  }

  const double budget = problem.budget();
  const bool tight_budget = budget == problem.min_spend();

  Solution out;
  std::vector<char> taken(n, 0);
  std::size_t taken_count = 0;
  std::vector<std::size_t> added;
  double s = 0.0;

  while (true) {
    if (taken_count == n) {
      if (opts.trace) out.trace.steps.push_back({std::nullopt, {}});
      break;
    }
    double spent = 0.0;
    double free_mass = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (taken[k]) {
        spent += spend[k];
      } else {
        free_mass += mass[k];
      }
    }
    s = (budget - spent) / free_mass;

    added.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (!taken[k] && at_most(ratio[k] * s, bound[k], opts.tol)) added.push_back(k);
    }
    if (added.empty() && tight_budget) {
      for (std::size_t k = 0; k < n; ++k) {
        if (!taken[k]) added.push_back(k);
      }
    }

    if (opts.trace) {
      TraceStep step{s, {}};
      step.added.reserve(added.size());
      for (std::size_t k : added) step.added.push_back(order[k]);
      out.trace.steps.push_back(std::move(step));
    }
    if (added.empty()) break;
    for (std::size_t k : added) taken[k] = 1;
    taken_count += added.size();
  }

  Allocation& alloc = out.allocation;
  alloc.take_set = StratumSet(n);
  alloc.values.resize(n);
  const bool full = taken_count == n;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    if (taken[k]) {
      alloc.take_set.insert(i);
      alloc.values[i] = bound[k];
    } else {
      alloc.values[i] = ratio[k] * s;
    }
  }
  alloc.objective = inverse_square_sum(frame, alloc.values);

  if (!full) {
    const double lambda = 1.0 / (s * s);
    alloc.dual_lambda = lambda;
    if (opts.duals) {
      std::vector<double> mu(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        if (!taken[k]) continue;
        const Stratum& row = frame[order[k]];
        const double price = lambda * row.unit_cost;
        double value = price - row.weight * row.weight / (bound[k] * bound[k]);
        // Boundary ties produce a zero multiplier up to rounding.
        if (value < 0.0 && value > -1e-12 * price) value = 0.0;
        mu[order[k]] = value;
      }
      alloc.dual_mu = std::move(mu);
    }
  }
  apply_rounding(alloc, opts.round_mode);
  return out;
}

Solution rna(const UpperProblem& problem, const SolveOptions& opts) {
  check_options(opts);
  const StrataFrame& frame = problem.frame();
  const std::size_t n = frame.size();
  const auto order = frame.label_order();

  std::vector<double> weight(n), bound(n);
  for (std::size_t k = 0; k < n; ++k) {
    weight[k] = frame[order[k]].weight;
    bound[k] = *frame[order[k]].upper;
  }

  const double total = problem.sample_size();
  const bool tight_total = total == problem.capacity();

  Solution out;
  std::vector<char> taken(n, 0);
  std::size_t taken_count = 0;
  std::vector<std::size_t> added;
  double share = 0.0;

  while (true) {
    if (taken_count == n) {
      if (opts.trace) out.trace.steps.push_back({std::nullopt, {}});
      break;
    }
    double placed = 0.0;
    double free_weight = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (taken[k]) {
        placed += bound[k];
      } else {
        free_weight += weight[k];
      }
    }
    share = (total - placed) / free_weight;

    added.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (!taken[k] && at_most(bound[k], weight[k] * share, opts.tol)) added.push_back(k);
    }
    if (added.empty() && tight_total) {
      for (std::size_t k = 0; k < n; ++k) {
        if (!taken[k]) added.push_back(k);
      }
    }

    if (opts.trace) {
      TraceStep step{share, {}};
      for (std::size_t k : added) step.added.push_back(order[k]);
      out.trace.steps.push_back(std::move(step));
    }
    if (added.empty()) break;
    for (std::size_t k : added) taken[k] = 1;
    taken_count += added.size();
  }

  Allocation& alloc = out.allocation;
  alloc.take_set = StratumSet(n);
  alloc.values.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = order[k];
    if (taken[k]) {
      alloc.take_set.insert(i);
      alloc.values[i] = bound[k];
    } else {
      alloc.values[i] = weight[k] * share;
    }
  }
  alloc.objective = inverse_square_sum(frame, alloc.values);
  apply_rounding(alloc, opts.round_mode);
  return out;
}

Allocation neyman(const ClassicalProblem& problem, const SolveOptions& opts) {
  check_options(opts);
  const StrataFrame& frame = problem.frame();
  double total_weight = 0.0;
  for (std::size_t i : frame.label_order()) total_weight += frame[i].weight;
  const double share = problem.sample_size() / total_weight;

  Allocation alloc;
  alloc.take_set = StratumSet(frame.size());
  alloc.values.resize(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) alloc.values[i] = frame[i].weight * share;
  alloc.objective = inverse_square_sum(frame, alloc.values);
  apply_rounding(alloc, opts.round_mode);
  return alloc;
}

LowerProblem to_lower(const MinCostProblem& problem) {
  const StrataFrame& frame = problem.frame();
  std::vector<Stratum> rows(frame.rows().begin(), frame.rows().end());
  for (Stratum& row : rows) row.lower = row.weight * row.weight / (row.unit_cost * *row.upper);

  StrataFrame lower_frame(std::move(rows));
  double min_spend = 0.0;
  for (std::size_t i : lower_frame.label_order()) {
    min_spend += detail::spend(lower_frame[i].unit_cost, *lower_frame[i].lower);
  }
  double budget = problem.variance_target() + problem.variance_offset();
  // The feasibility chain was checked on the original scale; differences
  // between sum A^2/M and sum c m are rounding only.
  if (problem.variance_target() <= problem.min_variance() || budget < min_spend) {
    budget = min_spend;
  }
  return LowerProblem(std::move(lower_frame), budget);
}

Allocation from_lower(const MinCostProblem& problem, const Allocation& lower_solution) {
  const StrataFrame& frame = problem.frame();
  Allocation alloc;
  alloc.take_set = lower_solution.take_set;
  alloc.values.resize(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const Stratum& row = frame[i];
    if (alloc.take_set.contains(i)) {
      alloc.values[i] = *row.upper;
    } else {
      const double x = row.weight * row.weight / (row.unit_cost * lower_solution.values[i]);
      alloc.values[i] = std::min(x, *row.upper);
    }
  }
  alloc.objective = cost(frame, problem.overhead_cost(), alloc.values);
  alloc.dual_lambda = lower_solution.dual_lambda;
  alloc.dual_mu = lower_solution.dual_mu;
  return alloc;
}

Solution solve_min_cost(const MinCostProblem& problem, const SolveOptions& opts) {
  SolveOptions inner = opts;
  inner.round_mode = RoundMode::kNone;
  Solution lower = lrna(to_lower(problem), inner);

  Solution out;
  out.allocation = from_lower(problem, lower.allocation);
  out.trace = std::move(lower.trace);
  apply_rounding(out.allocation, opts.round_mode);
  return out;
}

}  // namespace stratalloc
