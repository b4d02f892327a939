#pragma once

// Domain types for stratified sample allocation and the primitive
// evaluators shared by the solvers and the verifiers.
//
// Two problem families are modelled:
//
//   minimum cost     minimize  sum_h c_h x_h
//                    s.t.      sum_h A_h^2 / x_h - A_0 = V,   x_h <= M_h
//
//   lower-bounded    minimize  sum_h A_h^2 / z_h
//                    s.t.      sum_h c_h z_h = Vt,            z_h >= m_h
//
// plus the classical fixed-size allocation and its upper-bounded variant.
// The change of variable z_h = A_h^2 / (c_h x_h) maps the first family onto
// the second (see solvers.hpp).
//
// Strata are identified by opaque labels. Every sum over strata runs in
// label-sorted order so results are bit-reproducible regardless of the row
// order of the input table.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stratalloc/error.hpp"

namespace stratalloc {

/// One row of a strata table. Optional columns are only required by the
/// problem kinds that use them.
struct Stratum {
  std::string label;
  double weight = 0.0;     // A_h
  double unit_cost = 1.0;  // c_h
  std::optional<double> lower;       // m_h
  std::optional<double> upper;       // M_h
  std::optional<double> population;  // N_h
  std::optional<double> stddev;      // S_h
};

enum class BoundRequirement { kNone, kLower, kUpper };

/// Throws Error unless the rows form a valid frame and every row carries the
/// bound column named by `requirement`.
void validate(std::span<const Stratum> rows,
              BoundRequirement requirement = BoundRequirement::kNone);

/// Validated, immutable per-stratum parameter table.
class StrataFrame {
 public:
  explicit StrataFrame(std::vector<Stratum> rows);

  std::size_t size() const noexcept { return rows_.size(); }
  const Stratum& operator[](std::size_t i) const { return rows_[i]; }
  std::span<const Stratum> rows() const noexcept { return rows_; }

  /// Row indices sorted by label. All reductions iterate in this order.
  std::span<const std::size_t> label_order() const noexcept { return order_; }

  std::optional<std::size_t> find(std::string_view label) const;

  /// Throws MissingBound for the first (label-ordered) row lacking the column.
  void require(BoundRequirement requirement) const;

 private:
  std::vector<Stratum> rows_;
  std::vector<std::size_t> order_;
};

/// Subset of the strata of one frame, stored as a membership mask over row
/// indices.
class StratumSet {
 public:
  StratumSet() = default;
  explicit StratumSet(std::size_t universe) : bits_(universe, false) {}
  StratumSet(std::size_t universe, std::initializer_list<std::size_t> members);

  static StratumSet full(std::size_t universe);

  bool contains(std::size_t i) const { return bits_[i]; }
  void insert(std::size_t i);
  void erase(std::size_t i);

  std::size_t size() const noexcept { return count_; }
  std::size_t universe() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return count_ == 0; }
  bool is_full() const noexcept { return count_ == bits_.size(); }
  bool is_subset_of(const StratumSet& other) const;

  /// Members in ascending row-index order.
  std::vector<std::size_t> members() const;

  friend bool operator==(const StratumSet&, const StratumSet&) = default;

 private:
  std::vector<bool> bits_;
  std::size_t count_ = 0;
};

/// Labels of the members, label-sorted.
std::vector<std::string> labels_of(const StrataFrame& frame, const StratumSet& set);

/// Throws Error(kInvalidPair) on an unknown label.
StratumSet set_from_labels(const StrataFrame& frame,
                           std::span<const std::string> labels);

/// Lower-bounded problem: minimize sum A_h^2/z_h s.t. sum c_h z_h = Vt,
/// z_h >= m_h. Construction checks Vt >= sum c_h m_h.
class LowerProblem {
 public:
  LowerProblem(StrataFrame frame, double budget);

  const StrataFrame& frame() const noexcept { return frame_; }
  std::size_t size() const noexcept { return frame_.size(); }
  double budget() const noexcept { return budget_; }
  double lower(std::size_t i) const { return *frame_[i].lower; }

  /// sum_h c_h m_h, label order.
  double min_spend() const noexcept { return min_spend_; }

 private:
  StrataFrame frame_;
  double budget_;
  double min_spend_;
};

/// Minimum-cost problem under a fixed variance and per-stratum upper bounds.
/// The overhead cost is carried for reporting only.
class MinCostProblem {
 public:
  MinCostProblem(StrataFrame frame, double variance_target,
                 double variance_offset, double overhead_cost = 0.0);

  const StrataFrame& frame() const noexcept { return frame_; }
  std::size_t size() const noexcept { return frame_.size(); }
  double variance_target() const noexcept { return variance_target_; }
  double variance_offset() const noexcept { return variance_offset_; }
  double overhead_cost() const noexcept { return overhead_cost_; }
  double upper(std::size_t i) const { return *frame_[i].upper; }

  /// sum_h A_h^2/M_h - A_0: the smallest attainable variance.
  double min_variance() const noexcept { return min_variance_; }

 private:
  StrataFrame frame_;
  double variance_target_;
  double variance_offset_;
  double overhead_cost_;
  double min_variance_;
};

/// Classical allocation of a fixed total sample size. Bounds are ignored.
class ClassicalProblem {
 public:
  ClassicalProblem(StrataFrame frame, double sample_size);

  const StrataFrame& frame() const noexcept { return frame_; }
  std::size_t size() const noexcept { return frame_.size(); }
  double sample_size() const noexcept { return sample_size_; }

 private:
  StrataFrame frame_;
  double sample_size_;
};

/// Fixed total sample size with per-stratum upper bounds.
class UpperProblem {
 public:
  UpperProblem(StrataFrame frame, double sample_size);

  const StrataFrame& frame() const noexcept { return frame_; }
  std::size_t size() const noexcept { return frame_.size(); }
  double sample_size() const noexcept { return sample_size_; }
  double upper(std::size_t i) const { return *frame_[i].upper; }

  /// sum_h M_h, label order.
  double capacity() const noexcept { return capacity_; }

 private:
  StrataFrame frame_;
  double sample_size_;
  double capacity_;
};

/// Solution vector. `values` follow the frame's row order; `take_set` holds
/// the strata pinned at their bound.
struct Allocation {
  std::vector<double> values;
  StratumSet take_set;
  double objective = 0.0;
  std::optional<double> dual_lambda;
  std::optional<std::vector<double>> dual_mu;
  std::optional<std::vector<double>> rounded;
};

/// One pass of a recursive solver: the value of the share function at the
/// current take-set (absent once every stratum is taken) and the strata the
/// pass moved into the take-set.
struct TraceStep {
  std::optional<double> s_value;
  std::vector<std::size_t> added;
};

struct SolveTrace {
  std::vector<TraceStep> steps;

  std::size_t iterations() const noexcept { return steps.size(); }

  /// Take-set in force during step `r` (0-based): the union of the strata
  /// added by steps 0..r-1.
  StratumSet take_set_at(std::size_t r, std::size_t universe) const;
};

/// sum_h A_h^2 / x_h - A_0. Throws NonPositiveAllocation if some x_h <= 0.
double variance(const StrataFrame& frame, double offset, std::span<const double> x);

/// c_0 + sum_h c_h x_h.
double cost(const StrataFrame& frame, double overhead, std::span<const double> x);

/// (Vt - sum_{h in L} c_h m_h) / sum_{h not in L} A_h sqrt(c_h).
/// Undefined (throws FullTakeSet) when L covers every stratum.
double s_value(const LowerProblem& problem, const StratumSet& take_set);

/// Strata in the take-set sit at m_h, the rest at (A_h / sqrt(c_h)) s(L).
/// A full take-set returns m without evaluating s.
std::vector<double> candidate(const LowerProblem& problem, const StratumSet& take_set);

struct SrsworParams {
  std::vector<double> weights;
  double offset = 0.0;
};

/// Simple random sampling without replacement within strata:
/// A_h = N_h S_h, A_0 = sum_h N_h S_h^2.
SrsworParams srswor_params(std::span<const double> population,
                           std::span<const double> stddev);

/// Turns per-stratum caps on the variance of the stratum total,
/// (1/n_h - 1/N_h) N_h^2 S_h^2 <= R_h, into minimum sample sizes
/// m_h = N_h^2 S_h^2 / (R_h + N_h S_h^2).
std::vector<double> lower_bounds_from_precision(std::span<const double> population,
                                                std::span<const double> stddev,
                                                std::span<const double> max_variance);

/// lhs <= rhs (1 + tol); exact comparison at tol = 0.
inline bool at_most(double lhs, double rhs, double tol) {
  return tol == 0.0 ? lhs <= rhs : lhs <= rhs * (1.0 + tol);
}

namespace detail {

// Shared per-stratum terms. Solvers and evaluators must use these so the same
// take-set always yields bit-identical numbers.
inline double spend(double unit_cost, double bound) { return unit_cost * bound; }
inline double mass(double weight, double unit_cost) { return weight * std::sqrt(unit_cost); }
inline double ratio(double weight, double unit_cost) { return weight / std::sqrt(unit_cost); }

}  // namespace detail

}  // namespace stratalloc
