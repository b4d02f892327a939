#include "stratalloc/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>
#include <utility>

namespace stratalloc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyFrame: return "EmptyFrame";
    case ErrorCode::kDuplicateLabel: return "DuplicateLabel";
    case ErrorCode::kNonPositiveParameter: return "NonPositiveParameter";
    case ErrorCode::kMissingBound: return "MissingBound";
    case ErrorCode::kBoundExceedsPopulation: return "BoundExceedsPopulation";
    case ErrorCode::kSizeMismatch: return "SizeMismatch";
    case ErrorCode::kNonPositiveAllocation: return "NonPositiveAllocation";
    case ErrorCode::kFullTakeSet: return "FullTakeSet";
    case ErrorCode::kZeroA: return "ZeroA";
    case ErrorCode::kNonPositiveInput: return "NonPositiveInput";
    case ErrorCode::kInvalidProblem: return "InvalidProblem";
    case ErrorCode::kInfeasible: return "Infeasible";
    case ErrorCode::kTooLarge: return "TooLarge";
    case ErrorCode::kUnsupportedDimension: return "UnsupportedDimension";
    case ErrorCode::kInvalidPair: return "InvalidPair";
    case ErrorCode::kNegativeMultiplier: return "NegativeMultiplier";
    case ErrorCode::kParse: return "Parse";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, std::string message, std::string label, std::string field)
    : std::runtime_error(std::move(message)),
      code_(code),
      label_(std::move(label)),
      field_(std::move(field)) {}

namespace {

bool positive(double v) { return std::isfinite(v) && v > 0.0; }

void check_positive(const Stratum& row, double v, const char* field) {
  if (!positive(v)) {
    throw Error(ErrorCode::kNonPositiveParameter,
                "stratum '" + row.label + "': " + field + " must be a finite positive number",
                row.label, field);
  }
}

void check_scalar_finite(double v, const char* field) {
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kNonPositiveParameter,
                std::string(field) + " must be a finite number", {}, field);
  }
}

void check_size(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got) {
    throw Error(ErrorCode::kSizeMismatch, std::string(what) + ": expected " +
                                              std::to_string(expected) + " entries, got " +
                                              std::to_string(got));
  }
}

}  // namespace

void validate(std::span<const Stratum> rows, BoundRequirement requirement) {
  if (rows.empty()) throw Error(ErrorCode::kEmptyFrame, "strata table is empty");

  std::unordered_set<std::string_view> seen;
  seen.reserve(rows.size());
  for (const Stratum& row : rows) {
    if (!seen.insert(row.label).second) {
      throw Error(ErrorCode::kDuplicateLabel, "duplicate stratum label '" + row.label + "'",
                  row.label);
    }
    check_positive(row, row.weight, "A");
    check_positive(row, row.unit_cost, "c");
    if (row.lower) check_positive(row, *row.lower, "m");
    if (row.upper) check_positive(row, *row.upper, "M");
    if (row.population) check_positive(row, *row.population, "N");
    if (row.stddev && !(std::isfinite(*row.stddev) && *row.stddev >= 0.0)) {
      throw Error(ErrorCode::kNonPositiveParameter,
                  "stratum '" + row.label + "': S must be a finite non-negative number",
                  row.label, "S");
    }
    if (row.upper && row.population && *row.upper > *row.population) {
      throw Error(ErrorCode::kBoundExceedsPopulation,
                  "stratum '" + row.label + "': upper bound M exceeds stratum size N",
                  row.label, "M");
    }
  }

  for (const Stratum& row : rows) {
    const bool missing = (requirement == BoundRequirement::kLower && !row.lower) ||
                         (requirement == BoundRequirement::kUpper && !row.upper);
    if (missing) {
      throw Error(ErrorCode::kMissingBound,
                  "stratum '" + row.label + "' has no " +
                      (requirement == BoundRequirement::kLower ? "lower bound m" : "upper bound M"),
                  row.label, requirement == BoundRequirement::kLower ? "m" : "M");
    }
  }
}

StrataFrame::StrataFrame(std::vector<Stratum> rows) : rows_(std::move(rows)) {
  validate(rows_);
  order_.resize(rows_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::sort(order_.begin(), order_.end(),
            [this](std::size_t a, std::size_t b) { return rows_[a].label < rows_[b].label; });
}

std::optional<std::size_t> StrataFrame::find(std::string_view label) const {
  auto it = std::lower_bound(order_.begin(), order_.end(), label,
                             [this](std::size_t i, std::string_view l) { return rows_[i].label < l; });
  if (it != order_.end() && rows_[*it].label == label) return *it;
  return std::nullopt;
}

void StrataFrame::require(BoundRequirement requirement) const {
  for (std::size_t i : order_) {
    const Stratum& row = rows_[i];
    if (requirement == BoundRequirement::kLower && !row.lower) {
      throw Error(ErrorCode::kMissingBound, "stratum '" + row.label + "' has no lower bound m",
                  row.label, "m");
    }
    if (requirement == BoundRequirement::kUpper && !row.upper) {
      throw Error(ErrorCode::kMissingBound, "stratum '" + row.label + "' has no upper bound M",
                  row.label, "M");
    }
  }
}

StratumSet::StratumSet(std::size_t universe, std::initializer_list<std::size_t> members)
    : bits_(universe, false) {
  for (std::size_t i : members) insert(i);
}

StratumSet StratumSet::full(std::size_t universe) {
  StratumSet s(universe);
  s.bits_.assign(universe, true);
  s.count_ = universe;
  return s;
}

void StratumSet::insert(std::size_t i) {
  if (!bits_[i]) {
    bits_[i] = true;
    ++count_;
  }
}

void StratumSet::erase(std::size_t i) {
  if (bits_[i]) {
    bits_[i] = false;
    --count_;
  }
}

bool StratumSet::is_subset_of(const StratumSet& other) const {
  if (other.universe() != universe()) return false;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !other.bits_[i]) return false;
  }
  return true;
}

std::vector<std::size_t> StratumSet::members() const {
  std::vector<std::size_t> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(i);
  }
  return out;
}

std::vector<std::string> labels_of(const StrataFrame& frame, const StratumSet& set) {
  std::vector<std::string> out;
  out.reserve(set.size());
  for (std::size_t i : frame.label_order()) {
    if (set.contains(i)) out.push_back(frame[i].label);
  }
  return out;
}

StratumSet set_from_labels(const StrataFrame& frame, std::span<const std::string> labels) {
  StratumSet set(frame.size());
  for (const std::string& label : labels) {
    auto i = frame.find(label);
    if (!i) throw Error(ErrorCode::kInvalidPair, "unknown stratum label '" + label + "'", label);
    set.insert(*i);
  }
  return set;
}

StratumSet SolveTrace::take_set_at(std::size_t r, std::size_t universe) const {
  StratumSet set(universe);
  for (std::size_t k = 0; k < r && k < steps.size(); ++k) {
    for (std::size_t i : steps[k].added) set.insert(i);
  }
  return set;
}

LowerProblem::LowerProblem(StrataFrame frame, double budget)
    : frame_(std::move(frame)), budget_(budget), min_spend_(0.0) {
  frame_.require(BoundRequirement::kLower);
  check_scalar_finite(budget_, "Vt");
  for (std::size_t i : frame_.label_order()) {
    min_spend_ += detail::spend(frame_[i].unit_cost, *frame_[i].lower);
  }
  if (budget_ < min_spend_) {
    throw Error(ErrorCode::kInfeasible,
                "budget Vt is below sum c_h m_h: no allocation meets the lower bounds", {}, "Vt");
  }
}

MinCostProblem::MinCostProblem(StrataFrame frame, double variance_target,
                               double variance_offset, double overhead_cost)
    : frame_(std::move(frame)),
      variance_target_(variance_target),
      variance_offset_(variance_offset),
      overhead_cost_(overhead_cost),
      min_variance_(0.0) {
  frame_.require(BoundRequirement::kUpper);
  check_scalar_finite(variance_target_, "V");
  check_scalar_finite(variance_offset_, "A0");
  check_scalar_finite(overhead_cost_, "c0");
  if (variance_target_ < 0.0) {
    throw Error(ErrorCode::kNonPositiveParameter, "V must be non-negative", {}, "V");
  }
  if (overhead_cost_ < 0.0) {
    throw Error(ErrorCode::kNonPositiveParameter, "c0 must be non-negative", {}, "c0");
  }
  double floor = 0.0;
  for (std::size_t i : frame_.label_order()) {
    const Stratum& row = frame_[i];
    floor += row.weight * row.weight / *row.upper;
  }
  min_variance_ = floor - variance_offset_;
  if (min_variance_ < 0.0) {
    // Census bounds (M_h = N_h) with SRSWOR parameters give exactly zero;
    // accept the rounding residue of that case.
    if (min_variance_ >= -1e-12 * std::max(floor, std::abs(variance_offset_))) {
      min_variance_ = 0.0;
    } else {
      throw Error(ErrorCode::kInvalidProblem,
                  "sum A_h^2/M_h - A0 is negative: the variance offset is inconsistent with the "
                  "bounds",
                  {}, "A0");
    }
  }
  if (variance_target_ < min_variance_) {
    throw Error(ErrorCode::kInfeasible,
                "V is below sum A_h^2/M_h - A0: the variance target cannot be met within the "
                "upper bounds",
                {}, "V");
  }
}

ClassicalProblem::ClassicalProblem(StrataFrame frame, double sample_size)
    : frame_(std::move(frame)), sample_size_(sample_size) {
  if (!positive(sample_size_)) {
    throw Error(ErrorCode::kNonPositiveParameter, "n must be a finite positive number", {}, "n");
  }
}

UpperProblem::UpperProblem(StrataFrame frame, double sample_size)
    : frame_(std::move(frame)), sample_size_(sample_size), capacity_(0.0) {
  frame_.require(BoundRequirement::kUpper);
  check_scalar_finite(sample_size_, "n");
  for (std::size_t i : frame_.label_order()) capacity_ += *frame_[i].upper;
  if (sample_size_ <= 0.0) {
    throw Error(ErrorCode::kInfeasible, "n must be positive", {}, "n");
  }
  if (sample_size_ > capacity_) {
    throw Error(ErrorCode::kInfeasible, "n exceeds the sum of the upper bounds M_h", {}, "n");
  }
}

double variance(const StrataFrame& frame, double offset, std::span<const double> x) {
  check_size(frame.size(), x.size(), "allocation");
  double total = 0.0;
  for (std::size_t i : frame.label_order()) {
    if (!(x[i] > 0.0)) {
      throw Error(ErrorCode::kNonPositiveAllocation,
                  "allocation for stratum '" + frame[i].label + "' is not positive",
                  frame[i].label);
    }
    total += frame[i].weight * frame[i].weight / x[i];
  }
  return total - offset;
}

double cost(const StrataFrame& frame, double overhead, std::span<const double> x) {
  check_size(frame.size(), x.size(), "allocation");
  double total = 0.0;
  for (std::size_t i : frame.label_order()) total += frame[i].unit_cost * x[i];
  return overhead + total;
}

double s_value(const LowerProblem& problem, const StratumSet& take_set) {
  const StrataFrame& frame = problem.frame();
  check_size(frame.size(), take_set.universe(), "take-set");
  if (take_set.is_full()) {
    throw Error(ErrorCode::kFullTakeSet, "s is undefined when every stratum is in the take-set");
  }
  double spent = 0.0;
  double free_mass = 0.0;
  for (std::size_t i : frame.label_order()) {
    if (take_set.contains(i)) {
      spent += detail::spend(frame[i].unit_cost, *frame[i].lower);
    } else {
      free_mass += detail::mass(frame[i].weight, frame[i].unit_cost);
    }
  }
  return (problem.budget() - spent) / free_mass;
}

std::vector<double> candidate(const LowerProblem& problem, const StratumSet& take_set) {
  const StrataFrame& frame = problem.frame();
  check_size(frame.size(), take_set.universe(), "take-set");
  std::vector<double> z(frame.size());
  if (take_set.is_full()) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = problem.lower(i);
    return z;
  }
  const double s = s_value(problem, take_set);
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = take_set.contains(i) ? problem.lower(i)
                                : detail::ratio(frame[i].weight, frame[i].unit_cost) * s;
  }
  return z;
}

SrsworParams srswor_params(std::span<const double> population, std::span<const double> stddev) {
  check_size(population.size(), stddev.size(), "S column");
  SrsworParams out;
  out.weights.resize(population.size());
  for (std::size_t i = 0; i < population.size(); ++i) {
    const double n = population[i];
    const double s = stddev[i];
    if (!positive(n)) throw Error(ErrorCode::kNonPositiveInput, "N must be positive", {}, "N");
    if (!(std::isfinite(s) && s >= 0.0)) {
      throw Error(ErrorCode::kNonPositiveInput, "S must be non-negative", {}, "S");
    }
    out.weights[i] = n * s;
    if (out.weights[i] == 0.0) {
      throw Error(ErrorCode::kZeroA, "S_h = 0 gives a degenerate stratum with A_h = 0", {}, "S");
    }
    out.offset += n * s * s;
  }
  return out;
}

std::vector<double> lower_bounds_from_precision(std::span<const double> population,
                                                std::span<const double> stddev,
                                                std::span<const double> max_variance) {
  check_size(population.size(), stddev.size(), "S column");
  check_size(population.size(), max_variance.size(), "R column");
  std::vector<double> m(population.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double n = population[i];
    const double s = stddev[i];
    const double r = max_variance[i];
    if (!positive(n) || !positive(s) || !positive(r)) {
      throw Error(ErrorCode::kNonPositiveInput, "N, S and R must all be positive");
    }
    m[i] = n * n * s * s / (r + n * s * s);
  }
  return m;
}

}  // namespace stratalloc
