#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stratalloc {

enum class ErrorCode {
  kEmptyFrame,
  kDuplicateLabel,
  kNonPositiveParameter,
  kMissingBound,
  kBoundExceedsPopulation,
  kSizeMismatch,
  kNonPositiveAllocation,
  kFullTakeSet,
  kZeroA,
  kNonPositiveInput,
  kInvalidProblem,
  kInfeasible,
  kTooLarge,
  kUnsupportedDimension,
  kInvalidPair,
  kNegativeMultiplier,
  kParse,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. `label` names the offending stratum
/// when there is one, `field` the offending column or scalar.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string label = {},
        std::string field = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& label() const noexcept { return label_; }
  const std::string& field() const noexcept { return field_; }

  /// Infeasibility is a property of the data, everything else is a usage error.
  bool is_infeasible() const noexcept { return code_ == ErrorCode::kInfeasible; }

 private:
  ErrorCode code_;
  std::string label_;
  std::string field_;
};

}  // namespace stratalloc
