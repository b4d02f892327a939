#pragma once

// Strata tables and allocation files.
//
// CSV: a header row is required; columns are a subset of
//   stratum,A,c,m,M,N,S
// with `stratum` first. UTF-8, `.` as decimal separator, no thousands
// separators. Empty cells leave optional columns unset; c defaults to 1.
//
// JSON: {"strata": [{"stratum": "a", "A": 1.5, "c": 2, ...}, ...],
//        "Vt": ..., "V": ..., "A0": ..., "c0": ..., "n": ...}
// with every top-level scalar optional.
//
// Numeric cells must parse as finite reals; NaN and infinities are rejected.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stratalloc/core.hpp"

namespace stratalloc::io {

struct TableRow {
  std::string label;
  std::optional<double> weight;  // A
  std::optional<double> unit_cost;
  std::optional<double> lower;
  std::optional<double> upper;
  std::optional<double> population;
  std::optional<double> stddev;
};

struct InputTable {
  std::vector<TableRow> rows;
  std::map<std::string, double> scalars;  // Vt, V, A0, c0, n
};

InputTable parse_csv(std::string_view text);
InputTable parse_json(std::string_view text);

/// Dispatches on the extension: `.json` is JSON, anything else CSV.
InputTable read_table(const std::filesystem::path& path);

struct FrameInput {
  std::vector<Stratum> rows;
  std::optional<double> variance_offset;  // set when derived from N and S
};

/// Builds strata rows. With `from_srswor` the A column must be absent and
/// A_h = N_h S_h, A_0 = sum_h N_h S_h^2 are derived from the N and S columns.
FrameInput to_strata(const InputTable& table, bool from_srswor);

/// Reads a candidate allocation keyed by stratum label: either a CSV with
/// header `stratum,value`, a JSON object {"values": {"a": 1.0, ...}}, or a
/// solve report (its "allocation" array).
std::map<std::string, double> read_allocation(const std::filesystem::path& path);
std::map<std::string, double> parse_allocation_csv(std::string_view text);
std::map<std::string, double> parse_allocation_json(std::string_view text);

/// Orders a label-keyed allocation by the frame's rows. Every label must be
/// present exactly once.
std::vector<double> align(const StrataFrame& frame, const std::map<std::string, double>& values);

/// Strict finite-real parse of a whole cell.
double parse_number(std::string_view cell, std::string_view what);

}  // namespace stratalloc::io
