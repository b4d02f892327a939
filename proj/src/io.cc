#include "stratalloc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"

namespace stratalloc::io {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& message) { throw Error(ErrorCode::kParse, message); }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_record(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(ch);
      }
    } else if (ch == '"' && trim(current).empty()) {
      current.clear();
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(was_quoted ? current : std::string(trim(current)));
      current.clear();
      was_quoted = false;
    } else {
      current.push_back(ch);
    }
  }
  if (quoted) fail("line " + std::to_string(line_no) + ": unterminated quoted field");
  fields.push_back(was_quoted ? current : std::string(trim(current)));
  return fields;
}

std::vector<std::string> lines_of(std::string_view text) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.emplace_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

bool blank(std::string_view line) { return trim(line).empty(); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_json_path(const std::filesystem::path& path) { return path.extension() == ".json"; }

std::optional<double>* column_slot(TableRow& row, std::string_view column) {
  if (column == "A") return &row.weight;
  if (column == "c") return &row.unit_cost;
  if (column == "m") return &row.lower;
  if (column == "M") return &row.upper;
  if (column == "N") return &row.population;
  if (column == "S") return &row.stddev;
  return nullptr;
}

const std::set<std::string, std::less<>> kScalars = {"Vt", "V", "A0", "c0", "n"};

double json_number(const json& value, const std::string& what) {
  if (!value.is_number()) fail(what + ": expected a number");
  const double v = value.get<double>();
  if (!std::isfinite(v)) fail(what + ": not a finite number");
  return v;
}

std::string json_label(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return value.dump();
  fail("stratum label must be a string or an integer");
}

json parse_json_text(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

double parse_number(std::string_view cell, std::string_view what) {
  const std::string_view s = trim(cell);
  double value = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value, std::chars_format::general);
  if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
    fail(std::string(what) + ": '" + std::string(s) + "' is not a finite number");
  }
  return value;
}

InputTable parse_csv(std::string_view text) {
  const std::vector<std::string> lines = lines_of(text);
  std::size_t line_no = 0;
  while (line_no < lines.size() && blank(lines[line_no])) ++line_no;
  if (line_no == lines.size()) fail("CSV input is empty: a header row is required");

  const std::vector<std::string> header = split_record(lines[line_no], line_no + 1);
  if (header.empty() || header[0] != "stratum") fail("CSV header must start with 'stratum'");
  std::set<std::string> seen;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (!seen.insert(header[j]).second) fail("CSV header repeats column '" + header[j] + "'");
    TableRow probe;
    if (j > 0 && column_slot(probe, header[j]) == nullptr) {
      fail("CSV header has unknown column '" + header[j] + "'");
    }
  }

  InputTable table;
  for (++line_no; line_no < lines.size(); ++line_no) {
    if (blank(lines[line_no])) continue;
    const std::vector<std::string> cells = split_record(lines[line_no], line_no + 1);
    if (cells.size() != header.size()) {
      fail("line " + std::to_string(line_no + 1) + ": expected " + std::to_string(header.size()) +
           " fields, got " + std::to_string(cells.size()));
    }
    TableRow row;
    row.label = cells[0];
    for (std::size_t j = 1; j < cells.size(); ++j) {
      if (cells[j].empty()) continue;
      *column_slot(row, header[j]) =
          parse_number(cells[j], "line " + std::to_string(line_no + 1) + ", column " + header[j]);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

InputTable parse_json(std::string_view text) {
  const json doc = parse_json_text(text);
  if (!doc.is_object()) fail("JSON input must be an object");
  InputTable table;
  for (const auto& [key, value] : doc.items()) {
    if (key == "strata") continue;
    if (!kScalars.count(key)) fail("unknown top-level key '" + key + "'");
    table.scalars[key] = json_number(value, key);
  }
  if (!doc.contains("strata") || !doc["strata"].is_array()) {
    fail("JSON input needs a 'strata' array");
  }
  for (const json& item : doc["strata"]) {
    if (!item.is_object()) fail("each stratum must be an object");
    if (!item.contains("stratum")) fail("stratum entry without a 'stratum' label");
    TableRow row;
    row.label = json_label(item["stratum"]);
    for (const auto& [key, value] : item.items()) {
      if (key == "stratum") continue;
      std::optional<double>* slot = column_slot(row, key);
      if (slot == nullptr) fail("stratum '" + row.label + "': unknown field '" + key + "'");
      if (value.is_null()) continue;
      *slot = json_number(value, "stratum '" + row.label + "', field " + key);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

InputTable read_table(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  return is_json_path(path) ? parse_json(text) : parse_csv(text);
}

FrameInput to_strata(const InputTable& table, bool from_srswor) {
  FrameInput out;
  out.rows.reserve(table.rows.size());
  std::vector<double> population, stddev;
  for (const TableRow& in : table.rows) {
    Stratum row;
    row.label = in.label;
    row.unit_cost = in.unit_cost.value_or(1.0);
    row.lower = in.lower;
    row.upper = in.upper;
    row.population = in.population;
    row.stddev = in.stddev;
    if (from_srswor) {
      if (in.weight) fail("stratum '" + in.label + "': A must be absent when derived from N and S");
      if (!in.population || !in.stddev) {
        fail("stratum '" + in.label + "': N and S are required to derive A");
      }
      population.push_back(*in.population);
      stddev.push_back(*in.stddev);
    } else {
      if (!in.weight) fail("stratum '" + in.label + "': missing A");
      row.weight = *in.weight;
    }
    out.rows.push_back(std::move(row));
  }
  if (from_srswor) {
    SrsworParams params = srswor_params(population, stddev);
    for (std::size_t i = 0; i < out.rows.size(); ++i) out.rows[i].weight = params.weights[i];
    out.variance_offset = params.offset;
  }
  return out;
}

std::map<std::string, double> parse_allocation_csv(std::string_view text) {
  const std::vector<std::string> lines = lines_of(text);
  std::size_t line_no = 0;
  while (line_no < lines.size() && blank(lines[line_no])) ++line_no;
  if (line_no == lines.size()) fail("allocation file is empty");
  const std::vector<std::string> header = split_record(lines[line_no], line_no + 1);
  if (header.size() != 2 || header[0] != "stratum" || header[1] != "value") {
    fail("allocation CSV header must be 'stratum,value'");
  }
  std::map<std::string, double> values;
  for (++line_no; line_no < lines.size(); ++line_no) {
    if (blank(lines[line_no])) continue;
    const std::vector<std::string> cells = split_record(lines[line_no], line_no + 1);
    if (cells.size() != 2) fail("line " + std::to_string(line_no + 1) + ": expected 2 fields");
    const double v = parse_number(cells[1], "line " + std::to_string(line_no + 1));
    if (!values.emplace(cells[0], v).second) fail("duplicate stratum '" + cells[0] + "'");
  }
  return values;
}

std::map<std::string, double> parse_allocation_json(std::string_view text) {
  const json doc = parse_json_text(text);
  std::map<std::string, double> values;
  if (doc.is_object() && doc.contains("values") && doc["values"].is_object()) {
    for (const auto& [label, value] : doc["values"].items()) {
      values[label] = json_number(value, "value of '" + label + "'");
    }
    return values;
  }
  if (doc.is_object() && doc.contains("allocation") && doc["allocation"].is_array()) {
    for (const json& item : doc["allocation"]) {
      if (!item.is_object() || !item.contains("stratum") || !item.contains("value")) {
        fail("allocation entries need 'stratum' and 'value'");
      }
      const std::string label = json_label(item["stratum"]);
      if (!values.emplace(label, json_number(item["value"], "value of '" + label + "'")).second) {
        fail("duplicate stratum '" + label + "'");
      }
    }
    return values;
  }
  fail("allocation JSON needs a 'values' object or an 'allocation' array");
}

std::map<std::string, double> read_allocation(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  return is_json_path(path) ? parse_allocation_json(text) : parse_allocation_csv(text);
}

std::vector<double> align(const StrataFrame& frame, const std::map<std::string, double>& values) {
  if (values.size() != frame.size()) {
    fail("allocation has " + std::to_string(values.size()) + " strata, problem has " +
         std::to_string(frame.size()));
  }
  std::vector<double> out(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    auto it = values.find(frame[i].label);
    if (it == values.end()) fail("allocation lacks stratum '" + frame[i].label + "'");
    out[i] = it->second;
  }
  return out;
}

}  // namespace stratalloc::io
