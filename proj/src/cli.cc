#include "stratalloc/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <variant>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stratalloc/core.hpp"
#include "stratalloc/io.hpp"
#include "stratalloc/solvers.hpp"
#include "stratalloc/verify.hpp"

namespace stratalloc::cli {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

enum class Kind { kMinCost, kLower, kClassical, kUpper };

struct CommonArgs {
  std::string kind;
  std::vector<std::string> inputs;
  std::optional<double> vt, v, a0, c0, n;
  bool from_srswor = false;
  std::optional<double> tol;
};

struct SolveArgs {
  bool trace = false;
  bool duals = false;
  std::string round = "none";
  std::size_t jobs = 1;
  std::string output_dir;
};

struct VerifyArgs {
  std::string allocation;
};

struct OracleArgs {
  bool compare = false;
  std::size_t grid = 0;
  std::size_t zoom = 0;
};

using AnyProblem = std::variant<LowerProblem, MinCostProblem, ClassicalProblem, UpperProblem>;

struct Loaded {
  Kind kind;
  AnyProblem problem;
  Json parameters;

  const StrataFrame& frame() const {
    return std::visit([](const auto& p) -> const StrataFrame& { return p.frame(); }, problem);
  }
};

[[noreturn]] void usage_error(const std::string& message) {
  throw Error(ErrorCode::kParse, message);
}

Kind parse_kind(const std::string& kind) {
  if (kind == "mincost") return Kind::kMinCost;
  if (kind == "lower") return Kind::kLower;
  if (kind == "classical") return Kind::kClassical;
  if (kind == "upper") return Kind::kUpper;
  usage_error("unknown problem kind '" + kind + "'");
}

const char* kind_name(Kind kind) {
  switch (kind) {
    case Kind::kMinCost: return "mincost";
    case Kind::kLower: return "lower";
    case Kind::kClassical: return "classical";
    case Kind::kUpper: return "upper";
  }
  return "";
}

double finite_flag(double v, const char* flag) {
  if (!std::isfinite(v)) usage_error(std::string(flag) + " must be a finite number");
  return v;
}

std::optional<double> scalar(const std::optional<double>& flag, const io::InputTable& table,
                             const char* key, const char* flag_name) {
  if (flag) return finite_flag(*flag, flag_name);
  auto it = table.scalars.find(key);
  if (it != table.scalars.end()) return it->second;
  return std::nullopt;
}

double required(const std::optional<double>& value, const char* flag_name, Kind kind) {
  if (!value) {
    usage_error(std::string("kind '") + kind_name(kind) + "' needs " + flag_name);
  }
  return *value;
}

double resolve_tol(const std::optional<double>& flag, double fallback) {
  double tol = fallback;
  if (const char* env = std::getenv("STRATALLOC_TOL"); env != nullptr && *env != '\0') {
    tol = io::parse_number(env, "STRATALLOC_TOL");
  }
  if (flag) tol = finite_flag(*flag, "--tol");
  if (tol < 0.0) usage_error("tolerance must be non-negative");
  return tol;
}

Loaded load(const CommonArgs& args, const std::string& path) {
  const Kind kind = parse_kind(args.kind);
  const io::InputTable table = io::read_table(path);
  io::FrameInput input = io::to_strata(table, args.from_srswor);
  StrataFrame frame(std::move(input.rows));

  Json params = Json::object();
  switch (kind) {
    case Kind::kLower: {
      const double vt = required(scalar(args.vt, table, "Vt", "--vt"), "--vt", kind);
      params["Vt"] = vt;
      return {kind, LowerProblem(std::move(frame), vt), params};
    }
    case Kind::kMinCost: {
      const double v = required(scalar(args.v, table, "V", "--v"), "--v", kind);
      std::optional<double> a0 = scalar(args.a0, table, "A0", "--a0");
      if (input.variance_offset) {
        if (a0) usage_error("A0 is derived by --from-srswor and must not be given");
        a0 = input.variance_offset;
      }
      const double c0 = scalar(args.c0, table, "c0", "--c0").value_or(0.0);
      params["V"] = v;
      params["A0"] = a0.value_or(0.0);
      params["c0"] = c0;
      return {kind, MinCostProblem(std::move(frame), v, a0.value_or(0.0), c0), params};
    }
    case Kind::kClassical: {
      const double n = required(scalar(args.n, table, "n", "--n"), "--n", kind);
      params["n"] = n;
      return {kind, ClassicalProblem(std::move(frame), n), params};
    }
    case Kind::kUpper: {
      const double n = required(scalar(args.n, table, "n", "--n"), "--n", kind);
      params["n"] = n;
      return {kind, UpperProblem(std::move(frame), n), params};
    }
  }
  usage_error("unreachable");
}

Json allocation_json(const StrataFrame& frame, const std::vector<double>& values,
                     const std::optional<std::vector<double>>& rounded = std::nullopt) {
  Json out = Json::array();
  for (std::size_t i : frame.label_order()) {
    Json entry = {{"stratum", frame[i].label}, {"value", values[i]}};
    if (rounded) entry["rounded"] = (*rounded)[i];
    out.push_back(std::move(entry));
  }
  return out;
}

Json labels_json(const StrataFrame& frame, const StratumSet& set) {
  Json out = Json::array();
  for (const std::string& label : labels_of(frame, set)) out.push_back(label);
  return out;
}

Json trace_json(const StrataFrame& frame, const SolveTrace& trace) {
  Json out = Json::array();
  std::size_t taken = 0;
  for (std::size_t r = 0; r < trace.steps.size(); ++r) {
    const TraceStep& step = trace.steps[r];
    StratumSet added(frame.size());
    for (std::size_t i : step.added) added.insert(i);
    Json entry = {{"iteration", r + 1}, {"take_set_size", taken}};
    entry["s"] = step.s_value ? Json(*step.s_value) : Json(nullptr);
    entry["added"] = labels_json(frame, added);
    out.push_back(std::move(entry));
    taken += step.added.size();
  }
  return out;
}

Json verdict_json(const StrataFrame& frame, const Verdict& verdict) {
  Json out = {{"accepted", verdict.accepted}, {"reason", std::string(to_string(verdict.reason))}};
  if (!verdict.label.empty()) out["stratum"] = verdict.label;
  if (verdict.value) out["value"] = *verdict.value;
  if (verdict.take_set) out["take_set"] = labels_json(frame, *verdict.take_set);
  if (verdict.accepted) out["all_at_bound"] = verdict.all_at_bound;
  return out;
}

Json header(const Loaded& loaded) {
  return {{"kind", kind_name(loaded.kind)},
          {"parameters", loaded.parameters},
          {"strata", loaded.frame().size()}};
}

std::string render(const Json& report) { return report.dump(2) + "\n"; }

std::string solve_one(const CommonArgs& common, const SolveArgs& args, const std::string& path) {
  const Loaded loaded = load(common, path);
  const StrataFrame& frame = loaded.frame();

  SolveOptions opts;
  opts.tol = resolve_tol(common.tol, 0.0);
  opts.trace = args.trace;
  opts.duals = args.duals;
  if (args.round == "ceil") {
    opts.round_mode = RoundMode::kCeil;
  } else if (args.round != "none") {
    usage_error("--round must be 'none' or 'ceil'");
  }

  Solution solution;
  switch (loaded.kind) {
    case Kind::kLower: solution = lrna(std::get<LowerProblem>(loaded.problem), opts); break;
    case Kind::kMinCost:
      solution = solve_min_cost(std::get<MinCostProblem>(loaded.problem), opts);
      break;
    case Kind::kClassical:
      solution.allocation = neyman(std::get<ClassicalProblem>(loaded.problem), opts);
      break;
    case Kind::kUpper: solution = rna(std::get<UpperProblem>(loaded.problem), opts); break;
  }
  const Allocation& alloc = solution.allocation;

  Json report = header(loaded);
  report["allocation"] = allocation_json(frame, alloc.values, alloc.rounded);
  report["take_set"] = labels_json(frame, alloc.take_set);
  const bool is_cost = loaded.kind == Kind::kMinCost;
  report["objective"] = {{"name", is_cost ? "cost" : "variance"}, {"value", alloc.objective}};

  if (loaded.kind == Kind::kMinCost) {
    const auto& problem = std::get<MinCostProblem>(loaded.problem);
    report["variance"] = variance(frame, problem.variance_offset(), alloc.values);
    if (alloc.rounded) {
      report["rounded"] = {
          {"cost", cost(frame, problem.overhead_cost(), *alloc.rounded)},
          {"variance", variance(frame, problem.variance_offset(), *alloc.rounded)}};
    }
  } else if (alloc.rounded) {
    report["rounded"] = {{"variance", variance(frame, 0.0, *alloc.rounded)}};
  }

  if (args.duals) {
    Json duals = Json::object();
    duals["lambda"] = alloc.dual_lambda ? Json(*alloc.dual_lambda) : Json(nullptr);
    Json mu = Json::object();
    if (alloc.dual_mu) {
      for (std::size_t i : frame.label_order()) mu[frame[i].label] = (*alloc.dual_mu)[i];
    }
    duals["mu"] = alloc.dual_mu ? mu : Json(nullptr);
    report["duals"] = std::move(duals);
  }
  if (args.trace) report["trace"] = trace_json(frame, solution.trace);
  return render(report);
}

Verdict verify_classical(const ClassicalProblem& problem, std::span<const double> x, double tol) {
  const StrataFrame& frame = problem.frame();
  double total = 0.0;
  for (std::size_t i : frame.label_order()) total += x[i];
  const double residual = total - problem.sample_size();
  if (std::abs(residual) > tol * problem.sample_size()) {
    return Verdict::reject(VerdictReason::kEqualityResidual, {}, residual);
  }
  const Allocation best = neyman(problem);
  for (std::size_t i : frame.label_order()) {
    if (std::abs(x[i] - best.values[i]) > tol * best.values[i]) {
      return Verdict::reject(VerdictReason::kNotCandidateForm, frame[i].label, x[i] - best.values[i]);
    }
  }
  return Verdict::optimal(StratumSet(frame.size()));
}

int verify_cmd(const CommonArgs& common, const VerifyArgs& args, std::ostream& out) {
  if (common.inputs.size() != 1) usage_error("verify takes exactly one --input");
  const Loaded loaded = load(common, common.inputs.front());
  const StrataFrame& frame = loaded.frame();
  const std::vector<double> values = io::align(frame, io::read_allocation(args.allocation));
  const double tol = resolve_tol(common.tol, kDefaultVerifyTol);

  Verdict verdict;
  switch (loaded.kind) {
    case Kind::kLower:
      verdict = check_optimal(std::get<LowerProblem>(loaded.problem), values, tol);
      break;
    case Kind::kMinCost: {
      const auto& problem = std::get<MinCostProblem>(loaded.problem);
      std::optional<Verdict> early;
      for (std::size_t i : frame.label_order()) {
        if (!(values[i] > 0.0) || values[i] > problem.upper(i) * (1.0 + tol)) {
          early = Verdict::reject(VerdictReason::kBoundViolated, frame[i].label, values[i]);
          break;
        }
      }
      if (early) {
        verdict = *early;
        break;
      }
      std::vector<double> z(values.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = frame[i].weight * frame[i].weight / (frame[i].unit_cost * values[i]);
      }
      verdict = check_optimal(to_lower(problem), z, tol);
      break;
    }
    case Kind::kClassical:
      verdict = verify_classical(std::get<ClassicalProblem>(loaded.problem), values, tol);
      break;
    case Kind::kUpper:
      verdict = check_optimal_upper(std::get<UpperProblem>(loaded.problem), values, tol);
      break;
  }
  Json report = header(loaded);
  report["verdict"] = verdict_json(frame, verdict);
  out << render(report);
  return verdict.accepted ? kSuccess : kRejected;
}

int oracle_cmd(const CommonArgs& common, const OracleArgs& args, std::ostream& out) {
  if (common.inputs.size() != 1) usage_error("oracle takes exactly one --input");
  const Loaded loaded = load(common, common.inputs.front());
  const StrataFrame& frame = loaded.frame();
  const bool grid = args.grid > 0;

  Allocation oracle;
  Allocation solver;
  switch (loaded.kind) {
    case Kind::kClassical: usage_error("no oracle for kind 'classical'");
    case Kind::kLower: {
      const auto& problem = std::get<LowerProblem>(loaded.problem);
      if (grid) {
        oracle.values = oracle_grid(problem, args.grid, args.zoom);
        oracle.take_set = StratumSet(frame.size());
        oracle.objective = variance(frame, 0.0, oracle.values);
      } else {
        oracle = oracle_subsets(problem);
      }
      if (args.compare) solver = lrna(problem).allocation;
      break;
    }
    case Kind::kMinCost: {
      const auto& problem = std::get<MinCostProblem>(loaded.problem);
      const LowerProblem lower = to_lower(problem);
      Allocation z;
      if (grid) {
        z.values = oracle_grid(lower, args.grid, args.zoom);
        z.take_set = StratumSet(frame.size());
      } else {
        z = oracle_subsets(lower);
      }
      oracle = from_lower(problem, z);
      if (args.compare) solver = solve_min_cost(problem).allocation;
      break;
    }
    case Kind::kUpper: {
      if (grid) usage_error("the grid oracle covers the lower-bounded kinds only");
      const auto& problem = std::get<UpperProblem>(loaded.problem);
      oracle = oracle_subsets_upper(problem);
      if (args.compare) solver = rna(problem).allocation;
      break;
    }
  }

  Json report = header(loaded);
  report["oracle"] = grid ? "grid" : "subsets";
  report["allocation"] = allocation_json(frame, oracle.values);
  if (!grid) report["take_set"] = labels_json(frame, oracle.take_set);
  report["objective"] = {{"name", loaded.kind == Kind::kMinCost ? "cost" : "variance"},
                         {"value", oracle.objective}};
  if (args.compare) {
    double deviation = 0.0;
    for (std::size_t i = 0; i < frame.size(); ++i) {
      deviation = std::max(deviation,
                           std::abs(oracle.values[i] - solver.values[i]) / std::abs(solver.values[i]));
    }
    report["compare"] = {{"solver", allocation_json(frame, solver.values)},
                         {"max_relative_deviation", deviation}};
  }
  out << render(report);
  return kSuccess;
}

struct JobResult {
  int code = kSuccess;
  std::string report;
  std::string error;
};

JobResult guarded(const std::function<std::string()>& body) {
  JobResult result;
  try {
    result.report = body();
  } catch (const Error& e) {
    result.code = e.is_infeasible() ? kInfeasible : kInvalidInput;
    result.error = std::string(to_string(e.code())) + ": " + e.what();
  } catch (const std::exception& e) {
    result.code = kInvalidInput;
    result.error = e.what();
  }
  return result;
}

int solve_cmd(const CommonArgs& common, const SolveArgs& args, std::ostream& out,
              std::ostream& err) {
  if (common.inputs.empty()) usage_error("solve needs at least one --input");
  const std::size_t count = common.inputs.size();
  if (!args.output_dir.empty()) {
    std::set<std::string> stems;
    for (const std::string& input : common.inputs) {
      if (!stems.insert(fs::path(input).stem().string()).second) {
        usage_error("two inputs share the output name '" + fs::path(input).stem().string() + "'");
      }
    }
    fs::create_directories(args.output_dir);
  }

  std::vector<JobResult> results(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      results[i] = guarded([&] { return solve_one(common, args, common.inputs[i]); });
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(args.jobs, 1, count);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  int code = kSuccess;
  for (std::size_t i = 0; i < count; ++i) {
    const JobResult& r = results[i];
    code = std::max(code, r.code);
    if (r.code != kSuccess) {
      err << (count > 1 ? common.inputs[i] + ": " : std::string()) << r.error << "\n";
      continue;
    }
    if (args.output_dir.empty()) {
      out << r.report;
    } else {
      const fs::path target =
          fs::path(args.output_dir) / (fs::path(common.inputs[i]).stem().string() + ".json");
      std::ofstream file(target, std::ios::binary);
      file << r.report;
      if (!file) {
        err << "cannot write '" << target.string() << "'\n";
        code = std::max<int>(code, kInvalidInput);
      }
    }
  }
  return code;
}

void add_common(CLI::App* cmd, CommonArgs& common, bool many_inputs) {
  cmd->add_option("--kind", common.kind, "Problem kind")
      ->required()
      ->check(CLI::IsMember({"mincost", "lower", "classical", "upper"}));
  auto* input = cmd->add_option("--input", common.inputs, "Strata table (.csv or .json)")->required();
  if (!many_inputs) input->expected(1);
  cmd->add_option("--vt", common.vt, "Budget Vt (lower)");
  cmd->add_option("--v", common.v, "Variance target V (mincost)");
  cmd->add_option("--a0", common.a0, "Variance offset A0 (mincost)");
  cmd->add_option("--c0", common.c0, "Overhead cost c0 (mincost, reporting only)");
  cmd->add_option("--n", common.n, "Total sample size (classical, upper)");
  cmd->add_flag("--from-srswor", common.from_srswor, "Derive A and A0 from the N and S columns");
  cmd->add_option("--tol", common.tol, "Relative comparison tolerance");
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal sample allocation for stratified sampling", "stratalloc"};
  app.require_subcommand(1);

  CommonArgs common;
  SolveArgs solve_args;
  VerifyArgs verify_args;
  OracleArgs oracle_args;

  CLI::App* solve = app.add_subcommand("solve", "Compute an optimal allocation");
  add_common(solve, common, true);
  solve->add_flag("--trace", solve_args.trace, "Report the recursion trace");
  solve->add_flag("--duals", solve_args.duals, "Report the Lagrange multipliers");
  solve->add_option("--round", solve_args.round, "Post-hoc integerization")
      ->check(CLI::IsMember({"none", "ceil"}));
  solve->add_option("--jobs", solve_args.jobs, "Inputs solved concurrently")
      ->check(CLI::PositiveNumber);
  solve->add_option("--output-dir", solve_args.output_dir, "Write one report per input here");

  CLI::App* verify = app.add_subcommand("verify", "Certify a candidate allocation");
  add_common(verify, common, false);
  verify->add_option("--allocation", verify_args.allocation, "Candidate allocation file")
      ->required();

  CLI::App* oracle = app.add_subcommand("oracle", "Run a brute-force oracle");
  add_common(oracle, common, false);
  oracle->add_flag("--compare", oracle_args.compare, "Also run the solver and report deviation");
  oracle->add_option("--grid", oracle_args.grid, "Use the grid oracle at this resolution");
  oracle->add_option("--zoom", oracle_args.zoom, "Grid zoom levels");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kInvalidInput;
  }

  int code = kSuccess;
  const JobResult result = guarded([&]() -> std::string {
    std::ostringstream buffer;
    if (solve->parsed()) {
      code = solve_cmd(common, solve_args, buffer, err);
    } else if (verify->parsed()) {
      code = verify_cmd(common, verify_args, buffer);
    } else {
      code = oracle_cmd(common, oracle_args, buffer);
    }
    return buffer.str();
  });
  if (result.code != kSuccess) {
    err << result.error << "\n";
    return result.code;
  }
  out << result.report;
  return code;
}

}  // namespace stratalloc::cli
