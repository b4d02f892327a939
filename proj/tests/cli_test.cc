#include "stratalloc/cli.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace stratalloc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Outcome {
  int code;
  std::string out;
  std::string err;
  json report() const { return json::parse(out); }
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("stratalloc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string file(const std::string& name, const std::string& text) {
    const fs::path path = dir_ / name;
    std::ofstream(path, std::ios::binary) << text;
    return path.string();
  }

  Outcome run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run(args, out, err);
    return {code, out.str(), err.str()};
  }

  std::string two_strata() { return file("two_strata.csv", "stratum,A,c,m\n1,1,1,3\n2,1,1,1\n"); }
  std::string frame() { return file("frame.csv", "stratum,A,c,M\n1,2,1,2\n2,1,4,1\n"); }

  fs::path dir_;
};

std::vector<double> values_of(const json& report) {
  std::vector<double> v;
  for (const json& entry : report["allocation"]) v.push_back(entry["value"].get<double>());
  return v;
}

TEST_F(CliTest, SolveLower) {
  Outcome r = run_cli({"solve", "--kind", "lower", "--vt", "6", "--input", two_strata()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  const json rep = r.report();
  EXPECT_EQ(values_of(rep), (std::vector<double>{3, 3}));
  EXPECT_EQ(rep["take_set"], json::array({"1"}));
  EXPECT_EQ(rep["objective"]["name"], "variance");
  EXPECT_DOUBLE_EQ(rep["objective"]["value"].get<double>(), 2.0 / 3.0);
  EXPECT_EQ(rep["kind"], "lower");
  EXPECT_EQ(rep["parameters"]["Vt"], 6.0);
}

TEST_F(CliTest, SolveMinCost) {
  Outcome r = run_cli({"solve", "--kind", "mincost", "--v", "4", "--a0", "1", "--input", frame()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  const json rep = r.report();
  EXPECT_EQ(values_of(rep), (std::vector<double>{1.6, 0.4}));
  EXPECT_EQ(rep["objective"]["name"], "cost");
  EXPECT_DOUBLE_EQ(rep["objective"]["value"].get<double>(), 3.2);
  EXPECT_DOUBLE_EQ(rep["variance"].get<double>(), 4.0);
}

TEST_F(CliTest, SolveClassicalAndUpper) {
  Outcome r = run_cli({"solve", "--kind", "classical", "--n", "8", "--input",
                       file("c.csv", "stratum,A\n1,1\n2,3\n")});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(values_of(r.report()), (std::vector<double>{2, 6}));

  r = run_cli({"solve", "--kind", "upper", "--n", "4", "--input",
               file("u.csv", "stratum,A,M\n1,3,2\n2,1,10\n")});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(values_of(r.report()), (std::vector<double>{2, 2}));
}

TEST_F(CliTest, ScalarsFromJsonInput) {
  const std::string input = file("p.json", R"({"Vt": 6, "strata": [{"stratum": "1", "A": 1, "m": 3},
                                                               {"stratum": "2", "A": 1, "m": 1}]})");
  Outcome r = run_cli({"solve", "--kind", "lower", "--input", input});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(values_of(r.report()), (std::vector<double>{3, 3}));
  r = run_cli({"solve", "--kind", "lower", "--vt", "4", "--input", input});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(values_of(r.report()), (std::vector<double>{3, 1}));
}

TEST_F(CliTest, TraceDualsAndRounding) {
  Outcome r = run_cli({"solve", "--kind", "lower", "--vt", "6", "--trace", "--duals", "--input", two_strata()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  json rep = r.report();
  ASSERT_EQ(rep["trace"].size(), 2u);
  EXPECT_EQ(rep["trace"][0]["added"], json::array({"1"}));
  EXPECT_EQ(rep["trace"][0]["s"], 3.0);
  EXPECT_DOUBLE_EQ(rep["duals"]["lambda"].get<double>(), 1.0 / 9.0);
  EXPECT_EQ(rep["duals"]["mu"]["2"], 0.0);

  r = run_cli({"solve", "--kind", "mincost", "--v", "4", "--a0", "1", "--round", "ceil", "--input", frame()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  rep = r.report();
  EXPECT_EQ(rep["allocation"][0]["rounded"], 2.0);
  EXPECT_EQ(rep["allocation"][1]["rounded"], 1.0);
  EXPECT_LE(rep["rounded"]["variance"].get<double>(), 4.0);
}

TEST_F(CliTest, SrsworDerivation) {
  // A = (10, 40), A0 = 90; with M = N the floor is 10 + 80 - 90 = 0.
  const std::string input = file("s.csv", "stratum,N,S,M\na,10,1,10\nb,20,2,20\n");
  Outcome r = run_cli({"solve", "--kind", "mincost", "--from-srswor", "--v", "10", "--input", input});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  const json rep = r.report();
  EXPECT_EQ(rep["parameters"]["A0"], 90.0);
  EXPECT_NEAR(rep["variance"].get<double>(), 10.0, 1e-9 * 100.0);
  r = run_cli({"solve", "--kind", "mincost", "--from-srswor", "--v", "10", "--a0", "1", "--input", input});
  EXPECT_EQ(r.code, kInvalidInput);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run_cli({"solve", "--kind", "lower", "--vt", "3", "--input", two_strata()}).code, kInfeasible);
  EXPECT_EQ(run_cli({"solve", "--kind", "lower", "--input", two_strata()}).code, kInvalidInput);
  EXPECT_EQ(run_cli({"solve", "--kind", "bogus", "--vt", "6", "--input", two_strata()}).code, kInvalidInput);
  EXPECT_EQ(run_cli({"solve", "--kind", "lower", "--vt", "6", "--input", file("x.csv", "stratum,A,m\n1,nan,3\n")}).code,
            kInvalidInput);
  EXPECT_EQ(run_cli({"solve", "--kind", "lower", "--vt", "6", "--input", file("y.csv", "stratum,A,m\n1,inf,3\n")}).code,
            kInvalidInput);
  EXPECT_EQ(run_cli({"solve", "--kind", "lower", "--vt", "6", "--input", (dir_ / "nope.csv").string()}).code,
            kInvalidInput);
  EXPECT_EQ(run_cli({"solve", "--kind", "mincost", "--v", "1", "--a0", "1", "--input", frame()}).code, kInfeasible);
  EXPECT_EQ(run_cli({}).code, kInvalidInput);
  EXPECT_EQ(run_cli({"--help"}).code, kSuccess);
}

TEST_F(CliTest, VerifyAcceptsSolverOutput) {
  Outcome solved = run_cli({"solve", "--kind", "lower", "--vt", "6", "--input", two_strata()});
  ASSERT_EQ(solved.code, kSuccess);
  const std::string report = file("report.json", solved.out);
  Outcome r = run_cli({"verify", "--kind", "lower", "--vt", "6", "--input", two_strata(), "--allocation", report});
  EXPECT_EQ(r.code, kSuccess) << r.out << r.err;
  EXPECT_EQ(r.report()["verdict"]["reason"], "Optimal");

  solved = run_cli({"solve", "--kind", "mincost", "--v", "4", "--a0", "1", "--input", frame()});
  r = run_cli({"verify", "--kind", "mincost", "--v", "4", "--a0", "1", "--input", frame(), "--allocation",
               file("m.json", solved.out)});
  EXPECT_EQ(r.code, kSuccess) << r.out << r.err;
}

TEST_F(CliTest, VerifyRejects) {
  const std::string z = file("z.csv", "stratum,value\n1,5\n2,1\n");
  Outcome r = run_cli({"verify", "--kind", "lower", "--vt", "6", "--input", two_strata(), "--allocation", z});
  EXPECT_EQ(r.code, kRejected);
  const json verdict = r.report()["verdict"];
  EXPECT_EQ(verdict["accepted"], false);
  EXPECT_EQ(verdict["reason"], "TakeSetConditionFails");
  EXPECT_EQ(verdict["stratum"], "2");

  r = run_cli({"verify", "--kind", "lower", "--vt", "6", "--input", two_strata(), "--allocation",
               file("bad.csv", "stratum,value\n1,abc\n")});
  EXPECT_EQ(r.code, kInvalidInput);

  r = run_cli({"verify", "--kind", "mincost", "--v", "4", "--a0", "1", "--input", frame(), "--allocation",
               file("over.csv", "stratum,value\n1,3\n2,0.4\n")});
  EXPECT_EQ(r.code, kRejected);
  EXPECT_EQ(r.report()["verdict"]["reason"], "BoundViolated");
}

TEST_F(CliTest, OracleCompareAndCap) {
  Outcome r = run_cli({"oracle", "--kind", "lower", "--vt", "6", "--compare", "--input", two_strata()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  json rep = r.report();
  EXPECT_EQ(values_of(rep), (std::vector<double>{3, 3}));
  EXPECT_LE(rep["compare"]["max_relative_deviation"].get<double>(), 1e-12);

  r = run_cli({"oracle", "--kind", "lower", "--vt", "4", "--input", file("sym.csv", "stratum,A,m\n1,1,1\n2,1,1\n")});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(values_of(r.report()), (std::vector<double>{2, 2}));

  r = run_cli({"oracle", "--kind", "lower", "--vt", "4", "--grid", "100000", "--input", (dir_ / "sym.csv").string()});
  ASSERT_EQ(r.code, kSuccess) << r.err;
  for (double v : values_of(r.report())) EXPECT_NEAR(v, 2.0, 1e-4);

  std::string big = "stratum,A,m\n";
  for (int i = 0; i < 21; ++i) big += "s" + std::to_string(i) + ",1,1\n";
  r = run_cli({"oracle", "--kind", "lower", "--vt", "100", "--input", file("big.csv", big)});
  EXPECT_EQ(r.code, kInvalidInput);

  r = run_cli({"oracle", "--kind", "classical", "--n", "4", "--input", two_strata()});
  EXPECT_EQ(r.code, kInvalidInput);
}

TEST_F(CliTest, OutputIsDeterministic) {
  std::string rows = "stratum,A,c,m\n";
  for (int i = 0; i < 50; ++i) {
    rows += "k" + std::to_string((i * 37) % 50) + "," + std::to_string(1.0 + i * 0.37) + "," +
            std::to_string(0.5 + (i % 7)) + "," + std::to_string(0.1 + (i % 5)) + "\n";
  }
  const std::string input = file("many.csv", rows);
  const std::vector<std::string> args = {"solve", "--kind", "lower", "--vt", "2000", "--trace", "--duals", "--input", input};
  Outcome a = run_cli(args);
  Outcome b = run_cli(args);
  ASSERT_EQ(a.code, kSuccess) << a.err;
  EXPECT_EQ(a.out, b.out);
  // Full-precision shortest round-trip form.
  const nlohmann::ordered_json rep = nlohmann::ordered_json::parse(a.out);
  std::ostringstream again;
  again << rep.dump(2) << "\n";
  EXPECT_EQ(again.str(), a.out);
}

TEST_F(CliTest, BatchJobsMatchSequential) {
  std::vector<std::string> inputs;
  for (int k = 0; k < 6; ++k) {
    inputs.push_back(file("in" + std::to_string(k) + ".csv",
                          "stratum,A,m\na," + std::to_string(k + 1) + ",1\nb,2,1\nc,1,2\n"));
  }
  std::vector<std::string> base = {"solve", "--kind", "lower", "--vt", "10"};
  for (const auto& in : inputs) {
    base.push_back("--input");
    base.push_back(in);
  }
  Outcome seq = run_cli(base);
  std::vector<std::string> par = base;
  par.insert(par.end(), {"--jobs", "4"});
  Outcome conc = run_cli(par);
  ASSERT_EQ(seq.code, kSuccess) << seq.err;
  EXPECT_EQ(seq.out, conc.out);

  std::vector<std::string> to_dir = par;
  to_dir.insert(to_dir.end(), {"--output-dir", (dir_ / "out").string()});
  Outcome written = run_cli(to_dir);
  ASSERT_EQ(written.code, kSuccess) << written.err;
  EXPECT_TRUE(written.out.empty());
  for (int k = 0; k < 6; ++k) {
    std::ifstream in(dir_ / "out" / ("in" + std::to_string(k) + ".json"));
    std::ostringstream text;
    text << in.rdbuf();
    Outcome single = run_cli({"solve", "--kind", "lower", "--vt", "10", "--input", inputs[k]});
    EXPECT_EQ(text.str(), single.out);
  }
}

TEST_F(CliTest, BatchReportsWorstExitCode) {
  const std::string good = two_strata();
  const std::string bad = file("bad.csv", "stratum,A,m\n1,1,5\n2,1,5\n");
  Outcome r = run_cli({"solve", "--kind", "lower", "--vt", "6", "--jobs", "2", "--input", good, "--input", bad});
  EXPECT_EQ(r.code, kInfeasible);
  EXPECT_NE(r.err.find("bad.csv"), std::string::npos);
  EXPECT_EQ(values_of(r.report()), (std::vector<double>{3, 3}));
}

TEST_F(CliTest, ToleranceFromEnvironment) {
  const std::string input = file("t.csv", "stratum,A,m\n1,1,2.9999999999\n2,1,1\n");
  ::setenv("STRATALLOC_TOL", "1e-6", 1);
  Outcome r = run_cli({"solve", "--kind", "lower", "--vt", "6", "--input", input});
  ::unsetenv("STRATALLOC_TOL");
  ASSERT_EQ(r.code, kSuccess) << r.err;
  EXPECT_EQ(r.report()["take_set"], json::array({"1"}));
  r = run_cli({"solve", "--kind", "lower", "--vt", "6", "--input", input});
  EXPECT_EQ(r.report()["take_set"], json::array());
}

TEST_F(CliTest, BinaryExitStatus) {
  const std::string input = file("x.csv", "stratum,A,m\n1,NaN,3\n");
  const std::string cmd = std::string(STRATALLOC_BINARY) + " solve --kind lower --vt 6 --input " + input +
                          " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), kInvalidInput);
}

}  // namespace
}  // namespace stratalloc::cli
