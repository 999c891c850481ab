#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "hcdpi/cli.hpp"

using namespace hcdpi;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("hcdpi_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  std::string fixture() {
    const auto r = run({"generate", "--K", "10", "--n", "46", "--phi", "3.19", "--pi", "0.224,0.466,0.273,0.031,0.004",
                        "--labels", "Minimal,Slight,Moderate,Marked,Massive", "--seed", "5", "--out", path("hist.csv"),
                        "--future-out", path("future.csv")});
    EXPECT_EQ(r.code, 0) << r.err;
    return path("hist.csv");
  }

  fs::path dir_;
};

}  // namespace

TEST(CountsCsv, ParsesLabelsAndCounts) {
  std::istringstream in("study,A,B\ns1,1,2\ns2,3,4\n");
  const auto t = parse_counts_csv(in);
  EXPECT_EQ(t.studies, (std::vector<std::string>{"s1", "s2"}));
  EXPECT_EQ(t.data.labels(), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(t.data.count(1, 1), 4);
}

TEST(CountsCsv, Errors) {
  auto code_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_counts_csv(in);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;  // sentinel: no error
  };
  EXPECT_EQ(code_of("study,A,B\ns1,1,-2\ns2,3,4\n"), ErrorCode::ValidationError);
  EXPECT_EQ(code_of("study,A,B\ns1,1,2\n"), ErrorCode::ValidationError);
  EXPECT_EQ(code_of("study,A\ns1,1\ns2,2\n"), ErrorCode::ValidationError);
  EXPECT_EQ(code_of("study,A,B\ns1,1,2\ns2,3\n"), ErrorCode::ParseError);
  EXPECT_EQ(code_of("study,A,B\ns1,1,x\ns2,3,4\n"), ErrorCode::ParseError);
  EXPECT_EQ(code_of("study,A,B\ns1,1,2.5\ns2,3,4\n"), ErrorCode::ParseError);
  EXPECT_EQ(code_of("study,A,B\ns1,0,0\ns2,3,4\n"), ErrorCode::ValidationError);
  EXPECT_EQ(code_of(""), ErrorCode::ParseError);
  std::istringstream neg("study,A,B\ns1,1,-2\ns2,3,4\n");
  try {
    parse_counts_csv(neg);
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("'B'"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Numbers, SixSignificantDigits) {
  EXPECT_EQ(format_number(20.6866123), "20.6866");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(std::nan("")), "NA");
  EXPECT_EQ(format_number(1234567.0), "1.23457e+06");
}

TEST(IntervalsCsv, RoundTrip) {
  PredictionPoint p{{10.304, 23.1}, {5.29712, 4.1}};
  auto set = make_interval_set("pointwise", p, {1.959964, 1.959964}, {1.959964, 1.959964}, FutureSpec{46, 0.05},
                               {"Minimal", "Slight"});
  std::ostringstream out;
  write_intervals_csv(out, {set});
  std::istringstream in(out.str());
  const auto rows = parse_intervals_csv(in);
  ASSERT_EQ(rows.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    EXPECT_EQ(rows[c].category, set.labels[c]);
    EXPECT_EQ(format_number(rows[c].lower), format_number(set.lower[c]));
    EXPECT_EQ(format_number(rows[c].upper), format_number(set.upper[c]));
    EXPECT_EQ(format_number(rows[c].sep), format_number(set.sep[c]));
    EXPECT_NEAR(rows[c].upper, set.upper[c], 1e-5 * std::abs(set.upper[c]));
  }
}

TEST(IntervalsCsv, EmptyIsHeaderOnly) {
  std::ostringstream out;
  write_intervals_csv(out, {});
  EXPECT_EQ(out.str(), std::string(kIntervalColumns) + "\n");
}

TEST(IntervalsJson, MirrorsCsvSchema) {
  PredictionPoint p{{1.0}, {0.5}};
  const auto set = make_interval_set("x", p, {2.0}, {2.0}, FutureSpec{4, 0.05}, {"A"});
  const auto doc = intervals_json({set}, {{"x", true}});
  const auto& row = doc["intervals"][0];
  for (const auto& key : split(std::string(kIntervalColumns), ',')) EXPECT_TRUE(row.contains(key)) << key;
  EXPECT_EQ(doc["verdicts"][0]["contains"], true);
}

TEST(KeyValues, ParsesAndRejects) {
  std::istringstream in("# comment\nK = 5,10\n\nphi=5 # trailing\n");
  const auto kv = parse_key_values(in);
  EXPECT_EQ(kv.at("K"), "5,10");
  EXPECT_EQ(kv.at("phi"), "5");
  std::istringstream bad("just words\n");
  EXPECT_THROW(parse_key_values(bad), Error);
}

TEST(MethodIds, ParseAndExpand) {
  const auto all = parse_methods({"all"}, {PriorChoice::Kind::HalfCauchy, PriorChoice::Kind::BetaRho});
  EXPECT_EQ(all.size(), 8u + 3u * 2u);
  const auto one = parse_methods({"bayes-scs"}, {PriorChoice::Kind::BetaRho});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(method_id(one[0]), "bayes-scs-beta");
  try {
    parse_methods({"bogus"}, {PriorChoice::Kind::HalfCauchy});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
    EXPECT_NE(std::string(e.what()).find("rank-scs"), std::string::npos);
  }
  const auto dedup = parse_methods({"masr", "masr"}, {PriorChoice::Kind::HalfCauchy});
  EXPECT_EQ(dedup.size(), 1u);
}

TEST_F(CliTest, GenerateWritesFixtureShapedFile) {
  const auto t = parse_counts_csv(fixture());
  EXPECT_EQ(t.data.clusters(), 10u);
  EXPECT_EQ(t.data.categories(), 5u);
  EXPECT_EQ(t.data.labels().front(), "Minimal");
  for (auto n : t.data.cluster_sizes()) EXPECT_GE(n, 46);
  const auto f = parse_counts_csv(path("future.csv"), 1);
  EXPECT_EQ(f.data.total(), 46);
}

TEST_F(CliTest, PredictWithoutFutureEmitsIntervalsOnly) {
  const auto hist = fixture();
  const auto r = run({"predict", "--data", hist, "--m", "46", "--methods", "pointwise,masr", "--B", "300", "--out",
                      path("iv.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(slurp(path("iv.json")));
  EXPECT_EQ(doc["intervals"].size(), 10u);
  EXPECT_FALSE(doc.contains("verdicts"));
  EXPECT_EQ(r.out.find("contain"), std::string::npos);
}

TEST_F(CliTest, PredictWithFutureReportsVerdicts) {
  const auto hist = fixture();
  const auto r = run({"predict", "--data", hist, "--m", "46", "--future", path("future.csv"), "--methods",
                      "bonferroni,rank-scs", "--B", "300", "--out", path("iv.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto doc = nlohmann::json::parse(slurp(path("iv.json")));
  EXPECT_EQ(doc["verdicts"].size(), 2u);
  EXPECT_NE(r.out.find("Massive"), std::string::npos);
}

TEST_F(CliTest, PredictToStdoutIsCsv) {
  const auto hist = fixture();
  const auto r = run({"predict", "--data", hist, "--m", "46", "--methods", "pointwise"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, kIntervalColumns.size()), kIntervalColumns);
}

TEST_F(CliTest, EmptyMethodListGivesHeaderOnly) {
  const auto hist = fixture();
  const auto r = run({"predict", "--data", hist, "--m", "46", "--methods", "", "--out", path("iv.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(path("iv.csv")), std::string(kIntervalColumns) + "\n");
}

TEST_F(CliTest, DeterministicOutput) {
  const auto hist = fixture();
  const std::vector<std::string> base = {"predict", "--data", hist, "--m", "46", "--methods", "mvn,sym-calib,bayes-scs",
                                         "--B", "300", "--iterations", "300", "--warmup", "200", "--mvn-draws", "5000"};
  auto a = base, b = base;
  a.insert(a.end(), {"--threads", "1", "--out", path("a.csv")});
  b.insert(b.end(), {"--threads", "3", "--out", path("b.csv")});
  ASSERT_EQ(run(a).code, 0);
  ASSERT_EQ(run(b).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
}

TEST_F(CliTest, ErrorPathsHaveDistinctCodes) {
  const auto hist = fixture();
  write("neg.csv", "study,A,B\ns1,1,-1\ns2,2,2\n");
  write("bad.csv", "study,A,B\ns1,1,x\ns2,2,2\n");
  write("zero.csv", "study,A,B,C\ns1,1,0,3\ns2,2,0,2\n");
  write("one.csv", "study,A,B\ns1,1,3\n");

  const auto unknown = run({"predict", "--data", hist, "--m", "46", "--methods", "bogus"});
  EXPECT_EQ(unknown.code, exit_code::kUsage);
  EXPECT_NE(unknown.err.find("valid"), std::string::npos);
  const auto err_doc = nlohmann::json::parse(unknown.err);
  EXPECT_EQ(err_doc["exit_code"], exit_code::kUsage);

  EXPECT_EQ(run({"predict", "--m", "46"}).code, exit_code::kUsage);
  EXPECT_EQ(run({"predict", "--data", path("bad.csv"), "--m", "5"}).code, exit_code::kParse);
  EXPECT_EQ(run({"predict", "--data", path("neg.csv"), "--m", "5"}).code, exit_code::kValidation);
  EXPECT_EQ(run({"predict", "--data", path("one.csv"), "--m", "5"}).code, exit_code::kValidation);
  EXPECT_EQ(run({"predict", "--data", path("missing.csv"), "--m", "5"}).code, exit_code::kIo);
  EXPECT_EQ(run({"predict", "--data", path("zero.csv"), "--m", "5", "--methods", "pointwise"}).code,
            exit_code::kZeroCategory);
  EXPECT_EQ(run({"generate", "--K", "3", "--n", "5", "--phi", "9", "--pi", "0.5,0.5"}).code,
            exit_code::kInvalidDispersion);

  const std::set<int> codes = {exit_code::kUsage, exit_code::kParse, exit_code::kValidation, exit_code::kIo,
                               exit_code::kDegenerateDesign, exit_code::kZeroCategory, exit_code::kZeroProbability,
                               exit_code::kInvalidDispersion, exit_code::kNotPsd, exit_code::kBracket,
                               exit_code::kInitialization, exit_code::kDomain, exit_code::kInternal};
  EXPECT_EQ(codes.size(), 13u);
}

TEST_F(CliTest, RepairFlagAllowsZeroColumn) {
  write("zero.csv", "study,A,B,C\ns1,1,0,3\ns2,2,0,2\n");
  const auto r = run({"predict", "--data", path("zero.csv"), "--m", "5", "--methods", "pointwise", "--repair"});
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST_F(CliTest, SimulateFromConfig) {
  write("sim.cfg",
        "pi = 0.25,0.25,0.5\nK = 10\nn = 50\nphi = 5\nn_iter = 6\nB = 200\nmethods = pointwise,masr\nseed = 4\n");
  const auto r = run({"simulate", "--config", path("sim.cfg"), "--out", path("sim.csv"), "--tail-out", path("tail.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = slurp(path("sim.csv"));
  EXPECT_EQ(text.substr(0, kSimulationColumns.size()), kSimulationColumns);
  std::size_t lines = 0;
  for (char ch : text) lines += ch == '\n' ? 1 : 0;
  EXPECT_EQ(lines, 1u + 2u * 3u);
  EXPECT_NE(slurp(path("tail.csv")).find("p_ge_L"), std::string::npos);

  write("bad.cfg", "pi = 0.5,0.5\ncolour = blue\n");
  EXPECT_EQ(run({"simulate", "--config", path("bad.cfg")}).code, exit_code::kParse);
}

TEST_F(CliTest, BinaryReturnsDocumentedCode) {
  const std::string cmd = std::string(HCDPI_CLI_PATH) + " predict --data " + path("missing.csv") + " --m 5 2>/dev/null";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), exit_code::kIo);
}
