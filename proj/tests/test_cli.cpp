#include <gtest/gtest.h>

#include <nsnmf/cli.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using nsnmf::cli::parse_and_dispatch;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args, const std::string& stdin_text = {}) {
  args.insert(args.begin(), "nsnmf");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  const int code = parse_and_dispatch(static_cast<int>(argv.size()), argv.data(), in, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("nsnmf_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write_data(dir_ / "obs.csv", 40, 3);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Uniform rows with one far-away spike; columns id, a, b, c, label.
  static void write_data(const fs::path& p, int n, int spike) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::ofstream f(p);
    f << "id,a,b,c,label\n";
    for (int i = 0; i < n; ++i) {
      const double s = i == spike ? 8.0 : 1.0;
      f << "r" << i << ',' << s * u(rng) + (i == spike ? 5 : 0) << ',' << u(rng) << ',' << u(rng)
        << ',' << (i == spike ? 1 : 0) << '\n';
    }
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::vector<std::string> offline_args(const std::string& output) const {
    return {"detect-offline", "--input", path("obs.csv"), "--id-col", "id", "--label-col",
            "label", "--k", "2", "--top-n", "3", "--max-rounds", "40", "--output", output};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("detect-offline"), std::string::npos);
  EXPECT_EQ(run({"detect-online", "--help"}).code, 0);
}

TEST_F(CliTest, DuplicateCapHelpShowsNames) {
  const auto r = run({"detect-offline", "--help"});
  EXPECT_NE(r.out.find("nearest"), std::string::npos);
  EXPECT_NE(r.out.find("epsilon"), std::string::npos);
}

TEST_F(CliTest, UnknownFlagIsInvalidInput) {
  EXPECT_EQ(run({"detect-offline", "--input", path("obs.csv"), "--bogus", "1"}).code, 1);
  EXPECT_EQ(run({}).code, 1);
}

TEST_F(CliTest, MissingInputNamesPath) {
  const auto missing = path("nope.csv");
  const auto r = run({"detect-offline", "--input", missing});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE((r.out + r.err).find(missing), std::string::npos) << r.err;
}

TEST_F(CliTest, BadNumericValueIsInvalidInput) {
  EXPECT_EQ(run({"detect-offline", "--input", path("obs.csv"), "--k", "two"}).code, 1);
  EXPECT_EQ(run({"detect-offline", "--input", path("obs.csv"), "--alpha", "1.5"}).code, 1);
  EXPECT_EQ(run({"detect-offline", "--input", path("obs.csv"), "--duplicate-cap", "zero"}).code, 1);
}

TEST_F(CliTest, MalformedCsvIsInvalidInput) {
  std::ofstream(path("bad.csv")) << "a,b\n1,2\n3,\n";
  const auto r = run({"detect-offline", "--input", path("bad.csv")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST_F(CliTest, OfflineWritesReportAndSidecar) {
  const auto out = path("scores.csv");
  const auto r = run(offline_args(out));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = slurp(out);
  EXPECT_EQ(report.rfind("row_id,score,rank,flagged\n", 0), 0u);
  EXPECT_NE(report.find("r3,"), std::string::npos);
  EXPECT_NE(r.err.find("true positives in top 3"), std::string::npos);
  const auto sidecar = slurp(out + ".config.toml");
  EXPECT_NE(sidecar.find("[detect-offline]"), std::string::npos);
  EXPECT_NE(sidecar.find("duplicate-cap=\"nearest\""), std::string::npos) << sidecar;
  EXPECT_EQ(sidecar.find("detect-online"), std::string::npos) << sidecar;
}

TEST_F(CliTest, SidecarRerunIsByteIdentical) {
  const auto first = path("first.csv");
  ASSERT_EQ(run(offline_args(first)).code, 0);
  const auto sidecar = first + ".config.toml";
  const auto second = path("second.csv");
  const auto r = run({"--config", sidecar, "detect-offline", "--output", second});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(first), slurp(second));
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  std::ofstream(path("cfg.toml")) << "[detect-offline]\ninput = \"" << path("obs.csv")
                                  << "\"\nid-col = \"id\"\nlabel-col = \"label\"\nk = 2\ntop-n = 7\n"
                                  << "max-rounds = 5\n";
  const auto out = path("o.csv");
  ASSERT_EQ(run({"--config", path("cfg.toml"), "detect-offline", "--top-n", "2", "--output", out})
                .code,
            0);
  const auto sidecar = slurp(out + ".config.toml");
  EXPECT_NE(sidecar.find("top-n=2"), std::string::npos) << sidecar;
  EXPECT_NE(sidecar.find("max-rounds=5"), std::string::npos) << sidecar;
}

TEST_F(CliTest, UnknownConfigKeyIsRejected) {
  std::ofstream(path("cfg.toml")) << "[detect-offline]\ninput = \"" << path("obs.csv")
                                  << "\"\nbanana = 3\n";
  EXPECT_EQ(run({"--config", path("cfg.toml"), "detect-offline"}).code, 1);
}

TEST_F(CliTest, MstDumpWritesTreeEdges) {
  auto args = offline_args(path("s.csv"));
  args.insert(args.end(), {"--mst-dump", path("mst.txt")});
  ASSERT_EQ(run(args).code, 0);
  std::ifstream f(path("mst.txt"));
  int lines = 0;
  for (std::string l; std::getline(f, l);) ++lines;
  EXPECT_EQ(lines, 39);
}

TEST_F(CliTest, OnlineBatchModeFlagsTopN) {
  const auto out = path("online.csv");
  const auto r = run({"detect-online", "--input", path("obs.csv"), "--id-col", "id", "--label-col",
                      "label", "--k", "2", "--buffer", "10", "--top-n", "4", "--output", out});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = slurp(out);
  EXPECT_EQ(report.rfind("row_id,score,rank,flagged\n", 0), 0u);
  EXPECT_NE(report.find("r39,"), std::string::npos);
}

TEST_F(CliTest, OnlineLiveModeReadsStdin) {
  std::string text = "a,b\n";
  for (int i = 0; i < 30; ++i) text += std::to_string(0.1 * (i % 3)) + "," + std::to_string(0.2) + "\n";
  const auto r = run({"detect-online", "--stdin", "--mode", "live", "--k", "1", "--buffer", "8",
                      "--warmup", "5"},
                     text);
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "row_id,score,flagged");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 30);
}

TEST_F(CliTest, OnlineStdinRejectsBadRow) {
  const auto r = run({"detect-online", "--stdin", "--buffer", "4", "--k", "1"}, "1,2\n3,x\n");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(CliTest, OnlineShortStreamIsInvalidInput) {
  EXPECT_EQ(run({"detect-online", "--input", path("obs.csv"), "--buffer", "100", "--output",
                 path("x.csv")})
                .code,
            1);
}

TEST_F(CliTest, BaselinesRun) {
  for (const std::string m : {"nmf", "gnmf", "snmf"}) {
    const auto out = path(m + ".csv");
    const auto r = run({"baseline", "--method", m, "--input", path("obs.csv"), "--id-col", "id",
                        "--label-col", "label", "--k", "2", "--top-n", "3", "--max-iter", "50",
                        "--q", "3", "--max-rounds", "30", "--output", out});
    ASSERT_EQ(r.code, 0) << m << ": " << r.err;
    EXPECT_EQ(slurp(out).rfind("row_id,score,rank,flagged\n", 0), 0u) << m;
  }
  EXPECT_EQ(run({"baseline", "--method", "pca", "--input", path("obs.csv")}).code, 1);
}

TEST_F(CliTest, BenchmarkWritesReportDirectory) {
  write_data(dir_ / "b.csv", 30, 7);
  std::ofstream(path("m.toml")) << "[One]\npath = \"obs.csv\"\nlabel_column = \"label\"\n"
                                << "id_column = \"id\"\n[Two]\npath = \"b.csv\"\n"
                                << "label_column = \"label\"\nid_column = \"id\"\n";
  const auto out = path("bench");
  const auto r = run({"benchmark", "--manifest", path("m.toml"), "--methods", "ns-nmf,nmf",
                      "--seeds", "2", "--k", "2", "--max-rounds", "20", "--max-iter", "30",
                      "--threads", "1", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(fs::path(out) / "config.toml"));
  EXPECT_TRUE(fs::exists(fs::path(out) / "runs.csv"));
  EXPECT_NE(r.out.find("One"), std::string::npos);
  EXPECT_NE(r.out.find("Two"), std::string::npos);
}
