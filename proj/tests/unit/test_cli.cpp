#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "output.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using covtest::cli::run;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("covtest-cli-") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs with --out appended unless the caller already chose one.
  int call(std::vector<std::string> args, const covtest::cli::Environment& env = {}) {
    out_.str("");
    err_.str("");
    if (std::find(args.begin(), args.end(), "--out") == args.end() && args[0] != "--from-manifest") {
      args.insert(args.end(), {"--out", dir_.string()});
    }
    return run(args, out_, err_, env);
  }

  json read_json(const fs::path& p) { return json::parse(covtest::cli::read_file(p)); }

  fs::path dir_;
  std::ostringstream out_;
  std::ostringstream err_;
};

}  // namespace

TEST_F(CliTest, CalibrateTnNullQuantile) {
  ASSERT_EQ(call({"calibrate", "--stat", "tn", "--n", "80", "--p", "40", "--alpha", "0.05",
                  "--reps", "100000", "--seed", "1"}),
            0)
      << err_.str();
  const auto j = read_json(dir_ / "calibrate.json");
  for (const char* key : {"statistic", "n", "p", "alpha", "reps", "seed", "threshold"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  // Independent-simulation reference for the 95% null point (see test_mc).
  EXPECT_NEAR(j["threshold"].get<double>(), 1.7144, 0.03);
  EXPECT_EQ(json::parse(out_.str()), j);
}

TEST_F(CliTest, RejectsAlphaOutsideUnitInterval) {
  EXPECT_EQ(call({"calibrate", "--n", "80", "--p", "40", "--alpha", "1.5"}), 2);
  EXPECT_NE(err_.str().find("--alpha"), std::string::npos) << err_.str();
  EXPECT_FALSE(fs::exists(dir_ / "calibrate.json"));
}

TEST_F(CliTest, UnknownFlagIsConfigError) {
  EXPECT_EQ(call({"power", "--bogus", "3"}), 2);
  EXPECT_EQ(call({"nonsense"}), 2);
}

TEST_F(CliTest, ClrtNeedsPLessThanN) {
  EXPECT_EQ(call({"power", "--model", "equi", "--n", "100", "--p", "100", "--stat", "clrt",
                  "--grid", "0.1", "--reps", "100"}),
            2);
  EXPECT_NE(err_.str().find("p < n"), std::string::npos) << err_.str();
  // The U-statistic alone is fine at p >= n.
  EXPECT_EQ(call({"power", "--model", "equi", "--n", "20", "--p", "30", "--stat", "tn", "--grid",
                  "0.1", "--reps", "100", "--threshold", "asymptotic"}),
            0)
      << err_.str();
}

TEST_F(CliTest, RerunIsByteIdentical) {
  const std::vector<std::string> args = {"calibrate", "--stat", "clrt", "--n", "30", "--p", "10",
                                         "--reps", "2000", "--seed", "5"};
  ASSERT_EQ(call(args), 0);
  const auto first = covtest::cli::read_file(dir_ / "calibrate.json");
  ASSERT_EQ(call(args), 0);
  EXPECT_EQ(covtest::cli::read_file(dir_ / "calibrate.json"), first);
  auto other = args;
  other.back() = "6";
  ASSERT_EQ(call(other), 0);
  EXPECT_NE(covtest::cli::read_file(dir_ / "calibrate.json"), first);
}

TEST_F(CliTest, PowerCsvLayout) {
  ASSERT_EQ(call({"power", "--model", "tridiag", "--n", "40", "--p", "10", "--grid",
                  "0.025:0.025:0.225", "--reps", "200", "--cal-reps", "500", "--svg"}),
            0)
      << err_.str();
  std::istringstream csv(covtest::cli::read_file(dir_ / "power.csv"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(csv, line);) lines.push_back(line);
  ASSERT_GE(lines.size(), 4u);
  EXPECT_EQ(lines[0], "# covtest power schema_version=1");
  EXPECT_EQ(lines[1].rfind("# config=", 0), 0u);
  EXPECT_EQ(lines[2].rfind("# thresholds ", 0), 0u);
  EXPECT_EQ(lines[3],
            "model,param,frob_dist,stat,reps,rejections,power,se,ci_lo,ci_hi,threshold_source");
  int tn = 0, clrt = 0;
  for (std::size_t i = 4; i < lines.size(); ++i) {
    if (lines[i].find(",tn,") != std::string::npos) ++tn;
    if (lines[i].find(",clrt,") != std::string::npos) ++clrt;
  }
  EXPECT_EQ(tn, 9);
  EXPECT_EQ(clrt, 9);
  EXPECT_EQ(lines.size(), 4u + 18u);

  const auto svg = covtest::cli::read_file(dir_ / "power.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("power"), std::string::npos);

  const auto manifest = read_json(dir_ / "power.manifest.json");
  ASSERT_EQ(manifest["outputs"].size(), 2u);
  EXPECT_EQ(manifest["outputs"][0]["file"], "power.csv");
  EXPECT_EQ(manifest["outputs"][0]["fnv1a64"],
            covtest::cli::hex64(covtest::cli::fnv1a64(covtest::cli::read_file(dir_ / "power.csv"))));
}

TEST_F(CliTest, PresetGrids) {
  ASSERT_EQ(call({"power", "--preset", "fig1", "--n", "20", "--p", "5", "--reps", "100",
                  "--threshold", "asymptotic", "--stat", "tn"}),
            0)
      << err_.str();
  const auto m = read_json(dir_ / "power.manifest.json");
  EXPECT_EQ(m["config"]["model"], "equi");
  EXPECT_EQ(m["config"]["grid"].size(), 12u);
  EXPECT_DOUBLE_EQ(m["config"]["grid"].back().get<double>(), 0.12);
}

TEST_F(CliTest, VerifySingleCheck) {
  ASSERT_EQ(call({"verify", "--only", "martingale"}), 0) << err_.str();
  const auto j = read_json(dir_ / "verify.json");
  ASSERT_EQ(j["reports"].size(), 1u);
  EXPECT_EQ(j["reports"][0]["name"], "martingale");
  EXPECT_TRUE(j["all_pass"].get<bool>());
}

TEST_F(CliTest, VerifyInjectedFaultExitsOne) {
  EXPECT_EQ(call({"verify", "--only", "moments", "--reps", "200000", "--inject-fault"}), 1);
  EXPECT_NE(err_.str().find("moments"), std::string::npos);
  EXPECT_FALSE(read_json(dir_ / "verify.json")["all_pass"].get<bool>());
}

TEST_F(CliTest, VerifyUnknownCheck) { EXPECT_EQ(call({"verify", "--only", "nope"}), 2); }

TEST_F(CliTest, DivergenceValues) {
  ASSERT_EQ(call({"divergence", "--p", "6", "--n", "20", "--b", "0"}), 0) << err_.str();
  EXPECT_EQ(read_json(dir_ / "divergence.json")["divergence"].get<double>(), 1.0);

  ASSERT_EQ(call({"divergence", "--p", "6", "--n", "20", "--b", "0.3"}), 0);
  EXPECT_NEAR(read_json(dir_ / "divergence.json")["divergence"].get<double>(), 1.0026985307421,
              1e-12);

  ASSERT_EQ(call({"divergence", "--p", "40", "--n", "80", "--find-b", "--beta-minus-alpha", "0.2"}),
            0);
  const auto j = read_json(dir_ / "divergence.json");
  const double b = j["feasible_b"].get<double>();
  EXPECT_GT(b, 0.0);
  EXPECT_LT(b, 1.0);
  EXPECT_LE(j["divergence"].get<double>() - 1.0, 0.16);

  EXPECT_EQ(call({"divergence", "--p", "40", "--n", "10", "--b", "0.5"}), 2);
}

TEST_F(CliTest, ApplyToDataFile) {
  const auto data = dir_ / "x.txt";
  covtest::cli::write_file(data, "1 0 0\n0 1 0\n0 0 1\n-1 0 0\n0 -1 0\n0 0 -1\n1 1 1\n");
  ASSERT_EQ(call({"apply", "--data", data.string()}), 0) << err_.str();
  const auto j = read_json(dir_ / "apply.json");
  EXPECT_EQ(j["n"], 7);
  EXPECT_EQ(j["p"], 3);
  ASSERT_EQ(j["tests"].size(), 2u);
  EXPECT_EQ(j["tests"][0]["statistic"], "tn");
  EXPECT_EQ(j["tests"][0]["threshold_source"], "asymptotic");

  covtest::cli::write_file(data, "1 2\n3 x\n");
  EXPECT_EQ(call({"apply", "--data", data.string()}), 2);
  EXPECT_EQ(call({"apply", "--data", (dir_ / "missing.txt").string()}), 3);
}

TEST_F(CliTest, WorkersFromEnvironment) {
  covtest::cli::Environment env;
  env.workers = "3";
  ASSERT_EQ(call({"calibrate", "--n", "20", "--p", "5", "--reps", "500"}, env), 0);
  EXPECT_EQ(read_json(dir_ / "calibrate.manifest.json")["execution"]["workers"], 3);
  ASSERT_EQ(call({"calibrate", "--n", "20", "--p", "5", "--reps", "500", "--workers", "2"}, env), 0);
  EXPECT_EQ(read_json(dir_ / "calibrate.manifest.json")["execution"]["workers"], 2);
  env.workers = "zero";
  EXPECT_EQ(call({"calibrate", "--n", "20", "--p", "5", "--reps", "500"}, env), 2);
}

TEST_F(CliTest, ReplayFromManifest) {
  ASSERT_EQ(call({"power", "--model", "spike", "--n", "30", "--p", "10", "--grid", "0.5,1,2",
                  "--reps", "300", "--cal-reps", "400", "--workers", "1"}),
            0)
      << err_.str();
  const auto original = covtest::cli::read_file(dir_ / "power.csv");
  const auto again = dir_ / "again";
  ASSERT_EQ(call({"--from-manifest", (dir_ / "power.manifest.json").string(), "--workers", "4",
                  "--out", again.string()}),
            0)
      << err_.str();
  EXPECT_EQ(covtest::cli::read_file(again / "power.csv"), original);
  EXPECT_EQ(read_json(again / "power.manifest.json")["execution"]["workers"], 4);
  EXPECT_EQ(call({"--from-manifest", (dir_ / "absent.json").string()}), 3);
}
