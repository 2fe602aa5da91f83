#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "deepmad/io.hpp"

using namespace deepmad;

namespace {

const std::string kProblems = std::string(DEEPMAD_SOURCE_DIR) + "/data/problems/";

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("deepmad-cli-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

std::string tiny_problem_file(const TempDir& dir, std::int64_t max_flops = 1'000'000'000) {
  ProblemSpec p;
  p.name = "tiny";
  p.block = {BlockType::PlainConvBNReLU};
  p.stages = 2;
  p.alphas = {1, 8};
  p.rho0 = 2.0;
  p.max_flops = max_flops;
  p.max_params = 1'000'000'000;
  p.input_resolution = 32;
  p.stem = {16, 3, 1, false};
  p.num_classes = 10;
  p.downsample = {true, true};
  p.width_bounds = {{8, 32}, {8, 32}};
  p.depth_bounds = {{1, 3}, {1, 3}};
  const std::string path = dir.file("tiny.json");
  io::write_file(path, io::serialize(p));
  return path;
}

}  // namespace

TEST(Cli, Version) {
  const auto r = run({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("deepmad 0.1.0"), std::string::npos);
  EXPECT_NE(r.out.find("convention-hash 1b4792d57f0d8259"), std::string::npos);
}

TEST(Cli, NoSubcommandIsUsage) { EXPECT_EQ(run({}).code, 2); }

TEST(Cli, UnknownFlagIsUsage) {
  EXPECT_EQ(run({"analyze", "resnet18", "--frobnicate"}).code, 2);
  EXPECT_EQ(run({"solve"}).code, 2);
}

TEST(Cli, AnalyzeResNet50) {
  const auto r = run({"analyze", "resnet50"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("rho               0.0863"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("params            25557032"), std::string::npos);
}

TEST(Cli, AnalyzeJsonIsOneDocument) {
  const auto r = run({"analyze", "mobilenetv2", "--json"});
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("format"), "deepmad-metrics");
  EXPECT_NEAR(j.at("rho").get<double>(), 0.9025, 5e-5);
}

TEST(Cli, AnalyzeEmptyFileIsUsage) {
  TempDir dir;
  io::write_file(dir.file("empty.json"), "");
  const auto r = run({"analyze", dir.file("empty.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("empty.json"), std::string::npos);
}

TEST(Cli, AnalyzeAlphaLengthMismatch) {
  const auto r = run({"analyze", "resnet18", "--alpha", "1,1,1,1,8"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("alpha length 5 does not match stage count 4"), std::string::npos) << r.err;
}

TEST(Cli, AnalyzeUnknownName) { EXPECT_EQ(run({"analyze", "vgg16"}).code, 1); }

TEST(Cli, AnalyzeConventionFlagsChangeCounts) {
  const auto j = nlohmann::json::parse(run({"analyze", "resnet18", "--json"}).out);
  const auto k = nlohmann::json::parse(run({"analyze", "resnet18", "--json", "--no-batch-norm"}).out);
  EXPECT_GT(j.at("params").get<std::int64_t>(), k.at("params").get<std::int64_t>());
  EXPECT_EQ(j.at("rho"), k.at("rho"));
}

TEST(Cli, SolveIsReproducibleToTheByte) {
  TempDir dir;
  const std::string problem = tiny_problem_file(dir);
  std::vector<std::string> files;
  for (const char* threads : {"1", "3"}) {
    const std::string arch = dir.file(std::string("arch") + threads + ".json");
    const std::string report = dir.file(std::string("report") + threads + ".json");
    const auto r = run({"solve", "--problem", problem, "--seed", "7", "--threads", threads,
                        "--out", arch, "--solve-report", report});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.err.find("wall time"), std::string::npos);
    files.push_back(io::read_file(arch));
    files.push_back(io::read_file(report));
  }
  EXPECT_EQ(files[0], files[2]);
  EXPECT_EQ(files[1], files[3]);
  EXPECT_EQ(nlohmann::json::parse(files[1]).contains("wall_time_seconds"), false);
  // The written architecture analyzes cleanly.
  EXPECT_EQ(run({"analyze", dir.file("arch1.json")}).code, 0);
}

TEST(Cli, SolveImpossibleBudgetFails) {
  TempDir dir;
  const std::string problem = tiny_problem_file(dir, 10);
  const auto r = run({"solve", "--problem", problem});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("binding: flops"), std::string::npos) << r.err;
  EXPECT_NE(r.out.find("feasible          no"), std::string::npos);
}

TEST(Cli, SolveOneEvaluationFlagsExhaustion) {
  TempDir dir;
  const std::string problem = tiny_problem_file(dir);
  const auto r = run({"solve", "--problem", problem, "--max-evals", "1", "--json"});
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.at("budget_exhausted").get<bool>());
  EXPECT_NE(r.err.find("budget exhausted"), std::string::npos);
}

TEST(Cli, SolveTraceKeepsTheAnswer) {
  TempDir dir;
  const std::string problem = tiny_problem_file(dir);
  const auto a = nlohmann::json::parse(run({"solve", "--problem", problem, "--json"}).out);
  const auto b =
      nlohmann::json::parse(run({"solve", "--problem", problem, "--json", "--trace"}).out);
  EXPECT_EQ(a.at("best"), b.at("best"));
  EXPECT_TRUE(b.contains("trace"));
}

TEST(Cli, SolveMissingProblemFile) {
  EXPECT_EQ(run({"solve", "--problem", "/nonexistent/problem.json"}).code, 1);
}

TEST(Cli, CompareSelfHasZeroDeltas) {
  const auto r = run({"compare", "resnet34", "resnet34", "--json"});
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j.at("format"), "deepmad-comparison");
  for (const auto& m : j.at("metrics")) EXPECT_EQ(m.at("delta").get<double>(), 0.0);
}

TEST(Cli, CompareAcrossBlockKinds) {
  const auto r = run({"compare", "resnet50", "efficientnet-b0", "--json"});
  ASSERT_EQ(r.code, 0);
  const auto j = nlohmann::json::parse(r.out);
  for (const auto& m : j.at("metrics")) {
    EXPECT_DOUBLE_EQ(m.at("delta").get<double>(),
                     m.at("b").get<double>() - m.at("a").get<double>());
  }
}

TEST(Cli, CompareResNet18WithItsRedesign) {
  TempDir dir;
  const std::string arch = dir.file("r18.json");
  ASSERT_EQ(run({"solve", "--problem", kProblems + "deepmad-r18.json", "--out", arch}).code, 0);
  const auto j = nlohmann::json::parse(run({"compare", "resnet18", arch, "--json"}).out);
  for (const auto& m : j.at("metrics")) {
    if (m.at("metric") == "rho") EXPECT_NEAR(m.at("delta").get<double>(), 0.28, 0.02);
    if (m.at("metric") == "weighted_entropy") EXPECT_GT(m.at("delta").get<double>(), 0.0);
  }
  EXPECT_EQ(j.at("b"), "deepmad-r18");
}

TEST(Cli, VerifyVariance) {
  const auto r = run({"verify-variance", "--widths", "16,32", "--samples", "50000", "--seed", "3"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("result            pass"), std::string::npos);
  const auto j = nlohmann::json::parse(
      run({"verify-variance", "--widths", "8,8,8", "--samples", "20000", "--json"}).out);
  EXPECT_EQ(j.at("format"), "deepmad-variance-report");
}

TEST(Cli, CatalogAndCalibrate) {
  EXPECT_EQ(run({"catalog"}).code, 0);
  const auto one = run({"catalog", "resnet18"});
  EXPECT_EQ(one.code, 0);
  EXPECT_NE(one.out.find("11.7 M params"), std::string::npos);
  const auto exported = run({"catalog", "resnet18", "--json"});
  EXPECT_EQ(exported.out, io::read_file(std::string(DEEPMAD_SOURCE_DIR) + "/data/catalog/resnet18.json"));
  const auto cal = run({"calibrate"});
  EXPECT_EQ(cal.code, 0);
  EXPECT_EQ(cal.out.rfind("# Convention calibration", 0), 0u);
}
