#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "ounet/metrics.hpp"
#include "ounet/pointcloud_io.hpp"

using namespace ounet;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path work_dir() {
  const auto dir = fs::temp_directory_path() / "ounet_test_cli";
  fs::create_directories(dir);
  return dir;
}

RunResult run(const std::string& args) {
  const auto dir = work_dir();
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(OUNET_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// A tiny dataset plus a 10-step checkpoint, built once for the whole suite.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = work_dir() / "pipeline";
    fs::remove_all(root_);
    const auto g = run("gen-data --out " + (root_ / "data").string() +
                       " --shapes sphere,torus --dense 2000 --sparse 250 --seed 3");
    ASSERT_EQ(g.code, 0) << g.err;
    const auto t = run("train --data " + (root_ / "data").string() + " --out " + (root_ / "model.ount").string() +
                       " --depth 4 --full-depth 2 --channels 16,16,8 --steps 10 --seed 1");
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static fs::path root_;
};

fs::path CliPipeline::root_;

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("infer --in a.xyz").code, 2);
  EXPECT_EQ(run("gen-data --out " + (work_dir() / "bad").string() + " --shapes cone").code, 2);
  EXPECT_EQ(run("eval --pred x.xyz --metrics cd").code, 2);
  EXPECT_EQ(run("gradcheck --toy-depth 9").code, 2);
  EXPECT_EQ(run("train --data d --out o --patch-mode maybe").code, 2);
}

TEST(Cli, RuntimeErrorsExitOne) {
  const auto r = run("eval --pred /nonexistent/p.xyz --ref /nonexistent/q.xyz");
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("error"), std::string::npos);
  const auto bad = work_dir() / "bad.ount";
  std::ofstream(bad) << "not a checkpoint";
  const auto pc = work_dir() / "one.xyz";
  std::ofstream(pc) << "0 0 0\n0.5 0.5 0.5\n";
  EXPECT_EQ(run("infer --ckpt " + bad.string() + " --in " + pc.string() + " --out " + (work_dir() / "o.xyz").string()).code, 1);
}

TEST(Cli, GenDataRecordsCounts) {
  const auto dir = work_dir() / "big";
  fs::remove_all(dir);
  const auto r = run("gen-data --out " + dir.string() + " --shapes sphere --dense 50000 --sparse 2000");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["dense"], 50000);
  EXPECT_EQ(manifest["sparse"], 2000);
  ASSERT_EQ(manifest["samples"].size(), 1u);
  const auto& s = manifest["samples"][0];
  EXPECT_EQ(io::read_pcb(dir / s["dense_file"].get<std::string>()).count(), 50000u);
  EXPECT_EQ(io::read_pcb(dir / s["sparse_file"].get<std::string>()).count(), 2000u);
  EXPECT_EQ(s["noisy_files"].size(), 2u);
}

TEST_F(CliPipeline, TrainLogHasOneLinePerStep) {
  std::istringstream in(slurp(root_ / "model.ount.log.jsonl"));
  std::string line;
  std::vector<nlohmann::json> lines;
  while (std::getline(in, line)) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 11u);
  EXPECT_EQ(lines[0]["type"], "header");
  for (int i = 1; i <= 10; ++i) EXPECT_EQ(lines[static_cast<std::size_t>(i)]["step"], i);
}

TEST_F(CliPipeline, InferWritesCloudAndHonoursTargetCount) {
  const auto manifest = nlohmann::json::parse(slurp(root_ / "data" / "manifest.json"));
  const auto sparse = root_ / "data" / manifest["samples"][0]["sparse_file"].get<std::string>();
  const auto out = root_ / "up.xyz";
  const auto r = run("infer --ckpt " + (root_ / "model.ount").string() + " --in " + sparse.string() + " --out " +
                     out.string() + " --target-count 777");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_cloud(out).count(), 777u);
  EXPECT_NE(r.out.find("network forward"), std::string::npos) << r.out;
}

TEST_F(CliPipeline, EvalMatchesLibrary) {
  const auto manifest = nlohmann::json::parse(slurp(root_ / "data" / "manifest.json"));
  const auto dense = root_ / "data" / manifest["samples"][0]["dense_file"].get<std::string>();
  const auto sparse = root_ / "data" / manifest["samples"][0]["sparse_file"].get<std::string>();
  const auto r = run("eval --pred " + sparse.string() + " --ref " + dense.string() + " --metrics cd,hd,p2f");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  const auto p = io::read_cloud(sparse), q = io::read_cloud(dense);
  EXPECT_DOUBLE_EQ(j["cd"].get<double>(), chamfer(p, q));
  EXPECT_DOUBLE_EQ(j["hd"].get<double>(), hausdorff(p, q));
  EXPECT_DOUBLE_EQ(j["p2f"].get<double>(), point_to_surface(p, q));
  EXPECT_EQ(j["n_pred"], 250);
  EXPECT_EQ(j["n_ref"], 2000);
}

TEST_F(CliPipeline, ResumeFromConfigFile) {
  const auto cfg = root_ / "run.json";
  std::ofstream(cfg) << nlohmann::json{{"data", (root_ / "data").string()},
                                       {"out", (root_ / "cfg.ount").string()},
                                       {"model", {{"max_depth", 4}, {"full_depth", 2}, {"channels", {16, 16, 8}}}},
                                       {"train", {{"steps", 3}, {"batch", 1}}}}
                                 .dump();
  EXPECT_EQ(run("train --config " + cfg.string()).code, 0);
  EXPECT_TRUE(fs::exists(root_ / "cfg.ount"));
  std::ofstream(cfg) << "{\"bogus\": 1}";
  EXPECT_EQ(run("train --config " + cfg.string()).code, 2);
}

TEST(Cli, GradcheckPassesAndDetectsInjectedFault) {
  const auto ok = run("gradcheck --toy-depth 3 --coords 2");
  EXPECT_EQ(ok.code, 0) << ok.err;
  const auto report = nlohmann::json::parse(ok.out);
  EXPECT_TRUE(report["passed"].get<bool>());
  EXPECT_LT(report["max_relative_error"].get<double>(), 1e-4);
  EXPECT_EQ(run("gradcheck --toy-depth 3 --coords 2 --inject-fault").code, 1);
}
