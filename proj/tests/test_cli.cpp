#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int rc = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(LSC_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, got);
  const int status = pclose(p);
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lsc_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpAndUsage) {
  EXPECT_EQ(run("--help").rc, 0);
  EXPECT_EQ(run("").rc, 1);
  EXPECT_EQ(run("probe").rc, 1);  // --manifest is required
  EXPECT_EQ(run("schedule --kind bogus --steps 3").rc, 1);
}

TEST_F(Cli, Schedule) {
  const auto r = run("schedule --kind cosine --C 0.4 --steps 4");
  ASSERT_EQ(r.rc, 0);
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "step,progress,w_n,w_c");
  EXPECT_NE(r.out.find("\n3,1,1,0\n"), std::string::npos);
  EXPECT_EQ(run("schedule --steps 0").rc, 1);
}

TEST_F(Cli, Gradcheck) {
  const auto r = run("gradcheck --trials 20 --seed 3");
  EXPECT_EQ(r.rc, 0);
  EXPECT_FALSE(r.out.empty());
  EXPECT_EQ(run("gradcheck --trials 5 --tol 1e-30").rc, 1);
}

TEST_F(Cli, MissingManifestIsIoError) {
  EXPECT_EQ(run("probe --manifest " + path("nope.json")).rc, 2);
  write("bad.json", "{ not json");
  EXPECT_EQ(run("probe --manifest " + path("bad.json")).rc, 2);
}

TEST_F(Cli, InvalidSynthConfigIsValidationError) {
  write("cfg.json", R"({"gen_agreement": 3.0})");
  EXPECT_EQ(run("synth --config " + path("cfg.json") + " --out " + path("ds")).rc, 1);
}

TEST_F(Cli, SynthDecomposeReportPipeline) {
  write("cfg.json", R"({"seed": 7, "num_samples": 300, "gen_agreement": 0.0, "gen_truth_rate": 0.9,
                        "final_transform": "collapse", "collapse_strength": 1.0, "dataset_name": "qwen_like"})");
  ASSERT_EQ(run("synth --config " + path("cfg.json") + " --out " + path("ds")).rc, 0);
  const std::string manifest = path("ds/manifest.json");
  const std::string gen = "gen";
  ASSERT_TRUE(fs::exists(manifest));
  ASSERT_TRUE(fs::exists(path("ds/predictions_gen.json")));

  const auto probe = run("probe --manifest " + manifest + " --stage vision");
  ASSERT_EQ(probe.rc, 0);
  EXPECT_NE(probe.out.find("\"lsc-probe\""), std::string::npos);
  EXPECT_EQ(run("probe --manifest " + manifest + " --stage vision --context single").rc, 0);

  ASSERT_EQ(run("decompose --manifest " + manifest + " --gen-preds " + gen + " --out " + path("a.json")).rc, 0);
  ASSERT_EQ(run("--workers 3 decompose --manifest " + manifest + " --gen-preds " + gen + " --out " + path("b.json")).rc,
            0);
  const auto a = slurp(path("a.json"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(path("b.json")));
  EXPECT_NE(a.find("post_representation_reasoning"), std::string::npos);

  const auto md = run("report --in " + path("a.json") + " --format md");
  ASSERT_EQ(md.rc, 0);
  EXPECT_NE(md.out.find("## Generative accuracy vs. linear separability"), std::string::npos);
  const auto csv = run("report --in " + path("a.json") + " --format csv");
  ASSERT_EQ(csv.rc, 0);
  EXPECT_EQ(csv.out.rfind("model,dataset,prompt_strategy,method,acc_gen", 0), 0u);
  const auto sc = run("report --in " + path("a.json") + " --format scatter");
  ASSERT_EQ(sc.rc, 0);
  EXPECT_NE(sc.out.find(",1\n"), std::string::npos);

  // the same row twice is rejected
  EXPECT_EQ(run("report --in " + path("a.json") + " --in " + path("b.json")).rc, 1);
  EXPECT_EQ(run("report --in " + path("missing.json")).rc, 2);
  EXPECT_EQ(run("decompose --manifest " + manifest + " --gen-preds unknown").rc, 1);
  fs::remove(path("ds/final.lsce"));
  EXPECT_EQ(run("decompose --manifest " + manifest + " --gen-preds " + gen).rc, 2);
}
