#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = -1;
  std::string output;
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(SICL_CLI_PATH) + " " + args + " 2>&1";
  Outcome o;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return o;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) o.output += buf.data();
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

// 4 subjects, 2 activities, a handful of epochs.
const std::string kTiny =
    " --set world.num_subjects=4 world.num_activities=2 world.windows_per_pair=4"
    " split.train_subjects=[0,1,2] split.test_subjects=[3] pretrain_epochs=2 linear_epochs=3 batch_size=16";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sicl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string out(const std::string& sub) const { return (dir_ / sub).string(); }
  fs::path dir_;
};

TEST_F(Cli, GenWithoutNuisanceThenVerifyPasses) {
  const Outcome gen = run("gen --out " + out("gen") + " --set world.subject_nuisance_strength=0");
  ASSERT_EQ(gen.code, 0) << gen.output;
  EXPECT_TRUE(fs::exists(dir_ / "gen" / "dataset.bin"));
  EXPECT_TRUE(fs::exists(dir_ / "gen" / "config.json"));
  const auto manifest = nlohmann::json::parse(slurp(dir_ / "gen" / "manifest.json"));
  EXPECT_EQ(manifest.at("world").at("subject_nuisance_strength"), 0.0);

  const Outcome verify = run("verify --out " + out("verify"));
  EXPECT_EQ(verify.code, 0) << verify.output;
  EXPECT_EQ(verify.output.find("FAIL"), std::string::npos) << verify.output;
  EXPECT_TRUE(fs::exists(dir_ / "verify" / "verify.json"));
}

TEST_F(Cli, GenIsIdempotent) {
  ASSERT_EQ(run("gen --out " + out("a") + kTiny).code, 0);
  ASSERT_EQ(run("gen --out " + out("b") + kTiny).code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "dataset.bin"), slurp(dir_ / "b" / "dataset.bin"));
  EXPECT_EQ(slurp(dir_ / "a" / "manifest.json"), slurp(dir_ / "b" / "manifest.json"));
}

TEST_F(Cli, MatrixEmitsOneRowPerCell) {
  const Outcome m = run("matrix --out " + out("m") + " --losses nce,sicl --seeds 1,2,3 --jobs 2" + kTiny);
  ASSERT_EQ(m.code, 0) << m.output;
  const std::string csv = slurp(dir_ / "m" / "matrix.csv");
  EXPECT_EQ(csv.rfind("loss,seed,mean_class_accuracy,gap\n", 0), 0u) << csv;
  EXPECT_EQ(line_count(csv), 7u) << csv;
  EXPECT_NE(csv.find("nce,3,"), std::string::npos);
  EXPECT_NE(csv.find("sicl,1,"), std::string::npos);
}

TEST_F(Cli, LinearEvalOnMissingCheckpointFailsReadably) {
  const Outcome o = run("linear-eval --out " + out("e") + " --checkpoint " + out("nope.bin") + kTiny);
  EXPECT_NE(o.code, 0);
  EXPECT_NE(o.output.find("checkpoint not found"), std::string::npos) << o.output;
}

TEST_F(Cli, ContractErrorsExitNonzero) {
  EXPECT_NE(run("gen --out " + out("x") + " --set tau=0").code, 0);
  EXPECT_NE(run("gen --out " + out("x") + " --set no_such_key=1").code, 0);
  EXPECT_NE(run("pretrain --out " + out("x") + " --set loss=simclr").code, 0);
  EXPECT_NE(run("gen").code, 0);  // --out is required
}

TEST_F(Cli, ConfigEchoReproducesEveryOutput) {
  ASSERT_EQ(run("pretrain --out " + out("p1") + " --set loss=sicl" + kTiny).code, 0);
  const fs::path echo = dir_ / "p1" / "config.json";
  const Outcome again = run("pretrain --out " + out("p2") + " --config " + echo.string());
  ASSERT_EQ(again.code, 0) << again.output;
  for (const char* f : {"checkpoint.bin", "loss_curve.csv", "audit.json", "config.json"})
    EXPECT_EQ(slurp(dir_ / "p1" / f), slurp(dir_ / "p2" / f)) << f;
  const auto audit = nlohmann::json::parse(slurp(dir_ / "p1" / "audit.json"));
  EXPECT_EQ(audit.at("held_out_windows_consumed"), 0);

  const std::string ckpt = (dir_ / "p1" / "checkpoint.bin").string();
  const std::string before = slurp(ckpt);
  ASSERT_EQ(run("linear-eval --out " + out("e1") + " --config " + echo.string() + " --checkpoint " + ckpt).code, 0);
  ASSERT_EQ(run("linear-eval --out " + out("e2") + " --config " + (dir_ / "e1" / "config.json").string() +
                " --checkpoint " + ckpt)
                .code,
            0);
  EXPECT_EQ(slurp(ckpt), before);
  EXPECT_EQ(slurp(dir_ / "e1" / "report.json"), slurp(dir_ / "e2" / "report.json"));

  ASSERT_EQ(run("analyze --out " + out("a") + " --config " + echo.string() + " --checkpoint " + ckpt).code, 0);
  const std::string hist = slurp(dir_ / "a" / "histogram.csv");
  EXPECT_EQ(hist.rfind("bin_lo,bin_hi,count_all,count_intra_subject\n", 0), 0u);
  EXPECT_EQ(line_count(hist), 51u);
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir_ / "a" / "sim_stats.json")).contains("gap"));
}

TEST_F(Cli, PretrainAndLinearEvalAcceptAGeneratedDataset) {
  ASSERT_EQ(run("gen --out " + out("g") + kTiny).code, 0);
  const std::string data = (dir_ / "g" / "dataset.bin").string();
  ASSERT_EQ(run("pretrain --out " + out("p") + " --data " + data + kTiny).code, 0);
  const Outcome e = run("linear-eval --out " + out("e") + " --data " + data + " --checkpoint " +
                        (dir_ / "p" / "checkpoint.bin").string() + kTiny);
  ASSERT_EQ(e.code, 0) << e.output;
  const auto report = nlohmann::json::parse(slurp(dir_ / "e" / "report.json"));
  EXPECT_GE(report.at("mean_class_accuracy").get<double>(), 0.0);
  EXPECT_LE(report.at("mean_class_accuracy").get<double>(), 1.0);
  // A dataset from a different world is refused.
  EXPECT_NE(run("pretrain --out " + out("q") + " --data " + data).code, 0);
}

TEST_F(Cli, FinetuneRunsFromScratchAndFromCheckpoint) {
  ASSERT_EQ(run("finetune --out " + out("f0") + kTiny).code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "f0" / "report.json")).at("tag"), "finetune/random-init");
  ASSERT_EQ(run("pretrain --out " + out("p") + kTiny).code, 0);
  ASSERT_EQ(run("finetune --out " + out("f1") + " --checkpoint " + (dir_ / "p" / "checkpoint.bin").string() + kTiny)
                .code,
            0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir_ / "f1" / "report.json")).at("tag"), "finetune/pretrained");
}

}  // namespace
