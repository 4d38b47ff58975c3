#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "survseq/checkpoint.hpp"
#include "survseq/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "survseq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = survseq::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

const char* kSynthetic = R"([synthetic]
num_covariates = 4
n_samples = 60
max_event_time = 30
max_steps = 6
seed = 3
)";

const char* kModel = R"([discretization]
bin_width = 3
max_event_time = 30
[model]
hidden = 6
[train]
max_epochs = 2
batch_size = 16
[cv]
folds = 2
)";

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("survseq_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
           std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  fs::path write(const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return dir / name;
  }
  std::string synthetic_config() { return write("synthetic.ini", std::string(kSynthetic) + kModel).string(); }
  std::string path(const std::string& name) { return (dir / name).string(); }
};

}  // namespace

TEST(CliBinary, UnknownFlagIsUsageError) {
  const fs::path err = fs::temp_directory_path() / ("survseq_cli_err_" + std::to_string(::getpid()));
  const std::string cmd = std::string(SURVSEQ_CLI_PATH) + " train --no-such-flag > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 2);
  const std::string text = slurp(err);
  fs::remove(err);
  EXPECT_TRUE(starts_with(text, "error: usage: ")) << text;
  EXPECT_NE(text.find("--config"), std::string::npos);
}

TEST(CliBinary, HelpExitsCleanly) {
  const std::string cmd = std::string(SURVSEQ_CLI_PATH) + " --help > /dev/null";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
}

TEST_F(Cli, MissingSubcommandOrConfigIsUsage) {
  EXPECT_EQ(run({}).code, 2);
  const auto r = run({"train"});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(starts_with(r.err, "error: usage: --config is required")) << r.err;
}

TEST_F(Cli, UnreadableConfigIsConfigError) {
  const auto r = run({"train", "--config", path("absent.ini")});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(starts_with(r.err, "error: config: ")) << r.err;
  write("bad.ini", "[model]\nhidden = lots\n");
  EXPECT_EQ(run({"cv", "--config", path("bad.ini")}).code, 1);
}

TEST_F(Cli, GenerateWritesCohortDeterministically) {
  write("gen.ini", kSynthetic);
  const auto a = run({"generate", "--config", path("gen.ini"), "--out-dir", path("a")});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("subjects 60"), std::string::npos);
  for (const char* f : {"observations.csv", "labels.csv", "manifest.txt"}) EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  EXPECT_EQ(lines_of(dir / "a" / "labels.csv").size(), 61u);

  ASSERT_EQ(run({"generate", "--config", path("gen.ini"), "--out-dir", path("b")}).code, 0);
  EXPECT_EQ(slurp(dir / "a" / "observations.csv"), slurp(dir / "b" / "observations.csv"));
  ASSERT_EQ(run({"generate", "--config", path("gen.ini"), "--seed", "99", "--out-dir", path("c")}).code, 0);
  EXPECT_NE(slurp(dir / "a" / "observations.csv"), slurp(dir / "c" / "observations.csv"));
}

TEST_F(Cli, TrainPredictAndExportPlots) {
  const auto cfg = synthetic_config();
  const auto t = run({"train", "--config", cfg, "--out-dir", path("run")});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_NE(t.out.find("epoch 1 train_loss"), std::string::npos);
  const auto history = lines_of(dir / "run" / "history.csv");
  ASSERT_EQ(history.size(), 3u);
  EXPECT_EQ(history[0], "epoch,train_loss,validation_loss");
  EXPECT_TRUE(starts_with(history[1], "1,"));
  const auto manifest = lines_of(dir / "run" / "run_manifest.txt");
  ASSERT_FALSE(manifest.empty());
  EXPECT_TRUE(starts_with(manifest[0], "; survseq "));

  const std::string ckpt = path("run/model.ckpt");
  const auto p = run({"predict", "--checkpoint", ckpt, "--out-dir", path("pred")});
  ASSERT_EQ(p.code, 0) << p.err;
  const auto table = lines_of(dir / "pred" / "predictions.csv");
  ASSERT_GE(table.size(), 4u);
  EXPECT_EQ(table[0], "# bin_width = 3");
  EXPECT_EQ(table[1], "# horizon = 13");
  EXPECT_EQ(table[3], "subject_id,event,bin,probability,cdf");
  EXPECT_EQ(table.size(), 4u + 60u * 2u * 13u);
  const auto times = lines_of(dir / "pred" / "predicted_times.csv");
  EXPECT_EQ(times[0], "subject_id,event,predicted_time");
  EXPECT_EQ(times.size(), 1u + 60u * 2u);

  ASSERT_EQ(run({"predict", "--checkpoint", ckpt, "--out-dir", path("pred2")}).code, 0);
  EXPECT_EQ(slurp(dir / "pred" / "predictions.csv"), slurp(dir / "pred2" / "predictions.csv"));

  const auto e = run({"export-plots", "--checkpoint", ckpt, "--sample", "s00003", "--out-dir", path("plots")});
  ASSERT_EQ(e.code, 0) << e.err;
  for (int k : {1, 2}) {
    const auto curve = lines_of(dir / "plots" / ("s00003_event" + std::to_string(k) + ".csv"));
    ASSERT_EQ(curve.size(), 3u + 13u);  // ceil(1.25 * 30 / 3) bins
    EXPECT_EQ(curve[2], "bin,time,pdf,cdf");
  }
  const auto missing = run({"export-plots", "--checkpoint", ckpt, "--sample", "nobody", "--out-dir", path("plots")});
  EXPECT_EQ(missing.code, 1);
  EXPECT_TRUE(starts_with(missing.err, "error: data: unknown sample")) << missing.err;
  EXPECT_EQ(run({"export-plots", "--checkpoint", ckpt}).code, 2);
}

TEST_F(Cli, CrossValidateAndEvaluateWriteReports) {
  const auto cfg = synthetic_config();
  const auto cv = run({"cv", "--config", cfg, "--out-dir", path("cv")});
  ASSERT_EQ(cv.code, 0) << cv.err;
  const auto csv = lines_of(dir / "cv" / "report.csv");
  ASSERT_GE(csv.size(), 2u);
  EXPECT_EQ(csv[0], "model,event,quantile,metric,mean,std,lower,upper");
  EXPECT_TRUE(starts_with(csv[1], "recurrent,1,"));
  const std::string text = slurp(dir / "cv" / "report.txt");
  EXPECT_NE(text.find("folds = 2"), std::string::npos);
  EXPECT_NE(text.find("fold.1.stop_reason"), std::string::npos);

  ASSERT_EQ(run({"train", "--config", cfg, "--out-dir", path("run")}).code, 0);
  const auto ev = run({"evaluate", "--checkpoint", path("run/model.ckpt"), "--out-dir", path("eval")});
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_TRUE(fs::exists(dir / "eval" / "report.csv"));
}

TEST_F(Cli, IngestedCovariateMismatchIsDataError) {
  write("gen4.ini", kSynthetic);
  ASSERT_EQ(run({"generate", "--config", path("gen4.ini"), "--out-dir", path("four")}).code, 0);
  std::string five = kSynthetic;
  five.replace(five.find("num_covariates = 4"), 18, "num_covariates = 5");
  write("gen5.ini", five);
  ASSERT_EQ(run({"generate", "--config", path("gen5.ini"), "--out-dir", path("five")}).code, 0);

  auto data_config = [&](const std::string& sub) {
    return write(sub + ".ini", "[data]\nobservations = " + path(sub + "/observations.csv") + "\nlabels = " +
                                   path(sub + "/labels.csv") + "\n" + kModel)
        .string();
  };
  ASSERT_EQ(run({"train", "--config", data_config("four"), "--out-dir", path("run")}).code, 0);
  const auto r = run({"predict", "--checkpoint", path("run/model.ckpt"), "--config", data_config("five"), "--out-dir",
                      path("pred")});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(starts_with(r.err, "error: data: covariate mismatch")) << r.err;
  EXPECT_NE(r.err.find("x04"), std::string::npos);
}

TEST_F(Cli, CorruptCheckpointIsReported) {
  write("junk.ckpt", "not a checkpoint");
  const auto r = run({"predict", "--checkpoint", path("junk.ckpt"), "--out-dir", path("pred")});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(starts_with(r.err, "error: checkpoint: ")) << r.err;
}
