// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include <gtest/gtest.h>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sleeptl/experiment.hpp"
#include "sleeptl/hash.hpp"
#include "sleeptl/metrics.hpp"

extern char** environ;

namespace sleeptl {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct RunOutput {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sleeptl_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunOutput run(std::vector<std::string> args) {
    args.insert(args.begin(), SLEEPTL_CLI_PATH);
    const auto out_path = dir_ / "stdout.txt";
    const auto err_path = dir_ / "stderr.txt";
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_addopen(&actions, 1, out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_addopen(&actions, 2, err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    pid_t pid = 0;
    RunOutput r;
    if (posix_spawn(&pid, SLEEPTL_CLI_PATH, &actions, nullptr, argv.data(), environ) == 0) {
      int status = 0;
      waitpid(pid, &status, 0);
      r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    posix_spawn_file_actions_destroy(&actions);
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
  }

  // Tiny SeqSleepNet+ experiment over synthetic source and target domains.
  fs::path write_config(const std::string& name, std::size_t target_subjects = 4) {
    ExperimentConfig c;
    DomainSpec src = default_domain_spec();
    src.name = "src";
    src.n_subjects = 3;
    src.epochs_per_subject = 8;
    src.seed = 1;
    DomainSpec tgt = mismatch_ladder(src, {2.0})[0];
    tgt.name = "tgt";
    tgt.n_subjects = target_subjects;
    tgt.seed = 2;
    c.source = DataSource{std::nullopt, src};
    c.target = DataSource{std::nullopt, tgt};
    c.stft.win_len_s = 2.0;
    c.stft.hop_s = 3.0;
    c.stft.n_fft = 200;
    c.model.kind = ModelKind::SeqSleepNetPlus;
    c.model.seq_len = 3;
    c.model.n_channels = 1;
    c.model.dropout = 0.0;
    c.model.seqsleepnet.n_frames = c.stft.n_frames(3000);
    c.model.seqsleepnet.n_bins = c.stft.n_bins();
    c.model.seqsleepnet.n_filters = 4;
    c.model.seqsleepnet.epb_hidden = 4;
    c.model.seqsleepnet.attention_size = 4;
    c.model.seqsleepnet.spb_hidden = 4;
    c.train.batch_size = 4;
    c.train.max_steps = 6;
    c.train.eval_every = 3;
    c.pretrain_validation = 1;
    c.folds.kind = "kfold";
    c.folds.k = 2;
    c.folds.n_validation = 1;
    c.checkpoint = dir_ / "pre" / "checkpoint";
    c.output = dir_ / name;
    c.seed = 3;
    const auto path = dir_ / (name + ".json");
    write_text(path, to_json(c).dump(2));
    return path;
  }

  fs::path dir_;
};

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"synth"}).code, 1);  // --output is required
  auto help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  for (const char* cmd : {"prepare", "pretrain", "transfer", "evaluate", "sweep", "synth"}) {
    EXPECT_NE(help.out.find(cmd), std::string::npos) << cmd;
  }
}

TEST_F(CliTest, SynthIsDeterministic) {
  auto a = run({"synth", "--output", (dir_ / "a").string(), "--subjects", "2", "--epochs", "4",
                "--seed", "7", "--channels", "EEG", "EOG"});
  ASSERT_EQ(a.code, 0) << a.err;
  auto b = run({"synth", "--output", (dir_ / "b").string(), "--subjects", "2", "--epochs", "4",
                "--seed", "7", "--channels", "EEG", "EOG"});
  ASSERT_EQ(b.code, 0) << b.err;
  auto index = read_json(dir_ / "a" / "index.json");
  EXPECT_FALSE(index.empty());
  for (const auto& e : fs::directory_iterator(dir_ / "a")) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(sha256_file(e.path()), sha256_file(dir_ / "b" / e.path().filename()))
        << e.path().filename();
  }
  EXPECT_TRUE(fs::exists(dir_ / "a" / "run" / "manifest.json"));
}

TEST_F(CliTest, SynthBadSpecIsUserError) {
  write_text(dir_ / "spec.json", R"({"priors": [1, 0, 0, 0, 0]})");
  auto r = run({"synth", "--spec", (dir_ / "spec.json").string(), "--output", (dir_ / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("priors"), std::string::npos) << r.err;
}

TEST_F(CliTest, PrepareIngestsAndRerunsIdentically) {
  const fs::path in = dir_ / "edf";
  fs::create_directories(in);
  fs::copy_file(fs::path(SLEEPTL_TEST_DATA_DIR) / "annotated.edf", in / "night1.edf");
  write_text(in / "night1.hyp.json", R"({"standard": "RK", "subject": "p1"})");
  write_text(in / "channels.json", R"([{"logical": "EEG", "header_names": ["EEG"]}])");
  auto r1 = run({"prepare", "--input", in.string(), "--output", (dir_ / "c1").string(), "--cache",
                 (dir_ / "cache1").string()});
  ASSERT_EQ(r1.code, 0) << r1.err;
  auto r2 = run({"prepare", "--input", in.string(), "--output", (dir_ / "c2").string(), "--cache",
                 (dir_ / "cache2").string()});
  ASSERT_EQ(r2.code, 0) << r2.err;
  std::size_t cached = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "cache1")) {
    ++cached;
    EXPECT_EQ(sha256_file(e.path()), sha256_file(dir_ / "cache2" / e.path().filename()));
  }
  EXPECT_GT(cached, 0u);
  const auto m1 = read_json(dir_ / "c1" / "run" / "manifest.json");
  EXPECT_EQ(m1["inputs"], read_json(dir_ / "c2" / "run" / "manifest.json")["inputs"]);
  EXPECT_TRUE(m1["inputs"].contains("night1.edf"));
}

TEST_F(CliTest, PrepareMissingSidecarIsUserError) {
  const fs::path in = dir_ / "edf";
  fs::create_directories(in);
  fs::copy_file(fs::path(SLEEPTL_TEST_DATA_DIR) / "annotated.edf", in / "night1.edf");
  auto r = run({"prepare", "--input", in.string(), "--output", (dir_ / "c").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("night1.hyp.json"), std::string::npos) << r.err;
}

TEST_F(CliTest, PretrainWritesOutputsAndIsReproducible) {
  const auto cfg = write_config("pre");
  auto r1 = run({"pretrain", "--config", cfg.string()});
  ASSERT_EQ(r1.code, 0) << r1.err;
  EXPECT_TRUE(fs::exists(dir_ / "pre" / "checkpoint" / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir_ / "pre" / "checkpoint" / "params.bin"));
  const auto curve = slurp(dir_ / "pre" / "curve.csv");
  EXPECT_EQ(curve.rfind("step,split,metric,value\n", 0), 0u);
  const auto report1 = slurp(dir_ / "pre" / "report.json");
  const auto manifest1 = slurp(dir_ / "pre" / "manifest.json");

  auto r2 = run({"pretrain", "--config", cfg.string(), "--output", (dir_ / "pre2").string()});
  ASSERT_EQ(r2.code, 0) << r2.err;
  EXPECT_EQ(sha256_file(dir_ / "pre" / "checkpoint" / "params.bin"),
            sha256_file(dir_ / "pre2" / "checkpoint" / "params.bin"));
  EXPECT_EQ(read_json(dir_ / "pre2" / "report.json")["checkpoint_hash"],
            json::parse(report1)["checkpoint_hash"]);
  EXPECT_EQ(slurp(dir_ / "pre2" / "curve.csv"), curve);
}

TEST_F(CliTest, PretrainBadConfigIsUserError) {
  write_text(dir_ / "bad.json", R"({"model": {"kind": "seqsleepnet+"}, "learning_rate": 1})");
  auto r = run({"pretrain", "--config", (dir_ / "bad.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos) << r.err;
  write_text(dir_ / "broken.json", "{not json");
  EXPECT_EQ(run({"pretrain", "--config", (dir_ / "broken.json").string()}).code, 1);
  EXPECT_EQ(run({"pretrain", "--config", (dir_ / "missing.json").string()}).code, 1);
}

class CliPipelineTest : public CliTest {
 protected:
  void SetUp() override {
    CliTest::SetUp();
    auto r = run({"pretrain", "--config", write_config("pre").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
};

TEST_F(CliPipelineTest, TransferSoftmaxReportsFrozenGroups) {
  auto r = run({"transfer", "--config", write_config("ft").string(), "--strategy", "softmax"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = read_json(dir_ / "ft" / "report.json");
  EXPECT_EQ(report["frozen_groups"], json({"EPB", "SPB"}));
  EXPECT_EQ(report["n_folds"], 2);
  ASSERT_EQ(report["folds"].size(), 2u);
  ConfusionMatrix sum{};
  for (const auto& f : report["folds"]) {
    sum += f["metrics_after"]["confusion"].get<ConfusionMatrix>();
    EXPECT_TRUE(fs::exists(dir_ / "ft" / ("fold_" + std::to_string(f["fold"].get<int>())) /
                           "predictions.csv"));
  }
  EXPECT_EQ(report["pooled"]["metrics_after"]["confusion"].get<ConfusionMatrix>(), sum);
}

TEST_F(CliPipelineTest, TransferNoneLeavesMetrics) {
  auto r = run({"transfer", "--config", write_config("dt").string(), "--strategy", "none"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto report = read_json(dir_ / "dt" / "report.json");
  EXPECT_EQ(report["pooled"]["metrics_before"], report["pooled"]["metrics_after"]);
}

TEST_F(CliPipelineTest, TransferWorkersMatchSerialRun) {
  const auto cfg = write_config("ft");
  auto serial = run({"transfer", "--config", cfg.string()});
  ASSERT_EQ(serial.code, 0) << serial.err;
  auto parallel = run({"transfer", "--config", cfg.string(), "--jobs", "2", "--output",
                       (dir_ / "ftp").string()});
  ASSERT_EQ(parallel.code, 0) << parallel.err;
  for (int f = 0; f < 2; ++f) {
    const std::string fold = "fold_" + std::to_string(f);
    EXPECT_EQ(sha256_file(dir_ / "ft" / fold / "checkpoint" / "params.bin"),
              sha256_file(dir_ / "ftp" / fold / "checkpoint" / "params.bin"));
    EXPECT_EQ(slurp(dir_ / "ft" / fold / "predictions.csv"),
              slurp(dir_ / "ftp" / fold / "predictions.csv"));
  }
  EXPECT_EQ(read_json(dir_ / "ft" / "report.json")["pooled"],
            read_json(dir_ / "ftp" / "report.json")["pooled"]);
}

TEST_F(CliPipelineTest, EvaluateExportsEveryEpoch) {
  auto synth = run({"synth", "--output", (dir_ / "eval_data").string(), "--subjects", "2",
                    "--epochs", "7", "--seed", "9"});
  ASSERT_EQ(synth.code, 0) << synth.err;
  auto r = run({"evaluate", "--checkpoint", (dir_ / "pre" / "checkpoint").string(), "--dataset",
                (dir_ / "eval_data").string(), "--output", (dir_ / "ev").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream csv(dir_ / "ev" / "predictions.csv");
  std::string line;
  std::getline(csv, line);
  std::vector<StageLabel> truth, pred;
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 9u);
    truth.push_back(parse_stage_name(cells[2]).value());
    pred.push_back(parse_stage_name(cells[3]).value());
  }
  EXPECT_EQ(truth.size(), 14u);
  // Kappa recomputed from the exported labels by hand.
  const double n = static_cast<double>(truth.size());
  double agree = 0, pe = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) agree += truth[i] == pred[i];
  for (auto s : {StageLabel::W, StageLabel::N1, StageLabel::N2, StageLabel::N3, StageLabel::REM}) {
    double a = 0, b = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      a += truth[i] == s;
      b += pred[i] == s;
    }
    pe += a * b / (n * n);
  }
  const double kappa = pe >= 1 ? 1.0 : (agree / n - pe) / (1 - pe);
  auto report = read_json(dir_ / "ev" / "report.json");
  EXPECT_NEAR(report["metrics"]["kappa"].get<double>(), kappa, 1e-12);
  EXPECT_NEAR(report["metrics"]["accuracy"].get<double>(), agree / n, 1e-12);
  EXPECT_EQ(report["metrics"]["n"], 14);
}

TEST_F(CliPipelineTest, EvaluateMissingCheckpointIsUserError) {
  auto r = run({"evaluate", "--checkpoint", (dir_ / "nope").string(), "--dataset",
                (dir_ / "nope").string(), "--output", (dir_ / "ev").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST_F(CliPipelineTest, SweepWritesPaddedCurves) {
  const auto cfg = write_config("sw", 6);
  auto r = run({"sweep", "--config", cfg.string(), "--counts", "1,2"});
  ASSERT_EQ(r.code, 0) << r.err;
  auto summary = read_json(dir_ / "sw" / "sweep.json");
  ASSERT_EQ(summary["curves"].size(), 2u);
  std::vector<std::string> files;
  for (const auto& c : summary["curves"]) files.push_back(c["curve"]);
  EXPECT_EQ(files, (std::vector<std::string>{"curve_n1.csv", "curve_n2.csv"}));
  EXPECT_EQ(summary["curves"][0]["padded_points"], summary["curves"][1]["padded_points"]);
  auto lines = [&](const std::string& f) {
    const auto text = slurp(dir_ / "sw" / f);
    return std::count(text.begin(), text.end(), '\n');
  };
  EXPECT_EQ(lines(files[0]), lines(files[1]));

  auto again = run({"sweep", "--config", cfg.string(), "--counts", "1,2", "--output",
                    (dir_ / "sw2").string()});
  ASSERT_EQ(again.code, 0) << again.err;
  for (const auto& f : files) EXPECT_EQ(slurp(dir_ / "sw" / f), slurp(dir_ / "sw2" / f));
  auto s2 = read_json(dir_ / "sw2" / "sweep.json");
  EXPECT_EQ(summary["curves"], s2["curves"]);
}

TEST_F(CliPipelineTest, SweepTooManySubjectsIsUserError) {
  auto r = run({"sweep", "--config", write_config("sw").string(), "--counts", "9"});
  EXPECT_EQ(r.code, 1);
}

}  // namespace
}  // namespace sleeptl
