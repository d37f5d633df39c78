#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "dshift/evaluation.hpp"
#include "dshift/fs_util.hpp"
#include "dshift/raster.hpp"
#include "dshift/segmentation.hpp"
#include "test_support.hpp"

namespace dshift {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

class CliTest : public ::testing::Test {
 protected:
  testing::TempDir dir{"cli"};

  std::string path(const std::string& name) const { return (dir / name).string(); }

  void write_pair() {
    save_image(testing::smooth_raster(24, 24, 3, 0.0), dir / "style.png");
    save_image(testing::smooth_raster(24, 24, 3, 1.3), dir / "content.png");
  }

  void write_report() {
    EvaluationReport r;
    r.models = {"m1", "m2"};
    r.baseline = {"Base", {83.61, 13.64}};
    r.rows = {{"NST", {95.64, 89.21}}};
    write_file(dir / "report.json", render_report(r, ReportFormat::json));
  }
};

TEST_F(CliTest, VersionAndHelp) {
  const Outcome v = invoke({"--version"});
  EXPECT_EQ(v.code, cli::kExitOk);
  EXPECT_NE(v.out.find("dshift"), std::string::npos);
  for (const auto& name : {"nst", "strotss", "cyclegan", "cut", "fastcut", "dia"})
    EXPECT_NE(v.out.find(name), std::string::npos) << name;
  EXPECT_EQ(invoke({"--help"}).code, cli::kExitOk);
  EXPECT_EQ(invoke({"transfer", "--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(invoke({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(invoke({"transfer", "--style", "x.png"}).code, cli::kExitUsage);
  write_pair();
  const Outcome bad = invoke({"transfer", "--algorithm", "pastiche", "--style", path("style.png"), "--content",
                              path("content.png"), "--out", path("o.png")});
  EXPECT_EQ(bad.code, cli::kExitUsage);
  EXPECT_NE(bad.err.find("strotss"), std::string::npos);
}

TEST_F(CliTest, RuntimeErrorsExitTwoWithStage) {
  const Outcome missing = invoke({"report", "--in", path("nope.json")});
  EXPECT_EQ(missing.code, cli::kExitRuntime);
  EXPECT_NE(missing.err.find("error in"), std::string::npos);
  write_pair();
  const Outcome ext = invoke({"transfer", "--algorithm", "dia", "--style", path("style.png"), "--content",
                              path("content.png"), "--out", path("o.png")});
  EXPECT_NE(ext.code, cli::kExitOk);
  EXPECT_NE(ext.err.find("not implemented"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "o.png"));
}

TEST_F(CliTest, TransferWritesOutputsAndRefusesOverwrite) {
  write_pair();
  const std::vector<std::string> args{"transfer", "--algorithm", "nst", "--style", path("style.png"),
                                      "--content", path("content.png"), "--out", path("o.png"),
                                      "--iterations", "3", "--trace", path("trace.csv"),
                                      "--provenance", path("prov.json")};
  const Outcome first = invoke(args);
  ASSERT_EQ(first.code, cli::kExitOk) << first.err;
  const ImageRaster out = load_image(dir / "o.png");
  EXPECT_EQ(out.height(), 24);
  EXPECT_EQ(out.width(), 24);
  EXPECT_EQ(read_text(dir / "trace.csv").substr(0, 9), "iteration");
  const auto prov = nlohmann::json::parse(read_text(dir / "prov.json"));
  EXPECT_TRUE(prov.contains("hyperparams"));

  const std::string before = read_text(dir / "o.png");
  EXPECT_EQ(invoke(args).code, cli::kExitUsage);
  EXPECT_EQ(read_text(dir / "o.png"), before);
  std::vector<std::string> again = args;
  again.push_back("--overwrite");
  EXPECT_EQ(invoke(again).code, cli::kExitOk);
}

TEST_F(CliTest, ReportRendersEveryFormat) {
  write_report();
  const Outcome text = invoke({"report", "--in", path("report.json")});
  ASSERT_EQ(text.code, cli::kExitOk) << text.err;
  EXPECT_NE(text.out.find("95.64↑"), std::string::npos);
  const Outcome csv = invoke({"report", "--in", path("report.json"), "--format", "csv"});
  EXPECT_EQ(csv.out.substr(0, csv.out.find('\n')), "method,model,base,value,delta,direction");
  ASSERT_EQ(invoke({"report", "--in", path("report.json"), "--out", path("r.json")}).code, cli::kExitOk);
  EXPECT_EQ(read_text(dir / "r.json"), read_text(dir / "report.json"));
}

TEST_F(CliTest, ConfigFileMergesNamespacedKeys) {
  write_report();
  write_file(dir / "cfg.json", R"({"report.format": "csv", "transfer.iterations": 2})");
  const Outcome viaConfig = invoke({"report", "--in", path("report.json"), "--config", path("cfg.json")});
  ASSERT_EQ(viaConfig.code, cli::kExitOk) << viaConfig.err;
  EXPECT_EQ(viaConfig.out.substr(0, 6), "method");
  EXPECT_NE(viaConfig.out.find(",up"), std::string::npos);

  const Outcome flagWins =
      invoke({"report", "--in", path("report.json"), "--format", "json", "--config", path("cfg.json")});
  EXPECT_EQ(flagWins.out.substr(0, 1), "{");

  const auto merged = cli::apply_config({"report", "--in", "x", "--config", path("cfg.json")});
  EXPECT_EQ(merged, (std::vector<std::string>{"report", "--in", "x", "--format", "csv"}));

  write_file(dir / "unknown.json", R"({"report.colour": "red"})");
  EXPECT_EQ(invoke({"report", "--in", path("report.json"), "--config", path("unknown.json")}).code,
            cli::kExitUsage);
  write_file(dir / "flat.json", R"({"format": "csv"})");
  EXPECT_EQ(invoke({"report", "--in", path("report.json"), "--config", path("flat.json")}).code, cli::kExitUsage);
}

TEST_F(CliTest, SegmentTrainThenEvaluate) {
  testing::write_disc_dataset(dir / "data", 6, 24, 3);
  const Outcome train = invoke({"segment-train", "--train", path("data"), "--out", path("unet.ckpt"),
                                "--input-size", "24", "--learning-rate", "0.01", "--max-epochs", "2",
                                "--history", path("hist.csv")});
  ASSERT_EQ(train.code, cli::kExitOk) << train.err;
  EXPECT_TRUE(fs::exists(dir / "unet.ckpt"));
  EXPECT_EQ(read_text(dir / "hist.csv").substr(0, 25), "epoch,train_loss,val_iou\n");

  const Outcome eval = invoke({"evaluate", "--model", "toy=" + path("unet.ckpt"), "--baseline", path("data"),
                               "--method", "same=" + path("data"), "--out", path("rep.json"), "--per-image",
                               path("per.csv")});
  ASSERT_EQ(eval.code, cli::kExitOk) << eval.err;
  const EvaluationReport rep = parse_report_json(read_text(dir / "rep.json"));
  ASSERT_EQ(rep.models, std::vector<std::string>{"toy"});
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_EQ(rep.rows[0].values, rep.baseline.values);
  EXPECT_EQ(read_text(dir / "per.csv").substr(0, 28), "model,dataset,image,iou,note");
}

TEST_F(CliTest, TranslateTrainAndApply) {
  testing::write_disc_dataset(dir / "src", 3, 16, 1, false);
  testing::write_disc_dataset(dir / "tgt", 3, 16, 2, false);
  const Outcome train = invoke({"translate", "train", "--algorithm", "fastcut", "--source", path("src/images"),
                                "--target", path("tgt/images"), "--out", path("model"), "--epochs", "1",
                                "--image-size", "16"});
  ASSERT_EQ(train.code, cli::kExitOk) << train.err;
  EXPECT_TRUE(fs::exists(dir / "model" / "model.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "model" / "epoch_0001.ckpt"));
  EXPECT_EQ(read_text(dir / "model" / "losses.csv").substr(0, 6), "epoch,");

  const Outcome apply = invoke({"translate", "apply", "--model", path("model/model.ckpt"), "--direction",
                                "target-to-source", "--in", path("tgt/images"), "--out", path("translated")});
  ASSERT_EQ(apply.code, cli::kExitOk) << apply.err;
  EXPECT_EQ(list_images(dir / "translated").size(), 3u);
  const Outcome wrongDir = invoke({"translate", "apply", "--model", path("model/model.ckpt"), "--direction",
                                   "source-to-target", "--in", path("tgt/images"), "--out", path("t2")});
  EXPECT_EQ(wrongDir.code, cli::kExitRuntime);
  const Outcome wrongAlg = invoke({"translate", "apply", "--model", path("model/model.ckpt"), "--algorithm",
                                   "cyclegan", "--direction", "target-to-source", "--in", path("tgt/images"),
                                   "--out", path("t3")});
  EXPECT_EQ(wrongAlg.code, cli::kExitRuntime);
}

TEST_F(CliTest, IdentityBenchmarkReport) {
  const Outcome b = invoke({"benchmark", "--transform", "identity", "--images", "10", "--image-size", "32",
                            "--max-epochs", "2", "--unet-learning-rate", "0.01", "--out", path("b.json")});
  ASSERT_EQ(b.code, cli::kExitOk) << b.err;
  const EvaluationReport r = parse_report_json(read_text(dir / "b.json"));
  EXPECT_EQ(r.baseline.method, "B-raw");
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[1].values, r.baseline.values);
}

}  // namespace
}  // namespace dshift
