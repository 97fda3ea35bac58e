#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "synthmix/dataio.hpp"
#include "test_env.hpp"

using namespace synthmix;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + SYNTHMIX_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

// Dataset plus a trained two-iteration run, shared by every test here.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testenv::TempDir("cli");
    const auto& d = dir_->path();
    write_json(d / "spec.json", to_json(testenv::small_spec(32, 4, 2)));
    gen_rc_ = cli("gen-data --spec " + (d / "spec.json").string() + " --out " + (d / "data").string(), d / "gen.log");
    json cfg = {{"version", 1},
                {"dataset", "data"},
                {"iterations", 2},
                {"eval_interval", 2},
                {"mask", {{"k", 4}}},
                {"model", {{"inspector_depth", 3}}}};
    write_json(d / "run.json", cfg);
    train_rc_ = cli("train --config " + (d / "run.json").string() + " --out " + (d / "run").string(), d / "train.log");
  }
  static void TearDownTestSuite() { delete dir_; }

  static const fs::path& d() { return dir_->path(); }

  static testenv::TempDir* dir_;
  static int gen_rc_, train_rc_;
};

testenv::TempDir* CliTest::dir_ = nullptr;
int CliTest::gen_rc_ = -1;
int CliTest::train_rc_ = -1;

}  // namespace

TEST_F(CliTest, GenDataAndTrainSucceed) {
  EXPECT_EQ(gen_rc_, 0) << read_text(d() / "gen.log");
  EXPECT_EQ(train_rc_, 0) << read_text(d() / "train.log");
  EXPECT_TRUE(fs::exists(d() / "data" / "manifest.json"));
  EXPECT_TRUE(fs::exists(d() / "run" / "final.ckpt"));
  EXPECT_TRUE(fs::exists(d() / "run" / "final_report.json"));
  EXPECT_TRUE(fs::exists(d() / "run" / "runlog.json"));
}

TEST_F(CliTest, EvalIsRepeatable) {
  const std::string args = "eval --checkpoint " + (d() / "run" / "final.ckpt").string() + " --data " +
                           (d() / "data").string() + " --split test --out ";
  ASSERT_EQ(cli(args + (d() / "e1.json").string(), d() / "e1.log"), 0) << read_text(d() / "e1.log");
  ASSERT_EQ(cli(args + (d() / "e2.json").string(), d() / "e2.log"), 0);
  EXPECT_EQ(read_text(d() / "e1.json"), read_text(d() / "e2.json"));
  EXPECT_EQ(read_text(d() / "e1.csv"), read_text(d() / "e2.csv"));
  EXPECT_EQ(cli(args + (d() / "e3.json").string() + " --split valid", d() / "e3.log"), 2);
}

TEST_F(CliTest, UnknownConfigKeyExitsWithConfigCode) {
  write_json(d() / "bad.json", {{"version", 1}, {"dataset", "data"}, {"iteratons", 5}});
  EXPECT_EQ(cli("train --config " + (d() / "bad.json").string() + " --out " + (d() / "bad").string(), d() / "bad.log"), 2);
  EXPECT_NE(read_text(d() / "bad.log").find("iteratons"), std::string::npos);
  write_json(d() / "v2.json", {{"version", 2}, {"dataset", "data"}});
  EXPECT_EQ(cli("train --config " + (d() / "v2.json").string() + " --out " + (d() / "bad").string(), d() / "v2.log"), 2);
}

TEST_F(CliTest, UsageErrorsExitWithConfigCode) {
  EXPECT_EQ(cli("", d() / "u0.log"), 2);
  EXPECT_EQ(cli("train --out x", d() / "u1.log"), 2);
  EXPECT_EQ(cli("frobnicate", d() / "u2.log"), 2);
  EXPECT_EQ(cli("--help", d() / "u3.log"), 0);
}

TEST_F(CliTest, MissingDatasetExitsWithDataCode) {
  write_json(d() / "nodata.json", {{"version", 1}, {"dataset", "does_not_exist"}, {"iterations", 1}});
  EXPECT_EQ(cli("train --config " + (d() / "nodata.json").string() + " --out " + (d() / "nd").string(), d() / "nd.log"), 3);
  EXPECT_EQ(cli("eval --checkpoint " + (d() / "nope.ckpt").string() + " --data " + (d() / "data").string() + " --out " +
                    (d() / "x.json").string(),
                d() / "nd2.log"),
            3);
}

TEST_F(CliTest, CorruptedBlobExitsWithDataCode) {
  fs::copy(d() / "data", d() / "corrupt", fs::copy_options::recursive);
  const auto m = load_manifest(d() / "corrupt");
  {
    std::fstream f(d() / "corrupt" / m.samples[0].image_path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x11');
  }
  write_json(d() / "corrupt.json", {{"version", 1}, {"dataset", "corrupt"}, {"iterations", 1}, {"mask", {{"k", 4}}},
                                    {"model", {{"inspector_depth", 3}}}});
  EXPECT_EQ(cli("train --config " + (d() / "corrupt.json").string() + " --out " + (d() / "cr").string(), d() / "cr.log"), 3);
  EXPECT_NE(read_text(d() / "cr.log").find("checksum"), std::string::npos);
}

TEST_F(CliTest, NonFiniteInputExitsWithDivergenceCode) {
  // Valid checksums over NaN pixels: the data layer accepts it, training diverges.
  fs::copy(d() / "data", d() / "nan", fs::copy_options::recursive);
  auto j = json::parse(read_text(d() / "nan" / "manifest.json"));
  for (auto& s : j["samples"]) {
    if (s["domain"] != "source" || s["split"] != "train") continue;
    const auto p = d() / "nan" / s["image"].get<std::string>();
    std::vector<float> px(32 * 32, std::numeric_limits<float>::quiet_NaN());
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(px.data()), px.size() * sizeof(float));
    s["image_crc32"] = hex32(crc32_of(px.data(), px.size() * sizeof(float)));
  }
  write_json(d() / "nan" / "manifest.json", j);
  write_json(d() / "nan.json", {{"version", 1}, {"dataset", "nan"}, {"iterations", 2}, {"mask", {{"k", 4}}},
                                {"model", {{"inspector_depth", 3}}}});
  EXPECT_EQ(cli("train --config " + (d() / "nan.json").string() + " --out " + (d() / "nanrun").string(), d() / "nan.log"), 4)
      << read_text(d() / "nan.log");
  EXPECT_TRUE(fs::exists(d() / "nanrun" / "diverged_0.ckpt"));
}

TEST_F(CliTest, AblateDedupsKAndPlotRendersPanels) {
  const std::string out = (d() / "abl").string();
  ASSERT_EQ(cli("ablate --config " + (d() / "run.json").string() + " --k 4,4 --out " + out, d() / "abl.log"), 0)
      << read_text(d() / "abl.log");
  EXPECT_NE(read_text(d() / "abl.log").find("duplicate k=4"), std::string::npos);
  const auto table = json::parse(read_text(d() / "abl" / "ablation.json"));
  EXPECT_EQ(table["rows"].size(), 3u);
  ASSERT_EQ(cli("plot --in " + out + " --out " + (d() / "figs").string(), d() / "plot.log"), 0) << read_text(d() / "plot.log");
  std::size_t panels = 0;
  for (const auto& e : fs::directory_iterator(d() / "figs")) panels += e.path().extension() == ".png";
  EXPECT_EQ(panels, 3u);
  fs::create_directories(d() / "empty");
  EXPECT_EQ(cli("plot --in " + (d() / "empty").string() + " --out " + (d() / "figs2").string(), d() / "plot2.log"), 3);
  EXPECT_FALSE(fs::exists(d() / "figs2"));
}

TEST_F(CliTest, AblateRejectsIndivisibleK) {
  EXPECT_EQ(cli("ablate --config " + (d() / "run.json").string() + " --k 5 --out " + (d() / "abl5").string(),
                d() / "abl5.log"),
            2);
}
