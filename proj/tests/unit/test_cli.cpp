#include <gtest/gtest.h>

#include <cstdlib>
#include <json.hpp>
#include <sys/wait.h>

#include "support/test_util.hpp"

namespace tomoclass {
namespace {

using testing::slurp;
using testing::TempDir;

struct RunResult
{
    int code = -1;
    std::string output;
};

RunResult run_cli(std::string const& args, TempDir const& dir)
{
    std::string const log = dir.file("cli.log");
    std::string const cmd = std::string("\"") + TOMOCLASS_CLI_PATH + "\" " + args + " > \"" + log
                            + "\" 2>&1";
    int const status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.output = slurp(log);
    return r;
}

std::string const small_scene
    = "--n-range 40 --n-azimuth 48 --granularity 4 --n-rounds 8 --max-depth 3";

TEST(Cli, PipelineWritesEveryArtifact)
{
    TempDir dir;
    std::string const out = dir.file("run");
    auto const r = run_cli("--threads 2 pipeline --out-dir \"" + out + "\" " + small_scene, dir);
    ASSERT_EQ(r.code, 0) << r.output;
    for (char const* f : {"nw.tomo", "se.tomo", "labels.lbl", "lidar.txt", "truth.csv",
                          "merged.tomo", "mask.lbl", "mask.lbl.meta", "table.csv",
                          "model.tcml", "report.txt", "report.csv", "confusion.csv",
                          "predictions.csv", "map.ppm", "heightstats.txt", "heightstats.csv",
                          "violin.csv", "manifest.json"})
        EXPECT_TRUE(std::filesystem::exists(out + "/" + f)) << f;
    auto const man = nlohmann::json::parse(slurp(out + "/manifest.json"));
    EXPECT_EQ(man["command"], "pipeline");
    EXPECT_EQ(man["threads"], 2);
    EXPECT_TRUE(man.contains("seeds"));
    EXPECT_TRUE(man.contains("wall_time_s"));
    auto const report = slurp(out + "/report.txt");
    EXPECT_NE(report.find("Balanced Acc"), std::string::npos);
    auto const hs = slurp(out + "/heightstats.txt");
    EXPECT_NE(hs.find("Tree Name"), std::string::npos);
}

TEST(Cli, PipelineRerunIsReproducible)
{
    TempDir dir;
    std::string const a = dir.file("a"), b = dir.file("b");
    ASSERT_EQ(run_cli("--threads 1 pipeline --out-dir \"" + a + "\" " + small_scene, dir).code, 0);
    ASSERT_EQ(run_cli("--threads 3 pipeline --out-dir \"" + b + "\" " + small_scene, dir).code, 0);
    for (char const* f : {"report.csv", "confusion.csv", "heightstats.csv", "model.tcml",
                          "predictions.csv"})
        EXPECT_EQ(slurp(a + "/" + f), slurp(b + "/" + f)) << f;
}

TEST(Cli, StepByStepMatchesPipelineOutputs)
{
    TempDir dir;
    std::string const d = dir.file("steps");
    std::string const scene = "--n-range 30 --n-azimuth 40 --granularity 4";
    ASSERT_EQ(run_cli("synth --out-dir \"" + d + "\" " + scene, dir).code, 0);
    ASSERT_EQ(run_cli("merge --nw \"" + d + "/nw.tomo\" --se \"" + d + "/se.tomo\" --out \"" + d
                          + "/merged.tomo\"",
                      dir)
                  .code,
              0);
    ASSERT_EQ(run_cli("split --labels \"" + d + "/labels.lbl\" --out \"" + d
                          + "/mask.lbl\" --method square --square-side 0.1",
                      dir)
                  .code,
              0);
    ASSERT_EQ(run_cli("features --cube \"" + d + "/merged.tomo\" --labels \"" + d
                          + "/labels.lbl\" --mask \"" + d + "/mask.lbl\" --out \"" + d
                          + "/table.csv\" --xy",
                      dir)
                  .code,
              0);
    auto const r = run_cli("train --table \"" + d + "/table.csv\" --out \"" + d
                               + "/model.tcml\" --learner forest --n-trees 10",
                           dir);
    ASSERT_EQ(r.code, 0) << r.output;
    ASSERT_EQ(run_cli("evaluate --model \"" + d + "/model.tcml\" --table \"" + d
                          + "/table.csv\" --out-dir \"" + d + "/eval\"",
                      dir)
                  .code,
              0);
    EXPECT_TRUE(std::filesystem::exists(d + "/eval/report.csv"));
    ASSERT_EQ(run_cli("render --labels \"" + d + "/labels.lbl\" --predictions \"" + d
                          + "/eval/predictions.csv\" --out \"" + d + "/map.ppm\"",
                      dir)
                  .code,
              0);
    EXPECT_EQ(slurp(d + "/map.ppm").substr(0, 3), "P6\n");
    ASSERT_EQ(run_cli("heightstats --cube \"" + d + "/merged.tomo\" --labels \"" + d
                          + "/labels.lbl\" --mask \"" + d + "/mask.lbl\" --lidar \"" + d
                          + "/lidar.txt\" --out-dir \"" + d + "/hs\"",
                      dir)
                  .code,
              0);
    EXPECT_TRUE(std::filesystem::exists(d + "/hs/heightstats.csv"));
    EXPECT_TRUE(std::filesystem::exists(d + "/hs/violin.csv"));
}

TEST(Cli, ExitCodes)
{
    TempDir dir;
    EXPECT_EQ(run_cli("--help", dir).code, 0);
    EXPECT_EQ(run_cli("", dir).code, 1);
    auto const unknown = run_cli("pipeline --no-such-flag", dir);
    EXPECT_EQ(unknown.code, 1);
    auto const frac = run_cli("split --method swath --test-frac 1.5", dir);
    EXPECT_EQ(frac.code, 1);
    EXPECT_NE(frac.output.find("test-frac must be in (0,1)"), std::string::npos) << frac.output;
    auto const missing = run_cli("merge --nw \"" + dir.file("nope.tomo") + "\" --se x --out y",
                                 dir);
    EXPECT_EQ(missing.code, 1);
    // A corrupt cube is a runtime failure.
    testing::spit(dir.file("bad.tomo"), "garbage");
    auto const bad = run_cli("merge --nw \"" + dir.file("bad.tomo") + "\" --se \""
                                 + dir.file("bad.tomo") + "\" --out \"" + dir.file("m.tomo")
                                 + "\"",
                             dir);
    EXPECT_EQ(bad.code, 2);
}

TEST(Cli, ConfigFileSuppliesPipelineOptions)
{
    TempDir dir;
    std::string const out = dir.file("cfg");
    // Flags on the command line override the config file.
    auto const r = run_cli("--config \"" + std::string(TOMOCLASS_CONFIG_DIR)
                               + "/square_xy.toml\" pipeline --out-dir \"" + out + "\" "
                               + small_scene,
                           dir);
    ASSERT_EQ(r.code, 0) << r.output;
    auto const man = nlohmann::json::parse(slurp(out + "/manifest.json"));
    auto const meta = slurp(out + "/mask.lbl.meta");
    EXPECT_NE(meta.find("method = square"), std::string::npos);
    auto const header = slurp(out + "/table.csv");
    EXPECT_NE(header.find("include_xy=1"), std::string::npos);
}

}  // namespace
}  // namespace tomoclass
