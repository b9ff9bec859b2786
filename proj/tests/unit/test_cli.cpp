#include <gtest/gtest.h>

#include <filesystem>

#include "agal/cli.hpp"
#include "agal/io.hpp"

using namespace agal;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("agal_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string path(const fs::path& p) { return p.string(); }

std::vector<std::string> repro_args(const fs::path& out) {
  return {"repro",           "--seed",          "42",
          "--folds",         "3",               "--n-boot",
          "1",               "--sweep-universe", "60",
          "--sweep-days",    "400",             "--projection-universe",
          "80",              "--projection-days", "300",
          "--projection-boot", "2",             "--sample-size",
          "30",              "--projection-size", "50",
          "--backtest-assets",
          "40",              "--backtest-days", "700",
          "--backtest-lookback", "250",
          "--jobs",          "2",               "--out",
          path(out)};
}

}  // namespace

TEST(Cli, Sha256KnownVector) {
  const fs::path dir = scratch("sha");
  io::write_text(dir / "abc.txt", "abc");
  EXPECT_EQ(cli::sha256_file(dir / "abc.txt"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(cli::run(std::vector<std::string>{}), 2);
  EXPECT_EQ(cli::run({"nonsense"}), 2);
  EXPECT_EQ(cli::run({"cov"}), 2);
  EXPECT_EQ(cli::run({"cov", "--input", "/nonexistent.csv", "--out", "/tmp/x.json"}), 2);
  EXPECT_EQ(cli::run({"--help"}), 0);
}

TEST(Cli, PipelineAndExitCodes) {
  const fs::path dir = scratch("pipe");
  ASSERT_EQ(cli::run({"data", "synth", "--n", "30", "--t", "300", "--seed", "1", "--out", path(dir / "syn")}), 0);
  EXPECT_TRUE(fs::exists(dir / "syn" / "manifest.json"));
  ASSERT_EQ(cli::run({"cov", "--input", path(dir / "syn" / "prices.csv"), "--window", "200", "--folds", "4", "--out",
                      path(dir / "c" / "cov.json")}),
            0);
  ASSERT_EQ(cli::run({"target", "--cov", path(dir / "c" / "cov.json"), "--spec", "mvp", "--out",
                      path(dir / "c" / "t.json")}),
            0);
  ASSERT_EQ(cli::run({"optimize", "--cov", path(dir / "c" / "cov.json"), "--target", path(dir / "c" / "t.json"),
                      "--cap", "0.1", "--out", path(dir / "c" / "w.csv")}),
            0);
  EXPECT_EQ(cli::run({"optimize", "--cov", path(dir / "c" / "cov.json"), "--target", path(dir / "c" / "t.json"),
                      "--cap", "0.01", "--out", path(dir / "c" / "w2.csv")}),
            4);
  EXPECT_EQ(cli::run({"optimize", "--cov", path(dir / "c" / "cov.json"), "--target", path(dir / "c" / "t.json"),
                      "--cap", "0.05", "--max-iter", "1", "--tol", "1e-15", "--out", path(dir / "c" / "w3.csv")}),
            3);
  const auto manifest = io::Json::parse(io::read_text(dir / "c" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "optimize");
  EXPECT_FALSE(manifest.contains("wall_clock"));
}

TEST(Cli, ReproIsByteIdentical) {
  const fs::path a = scratch("repro_a");
  const fs::path b = scratch("repro_b");
  ASSERT_EQ(cli::run(repro_args(a)), 0);
  auto args = repro_args(b);
  args[args.size() - 3] = "1";  // worker count must not matter
  ASSERT_EQ(cli::run(args), 0);
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(io::read_text(entry.path()), io::read_text(b / rel)) << rel;
    ++files;
  }
  EXPECT_GT(files, 10u);
}
