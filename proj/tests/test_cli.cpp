#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "avuseg/volumes.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "avuseg_test_cli";

int run(const std::string& args) {
  const std::string cmd =
      std::string(AVUSEG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p);
  f << content;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct Fixture {
  Fixture() {
    fs::remove_all(kDir);
    fs::create_directories(kDir);
    write_file(kDir / "spec.json",
               R"({"num_scans": 6, "size": 16, "seed": 11,
                   "train": 4, "val": 1, "test": 1})");
    write_file(kDir / "train.json",
               R"({"variant": "det", "loss": "ce", "epochs": 2,
                   "c1": 2, "c2": 3, "seed": 5})");
    REQUIRE(run("gen --spec " + (kDir / "spec.json").string() + " --out " +
                (kDir / "data").string()) == 0);
    REQUIRE(run("train --config " + (kDir / "train.json").string() +
                " --data " + (kDir / "data").string() + " --out " +
                (kDir / "run").string()) == 0);
  }
};

}  // namespace

TEST_CASE("full pipeline with deterministic reruns") {
  const Fixture fx;

  // gen rerun: identical volume CRCs.
  REQUIRE(run("gen --spec " + (kDir / "spec.json").string() + " --out " +
              (kDir / "data2").string()) == 0);
  int volumes = 0;
  for (const auto& entry : fs::directory_iterator(kDir / "data")) {
    if (entry.path().extension() != ".uevol") continue;
    ++volumes;
    CHECK(avuseg::crc64_file(entry.path()) ==
          avuseg::crc64_file(kDir / "data2" / entry.path().filename()));
  }
  CHECK(volumes == 6 * 3);

  // train rerun: identical checkpoint bytes.
  REQUIRE(run("train --config " + (kDir / "train.json").string() + " --data " +
              (kDir / "data").string() + " --out " + (kDir / "run2").string()) ==
          0);
  CHECK(slurp(kDir / "run" / "checkpoint.ueckpt") ==
        slurp(kDir / "run2" / "checkpoint.ueckpt"));
  CHECK(slurp(kDir / "run" / "train_log.csv") ==
        slurp(kDir / "run2" / "train_log.csv"));

  // eval twice: byte-identical reports.
  const std::string eval_args = " --data " + (kDir / "data").string() +
                                " --checkpoint " +
                                (kDir / "run" / "checkpoint.ueckpt").string() +
                                " --seed 3";
  REQUIRE(run("eval" + eval_args + " --out " + (kDir / "eval1").string()) == 0);
  REQUIRE(run("eval" + eval_args + " --out " + (kDir / "eval2").string()) == 0);
  CHECK(slurp(kDir / "eval1" / "report.json") ==
        slurp(kDir / "eval2" / "report.json"));
  CHECK(fs::exists(kDir / "eval1" / "curves_model"));

  // Two checkpoints, B = A: degenerate Wilcoxon pairing is reported.
  REQUIRE(run("eval" + eval_args + " --checkpoint " +
              (kDir / "run2" / "checkpoint.ueckpt").string() + " --out " +
              (kDir / "evalcmp").string()) == 0);
  const auto cmp = slurp(kDir / "evalcmp" / "report.json");
  const std::string cmp_text(cmp.begin(), cmp.end());
  CHECK(cmp_text.find("degenerate pairing") != std::string::npos);

  // heatmap: PNG exists with manifest.
  REQUIRE(run("heatmap --checkpoint " +
              (kDir / "run" / "checkpoint.ueckpt").string() + " --data " +
              (kDir / "data").string() + " --scan scan05 --out " +
              (kDir / "hm.png").string()) == 0);
  CHECK(fs::exists(kDir / "hm.png"));
  CHECK(fs::exists(kDir / "hm.png.manifest.json"));
}

TEST_CASE("usage errors exit with 2") {
  fs::remove_all(kDir);
  fs::create_directories(kDir);
  CHECK(run("") == 2);
  CHECK(run("gen --spec missing.json --out " + (kDir / "x").string()) == 2);

  write_file(kDir / "bad_field.json", R"({"num_scan": 4})");
  CHECK(run("gen --spec " + (kDir / "bad_field.json").string() + " --out " +
            (kDir / "x").string()) == 2);

  write_file(kDir / "bad_size.json",
             R"({"num_scans": 3, "size": 10, "train": 1, "val": 1, "test": 1})");
  CHECK(run("gen --spec " + (kDir / "bad_size.json").string() + " --out " +
            (kDir / "x").string()) == 2);

  write_file(kDir / "spec.json",
             R"({"num_scans": 3, "size": 16, "train": 1, "val": 1, "test": 1})");
  REQUIRE(run("gen --spec " + (kDir / "spec.json").string() + " --out " +
              (kDir / "data").string()) == 0);
  write_file(kDir / "bad_loss.json", R"({"loss": "nope", "epochs": 1})");
  CHECK(run("train --config " + (kDir / "bad_loss.json").string() + " --data " +
            (kDir / "data").string() + " --out " + (kDir / "y").string()) == 2);

  // Runtime failure (missing checkpoint) exits with 1.
  CHECK(run("eval --checkpoint nope.ueckpt --data " + (kDir / "data").string() +
            " --out " + (kDir / "z").string()) == 1);
}
