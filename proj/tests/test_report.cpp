#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "avuseg/heatmap.hpp"
#include "avuseg/report.hpp"

using namespace avuseg;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "avuseg_test_report";

ScanEval sample_scan() {
  ScanEval s;
  s.id = "scan00";
  s.dice = 0.123456789;
  s.ece = 0.05;
  s.avu_auc = 0.9;
  s.roc_auc = 0.8;
  s.prc_auc = 0.25;
  s.avu.thresholds = {0.0, 0.5, 1.0};
  s.avu.ys = {0.7, 0.8, 0.9};
  s.avu.auc = 0.8;
  s.roc.xs = {0.0, 0.4, 1.0};
  s.roc.ys = {0.0, 0.7, 1.0};
  s.roc.thresholds = {0.0, 0.5, 1.0};
  return s;
}

}  // namespace

TEST_CASE("round6 and csv formatting") {
  CHECK(round6(0.1234567891) == 0.123457);
  CHECK(round6(1.0) == 1.0);

  const ScanEval s = sample_scan();
  CHECK(curve_csv(s.avu) ==
        "threshold,value\n0.000000,0.700000\n0.500000,0.800000\n"
        "1.000000,0.900000\n");
  const std::string roc = curve_csv(s.roc);
  CHECK(roc.substr(0, 14) == "threshold,x,y\n");
  CHECK(roc.find("0.400000,0.700000") != std::string::npos);
}

TEST_CASE("scan json carries fixed keys, null for excluded aucs") {
  ScanEval s = sample_scan();
  auto j = scan_eval_json(s);
  CHECK(j["dice"] == 0.123457);
  CHECK(j["roc_auc"] == 0.8);
  s.roc_auc.reset();
  j = scan_eval_json(s);
  CHECK(j["roc_auc"].is_null());
}

TEST_CASE("summary json structure") {
  EvalSummary sum;
  sum.scans = {sample_scan()};
  sum.stats["dice"] = {0.5, 0.1, 1};
  sum.roc_excluded = 2;
  const auto j = summary_json(sum);
  CHECK(j["schema"] == kReportSchema);
  CHECK(j["roc_excluded"] == 2);
  CHECK(j["stats"]["dice"]["mean"] == 0.5);
  CHECK(j["scans"].size() == 1);
}

TEST_CASE("atomic text writes leave no temp files") {
  fs::create_directories(kDir);
  const fs::path p = kDir / "x.csv";
  write_text_atomic(p, "a,b\n");
  CHECK(fs::exists(p));
  CHECK_FALSE(fs::exists(kDir / "x.csv.tmp"));
  std::ifstream f(p);
  std::string line;
  std::getline(f, line);
  CHECK(line == "a,b");
}

TEST_CASE("png round trip") {
  fs::create_directories(kDir);
  Image8 img;
  img.width = 5;
  img.height = 3;
  img.rgb.resize(45);
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    img.rgb[i] = static_cast<std::uint8_t>(i * 5);
  const fs::path p = kDir / "img.png";
  write_png(img, p);
  const Image8 back = read_png(p);
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  CHECK(back.rgb == img.rgb);
  CHECK_THROWS_AS(read_png(kDir / "missing.png"), IoError);
}

TEST_CASE("heatmap panels: geometry and exact mask panels") {
  const Dims3 d{8, 6, 2};
  std::vector<double> img_data(d.voxels(), 0.5);
  const ScalarVolume image(d, img_data);
  std::vector<double> unc_data(d.voxels(), 0.0);
  unc_data[voxel_index(d, 3, 2, 1)] = 1.0;
  const ScalarVolume unc(d, unc_data);

  std::vector<std::uint8_t> gt_data(d.voxels(), 0);
  for (std::int64_t y = 1; y < 4; ++y)
    for (std::int64_t x = 1; x < 5; ++x) gt_data[voxel_index(d, x, y, 1)] = 1;
  const LabelVolume gt(d, 2, gt_data);
  const LabelVolume pred(d, 2, std::vector<std::uint8_t>(d.voxels(), 0));

  const InaccuracyDecomposition dec = decompose(pred, gt, MorphKernel{3, 3, 1});
  const Image8 panel = render_heatmap(image, unc, gt, pred, dec, 1, 1.0);
  CHECK(panel.width == 4 * d.x);
  CHECK(panel.height == d.y);

  // Decode the failures panel (pure black/white) back into a mask.
  for (std::int64_t y = 0; y < d.y; ++y)
    for (std::int64_t x = 0; x < d.x; ++x) {
      const std::uint8_t* px = panel.px(3 * d.x + x, y);
      CHECK((px[0] == 0 || px[0] == 255));
      const bool on = px[0] == 255;
      CHECK(on == (dec.failures.data[voxel_index(d, x, y, 1)] == 1));
      const std::uint8_t* pe = panel.px(2 * d.x + x, y);
      CHECK((pe[0] == 255) == (dec.errors.data[voxel_index(d, x, y, 1)] == 1));
    }

  CHECK_THROWS_AS(render_heatmap(image, unc, gt, pred, dec, 5, 1.0),
                  DomainError);
  CHECK_THROWS_AS(render_heatmap(image, unc, gt, pred, dec, 0, 0.0),
                  DomainError);
}

TEST_CASE("uniform zero uncertainty gives one uniform overlay color") {
  const Dims3 d{8, 4, 1};
  const ScalarVolume image(d, std::vector<double>(d.voxels(), 0.3));
  const ScalarVolume unc(d, std::vector<double>(d.voxels(), 0.0));
  const LabelVolume none(d, 2, std::vector<std::uint8_t>(d.voxels(), 0));
  InaccuracyDecomposition dec;
  dec.failures = BinaryMask{d, std::vector<std::uint8_t>(d.voxels(), 0)};
  dec.errors = dec.failures;
  const Image8 panel = render_heatmap(image, unc, none, none, dec, 0, 1.0);
  const std::uint8_t* first = panel.px(d.x, 0);
  for (std::int64_t y = 0; y < d.y; ++y)
    for (std::int64_t x = d.x; x < 2 * d.x; ++x) {
      const std::uint8_t* px = panel.px(x, y);
      CHECK(px[0] == first[0]);
      CHECK(px[1] == first[1]);
      CHECK(px[2] == first[2]);
    }
}

TEST_CASE("manifest write") {
  fs::create_directories(kDir);
  RunManifest m;
  m.command = "gen";
  m.config = {{"size", 32}};
  m.seed = 5;
  m.inputs = {"spec.json"};
  m.outputs = {"out/"};
  m.wall_time_s = 1.23456789;
  write_manifest(m, kDir / "manifest.json");
  std::ifstream f(kDir / "manifest.json");
  nlohmann::json j;
  f >> j;
  CHECK(j["command"] == "gen");
  CHECK(j["version"] == kToolVersion);
  CHECK(j["wall_time_s"] == 1.234568);
}
