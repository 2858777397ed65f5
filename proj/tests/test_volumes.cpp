#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "avuseg/volumes.hpp"

using namespace avuseg;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const char* name) {
  const fs::path dir = fs::temp_directory_path() / "avuseg_test_volumes";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ProbVolume sample_prob() {
  const Dims3 d{3, 2, 2};
  std::vector<double> data;
  for (std::int64_t i = 0; i < d.voxels(); ++i) {
    const double p = 0.1 + 0.05 * static_cast<double>(i);
    data.push_back(p);
    data.push_back(1.0 - p);
  }
  return ProbVolume(d, 2, std::move(data));
}

}  // namespace

TEST_CASE("prob volume invariants enforced at construction") {
  CHECK_THROWS_AS(ProbVolume({2, 1, 1}, 2, {0.6, 0.6, 0.5, 0.5}), IoInvariant);
  CHECK_THROWS_AS(ProbVolume({1, 1, 1}, 2, {1.2, -0.2}), IoInvariant);
  CHECK_THROWS_AS(ProbVolume({1, 1, 1}, 1, {1.0}), IoInvariant);
  CHECK_THROWS_AS(ProbVolume({1, 1, 1}, 2, {0.5}), IoInvariant);
}

TEST_CASE("label volume rejects out-of-range classes") {
  CHECK_THROWS_AS(LabelVolume({2, 1, 1}, 2, {0, 2}), IoInvariant);
  CHECK_THROWS_AS(ScalarVolume({1, 1, 1}, {1.5}), IoInvariant);
}

TEST_CASE("argmax ties break to the lowest class index") {
  const ProbVolume p({1, 1, 1}, 3, {0.4, 0.4, 0.2});
  CHECK(argmax_labels(p).at(0, 0, 0) == 0);
}

TEST_CASE("round trips preserve bytes and values") {
  const ProbVolume p = sample_prob();
  const auto path = tmp_file("prob.uevol");
  write_volume(p, path);
  const ProbVolume q = read_prob_volume(path);
  CHECK(q.dims() == p.dims());
  CHECK(q.data() == p.data());
  CHECK(peek_volume_kind(path) == VolumeKind::Prob);

  // Writing twice is byte-identical.
  const auto path2 = tmp_file("prob2.uevol");
  write_volume(p, path2);
  CHECK(slurp(path) == slurp(path2));
  CHECK(crc64_file(path) == crc64_file(path2));

  const LabelVolume l({2, 2, 1}, 3, {0, 1, 2, 1});
  const auto lpath = tmp_file("label.uevol");
  write_volume(l, lpath);
  CHECK(read_label_volume(lpath).data() == l.data());

  const ScalarVolume s({2, 2, 1}, {0.0, 0.25, 0.5, 1.0});
  const auto spath = tmp_file("scalar.uevol");
  write_volume(s, spath);
  CHECK(read_scalar_volume(spath).data() == s.data());
}

TEST_CASE("error kinds: magic, truncation, checksum, kind mismatch") {
  const auto path = tmp_file("prob_err.uevol");
  write_volume(sample_prob(), path);
  auto bytes = slurp(path);

  auto corrupted = bytes;
  corrupted[0] = 'X';
  spit(tmp_file("bad_magic.uevol"), corrupted);
  CHECK_THROWS_AS(read_prob_volume(tmp_file("bad_magic.uevol")), IoBadMagic);

  corrupted = bytes;
  corrupted.resize(bytes.size() - 5);
  spit(tmp_file("trunc.uevol"), corrupted);
  CHECK_THROWS_AS(read_prob_volume(tmp_file("trunc.uevol")), IoTruncated);

  corrupted = bytes;
  corrupted[30] ^= 0x40;  // payload bit flip
  spit(tmp_file("bad_crc.uevol"), corrupted);
  CHECK_THROWS_AS(read_prob_volume(tmp_file("bad_crc.uevol")), IoBadChecksum);

  CHECK_THROWS_AS(read_label_volume(path), IoError);
  CHECK_THROWS_AS(read_prob_volume(tmp_file("missing.uevol")), IoError);
}

TEST_CASE("crc64 known vector") {
  // CRC-64/ECMA-182 of "123456789".
  const std::uint8_t digits[] = {'1', '2', '3', '4', '5', '6', '7', '8', '9'};
  CHECK(crc64(digits, 9) == 0x6C40DF5F0B497347ULL);
}
