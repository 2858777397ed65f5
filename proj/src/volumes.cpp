#include "avuseg/volumes.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

namespace avuseg {

namespace {

constexpr char kMagic[6] = {'U', 'E', 'V', 'O', 'L', '1'};

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1, U8 = 2 };

void check_dims(const Dims3& d) {
  if (d.x < 1 || d.y < 1 || d.z < 1)
    throw IoInvariant("volume: degenerate dims " + d.str());
}

// CRC-64/ECMA-182, non-reflected, init and xorout 0.
const std::array<std::uint64_t, 256>& crc64_table() {
  static const auto table = [] {
    std::array<std::uint64_t, 256> t{};
    constexpr std::uint64_t poly = 0x42F0E1EBA9EA3693ULL;
    for (int i = 0; i < 256; ++i) {
      std::uint64_t crc = static_cast<std::uint64_t>(i) << 56;
      for (int b = 0; b < 8; ++b)
        crc = (crc & 0x8000000000000000ULL) ? (crc << 1) ^ poly : crc << 1;
      t[i] = crc;
    }
    return t;
  }();
  return table;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64(std::string& out, const std::vector<double>& values) {
  static_assert(sizeof(double) == 8);
  const std::size_t off = out.size();
  out.resize(off + values.size() * 8);
  std::memcpy(out.data() + off, values.data(), values.size() * 8);
}

void write_file(const std::filesystem::path& path, VolumeKind kind, Dtype dtype,
                const Dims3& dims, std::uint32_t c, const std::string& payload) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  buf.push_back(static_cast<char>(kind));
  buf.push_back(static_cast<char>(dtype));
  put_u32(buf, static_cast<std::uint32_t>(dims.x));
  put_u32(buf, static_cast<std::uint32_t>(dims.y));
  put_u32(buf, static_cast<std::uint32_t>(dims.z));
  put_u32(buf, c);
  buf += payload;
  put_u64(buf, crc64(payload.data(), payload.size()));
  // Atomic write: temp + rename.
  const auto tmp = path.parent_path() /
                   (path.filename().string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + path.string());
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

struct RawVolume {
  VolumeKind kind;
  Dtype dtype;
  Dims3 dims;
  std::int64_t c;
  std::string payload;
};

RawVolume read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 24 || std::memcmp(buf.data(), kMagic, 6) != 0)
    throw IoBadMagic("not a UEVOL1 file: " + path.string());
  RawVolume rv;
  const auto kind_byte = static_cast<std::uint8_t>(buf[6]);
  const auto dtype_byte = static_cast<std::uint8_t>(buf[7]);
  if (kind_byte > 2) throw IoInvariant("unknown volume kind");
  if (dtype_byte > 2) throw IoInvariant("unknown dtype");
  rv.kind = static_cast<VolumeKind>(kind_byte);
  rv.dtype = static_cast<Dtype>(dtype_byte);
  auto u32_at = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<std::uint8_t>(buf[off + i]);
    return v;
  };
  rv.dims = {static_cast<std::int64_t>(u32_at(8)),
             static_cast<std::int64_t>(u32_at(12)),
             static_cast<std::int64_t>(u32_at(16))};
  rv.c = static_cast<std::int64_t>(u32_at(20));
  check_dims(rv.dims);
  const std::size_t elem =
      rv.dtype == Dtype::F64 ? 8 : (rv.dtype == Dtype::F32 ? 4 : 1);
  const std::size_t count = static_cast<std::size_t>(
      rv.dims.voxels() * (rv.kind == VolumeKind::Prob ? rv.c : 1));
  const std::size_t need = 24 + count * elem + 8;
  if (buf.size() < need)
    throw IoTruncated("truncated payload in " + path.string());
  if (buf.size() > need)
    throw IoInvariant("trailing bytes in " + path.string());
  rv.payload = buf.substr(24, count * elem);
  std::uint64_t stored = 0;
  for (int i = 7; i >= 0; --i)
    stored = (stored << 8) | static_cast<std::uint8_t>(buf[24 + count * elem + i]);
  if (stored != crc64(rv.payload.data(), rv.payload.size()))
    throw IoBadChecksum("payload CRC mismatch in " + path.string());
  return rv;
}

std::vector<double> decode_floats(const RawVolume& rv) {
  if (rv.dtype == Dtype::F64) {
    std::vector<double> v(rv.payload.size() / 8);
    std::memcpy(v.data(), rv.payload.data(), rv.payload.size());
    return v;
  }
  if (rv.dtype == Dtype::F32) {
    std::vector<float> f(rv.payload.size() / 4);
    std::memcpy(f.data(), rv.payload.data(), rv.payload.size());
    return {f.begin(), f.end()};
  }
  throw IoInvariant("u8 payload where floats expected");
}

}  // namespace

std::uint64_t crc64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto& t = crc64_table();
  std::uint64_t crc = seed;
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < len; ++i)
    crc = (crc << 8) ^ t[((crc >> 56) ^ p[i]) & 0xff];
  return crc;
}

std::uint64_t crc64_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(f)),
                  std::istreambuf_iterator<char>());
  return crc64(buf.data(), buf.size());
}

ProbVolume::ProbVolume(Dims3 dims, std::int64_t num_classes,
                       std::vector<double> data)
    : dims_(dims), num_classes_(num_classes), data_(std::move(data)) {
  check_dims(dims_);
  if (num_classes_ < 2)
    throw IoInvariant("ProbVolume: num_classes must be >= 2, got " +
                      std::to_string(num_classes_));
  if (static_cast<std::int64_t>(data_.size()) != dims_.voxels() * num_classes_)
    throw IoInvariant("ProbVolume: payload size mismatch");
  for (std::int64_t v = 0; v < dims_.voxels(); ++v) {
    double s = 0.0;
    for (std::int64_t c = 0; c < num_classes_; ++c) {
      const double p = data_[v * num_classes_ + c];
      if (!(p >= 0.0 && p <= 1.0))
        throw IoInvariant("ProbVolume: probability outside [0,1]");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-5)
      throw IoInvariant("ProbVolume: class vector does not sum to 1");
  }
}

LabelVolume::LabelVolume(Dims3 dims, std::int64_t num_classes,
                         std::vector<std::uint8_t> data)
    : dims_(dims), num_classes_(num_classes), data_(std::move(data)) {
  check_dims(dims_);
  if (num_classes_ < 2)
    throw IoInvariant("LabelVolume: num_classes must be >= 2");
  if (static_cast<std::int64_t>(data_.size()) != dims_.voxels())
    throw IoInvariant("LabelVolume: payload size mismatch");
  for (std::uint8_t l : data_)
    if (l >= num_classes_)
      throw IoInvariant("LabelVolume: label index out of range");
}

ScalarVolume::ScalarVolume(Dims3 dims, std::vector<double> data)
    : dims_(dims), data_(std::move(data)) {
  check_dims(dims_);
  if (static_cast<std::int64_t>(data_.size()) != dims_.voxels())
    throw IoInvariant("ScalarVolume: payload size mismatch");
  for (double v : data_)
    if (!(v >= 0.0 && v <= 1.0))
      throw IoInvariant("ScalarVolume: value outside [0,1]");
}

LabelVolume argmax_labels(const ProbVolume& probs) {
  const std::int64_t C = probs.num_classes();
  std::vector<std::uint8_t> labels(probs.dims().voxels());
  const auto& d = probs.data();
  for (std::int64_t v = 0; v < probs.dims().voxels(); ++v) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < C; ++c)
      if (d[v * C + c] > d[v * C + best]) best = c;
    labels[v] = static_cast<std::uint8_t>(best);
  }
  return LabelVolume(probs.dims(), C, std::move(labels));
}

void write_volume(const ProbVolume& v, const std::filesystem::path& path) {
  std::string payload;
  append_f64(payload, v.data());
  write_file(path, VolumeKind::Prob, Dtype::F64, v.dims(),
             static_cast<std::uint32_t>(v.num_classes()), payload);
}

void write_volume(const LabelVolume& v, const std::filesystem::path& path) {
  std::string payload(v.data().begin(), v.data().end());
  write_file(path, VolumeKind::Label, Dtype::U8, v.dims(),
             static_cast<std::uint32_t>(v.num_classes()), payload);
}

void write_volume(const ScalarVolume& v, const std::filesystem::path& path) {
  std::string payload;
  append_f64(payload, v.data());
  write_file(path, VolumeKind::Scalar, Dtype::F64, v.dims(), 1, payload);
}

VolumeKind peek_volume_kind(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  char head[7];
  f.read(head, 7);
  if (f.gcount() != 7 || std::memcmp(head, kMagic, 6) != 0)
    throw IoBadMagic("not a UEVOL1 file: " + path.string());
  if (static_cast<std::uint8_t>(head[6]) > 2)
    throw IoInvariant("unknown volume kind");
  return static_cast<VolumeKind>(head[6]);
}

ProbVolume read_prob_volume(const std::filesystem::path& path) {
  RawVolume rv = read_file(path);
  if (rv.kind != VolumeKind::Prob)
    throw IoInvariant("expected prob volume in " + path.string());
  return ProbVolume(rv.dims, rv.c, decode_floats(rv));
}

LabelVolume read_label_volume(const std::filesystem::path& path) {
  RawVolume rv = read_file(path);
  if (rv.kind != VolumeKind::Label)
    throw IoInvariant("expected label volume in " + path.string());
  if (rv.dtype != Dtype::U8) throw IoInvariant("label volume must be u8");
  std::vector<std::uint8_t> data(rv.payload.begin(), rv.payload.end());
  return LabelVolume(rv.dims, rv.c, std::move(data));
}

ScalarVolume read_scalar_volume(const std::filesystem::path& path) {
  RawVolume rv = read_file(path);
  if (rv.kind != VolumeKind::Scalar)
    throw IoInvariant("expected scalar volume in " + path.string());
  return ScalarVolume(rv.dims, decode_floats(rv));
}

}  // namespace avuseg
