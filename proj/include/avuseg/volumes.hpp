#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avuseg/common.hpp"

// Typed voxel volumes and the UEVOL1 on-disk format.
//
// Voxel order is x fastest, then y, then z; ProbVolume stores the class
// index fastest. Volumes are immutable after construction and safe to share
// across threads.

namespace avuseg {

struct IoBadMagic : IoError {
  using IoError::IoError;
};
struct IoTruncated : IoError {
  using IoError::IoError;
};
struct IoBadChecksum : IoError {
  using IoError::IoError;
};
struct IoInvariant : IoError {
  using IoError::IoError;
};

struct Dims3 {
  std::int64_t x = 0, y = 0, z = 0;
  std::int64_t voxels() const { return x * y * z; }
  bool operator==(const Dims3&) const = default;
  std::string str() const {
    return "(" + std::to_string(x) + "," + std::to_string(y) + "," +
           std::to_string(z) + ")";
  }
};

inline std::int64_t voxel_index(const Dims3& d, std::int64_t x, std::int64_t y,
                                std::int64_t z) {
  return (z * d.y + y) * d.x + x;
}

// Per-voxel class-probability field; every class vector sums to 1 within
// 1e-5 with entries in [0,1]. Violations are construction errors, never
// silently renormalized.
class ProbVolume {
 public:
  ProbVolume(Dims3 dims, std::int64_t num_classes, std::vector<double> data);

  const Dims3& dims() const { return dims_; }
  std::int64_t num_classes() const { return num_classes_; }
  const std::vector<double>& data() const { return data_; }

  double at(std::int64_t x, std::int64_t y, std::int64_t z,
            std::int64_t c) const {
    return data_[voxel_index(dims_, x, y, z) * num_classes_ + c];
  }

 private:
  Dims3 dims_;
  std::int64_t num_classes_;
  std::vector<double> data_;
};

class LabelVolume {
 public:
  LabelVolume(Dims3 dims, std::int64_t num_classes,
              std::vector<std::uint8_t> data);

  const Dims3& dims() const { return dims_; }
  std::int64_t num_classes() const { return num_classes_; }
  const std::vector<std::uint8_t>& data() const { return data_; }

  std::uint8_t at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[voxel_index(dims_, x, y, z)];
  }

 private:
  Dims3 dims_;
  std::int64_t num_classes_;
  std::vector<std::uint8_t> data_;
};

// One scalar per voxel. Used for normalized-entropy uncertainty maps and
// for synthetic image intensities; values must lie in [0,1].
class ScalarVolume {
 public:
  ScalarVolume(Dims3 dims, std::vector<double> data);

  const Dims3& dims() const { return dims_; }
  const std::vector<double>& data() const { return data_; }

  double at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return data_[voxel_index(dims_, x, y, z)];
  }

 private:
  Dims3 dims_;
  std::vector<double> data_;
};

// Eq.-style argmax decision rule; ties break to the lowest class index.
LabelVolume argmax_labels(const ProbVolume& probs);

// ---- UEVOL1 format ----
// bytes 0-5  magic "UEVOL1"
// byte  6    kind: 0=prob, 1=label, 2=scalar (uncertainty/image)
// byte  7    dtype: 0=f32, 1=f64, 2=u8
// bytes 8-23 X, Y, Z, C as little-endian u32
// payload    raw values, voxel order as above, class fastest for prob
// trailer    8-byte little-endian CRC64 of the payload

enum class VolumeKind : std::uint8_t { Prob = 0, Label = 1, Scalar = 2 };

void write_volume(const ProbVolume& v, const std::filesystem::path& path);
void write_volume(const LabelVolume& v, const std::filesystem::path& path);
void write_volume(const ScalarVolume& v, const std::filesystem::path& path);

VolumeKind peek_volume_kind(const std::filesystem::path& path);
ProbVolume read_prob_volume(const std::filesystem::path& path);
LabelVolume read_label_volume(const std::filesystem::path& path);
ScalarVolume read_scalar_volume(const std::filesystem::path& path);

std::uint64_t crc64(const void* data, std::size_t len, std::uint64_t seed = 0);
std::uint64_t crc64_file(const std::filesystem::path& path);

}  // namespace avuseg
