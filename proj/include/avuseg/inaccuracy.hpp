#pragma once

#include <cstdint>
#include <vector>

#include "avuseg/kernels.hpp"
#include "avuseg/volumes.hpp"

// Splits the raw inaccuracy map (pred != gt) into small "errors" removed by
// morphological opening and the surviving large "failures". Only failures
// count as the true inaccuracy during evaluation.

namespace avuseg {

struct BinaryMask {
  Dims3 dims;
  std::vector<std::uint8_t> data;  // {0,1}, x fastest

  std::int64_t count() const {
    std::int64_t n = 0;
    for (auto v : data) n += v;
    return n;
  }
  bool operator==(const BinaryMask&) const = default;

  // Masks round-trip through UEVOL1 as 2-class label volumes.
  LabelVolume to_label_volume() const {
    return LabelVolume(dims, 2, data);
  }
  static BinaryMask from_label_volume(const LabelVolume& v) {
    return BinaryMask{v.dims(), v.data()};
  }
};

struct MorphKernel {
  std::int64_t kx = 3, ky = 3, kz = 1;
};

struct InaccuracyDecomposition {
  BinaryMask raw;       // pred != gt
  BinaryMask failures;  // opening(raw)
  BinaryMask errors;    // raw \ failures
  MorphKernel kernel;
};

BinaryMask binary_erode(const BinaryMask& mask, const MorphKernel& kernel);
BinaryMask binary_dilate(const BinaryMask& mask, const MorphKernel& kernel);
BinaryMask binary_opening(const BinaryMask& mask, const MorphKernel& kernel);

InaccuracyDecomposition decompose(const LabelVolume& pred,
                                  const LabelVolume& gt,
                                  const MorphKernel& kernel = {});

}  // namespace avuseg
