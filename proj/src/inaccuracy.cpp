#include "avuseg/inaccuracy.hpp"

namespace avuseg {

namespace {

kernels::MorphDims morph_dims(const BinaryMask& mask, const MorphKernel& k) {
  if (k.kx % 2 == 0 || k.ky % 2 == 0 || k.kz % 2 == 0)
    throw DomainError("morphology: kernel sizes must be odd");
  if (k.kx < 1 || k.ky < 1 || k.kz < 1)
    throw DomainError("morphology: kernel sizes must be positive");
  if (mask.dims.x < k.kx || mask.dims.y < k.ky || mask.dims.z < k.kz)
    throw ShapeError("morphology: mask dims " + mask.dims.str() +
                     " smaller than kernel");
  return {mask.dims.x, mask.dims.y, mask.dims.z, k.kx, k.ky, k.kz};
}

}  // namespace

BinaryMask binary_erode(const BinaryMask& mask, const MorphKernel& kernel) {
  const auto d = morph_dims(mask, kernel);
  BinaryMask out{mask.dims, std::vector<std::uint8_t>(mask.data.size())};
  kernels::erode(mask.data.data(), out.data.data(), d);
  return out;
}

BinaryMask binary_dilate(const BinaryMask& mask, const MorphKernel& kernel) {
  const auto d = morph_dims(mask, kernel);
  BinaryMask out{mask.dims, std::vector<std::uint8_t>(mask.data.size())};
  kernels::dilate(mask.data.data(), out.data.data(), d);
  return out;
}

BinaryMask binary_opening(const BinaryMask& mask, const MorphKernel& kernel) {
  return binary_dilate(binary_erode(mask, kernel), kernel);
}

InaccuracyDecomposition decompose(const LabelVolume& pred,
                                  const LabelVolume& gt,
                                  const MorphKernel& kernel) {
  if (pred.dims() != gt.dims())
    throw ShapeError("decompose: dim mismatch " + pred.dims().str() + " vs " +
                     gt.dims().str());
  InaccuracyDecomposition out;
  out.kernel = kernel;
  out.raw.dims = pred.dims();
  out.raw.data.resize(pred.data().size());
  for (std::size_t i = 0; i < out.raw.data.size(); ++i)
    out.raw.data[i] = pred.data()[i] != gt.data()[i] ? 1 : 0;
  out.failures = binary_opening(out.raw, kernel);
  out.errors.dims = out.raw.dims;
  out.errors.data.resize(out.raw.data.size());
  for (std::size_t i = 0; i < out.raw.data.size(); ++i)
    out.errors.data[i] =
        static_cast<std::uint8_t>(out.raw.data[i] & ~out.failures.data[i] & 1);
  return out;
}

}  // namespace avuseg
