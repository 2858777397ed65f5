#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "avuseg/inaccuracy.hpp"
#include "avuseg/volumes.hpp"

// Four-panel diagnostic rendering for one slice: grayscale image,
// uncertainty overlay with ground-truth/predicted contours, errors mask,
// failures mask. Mask panels are pure black/white so they decode back to
// the exact mask.

namespace avuseg {

struct Image8 {
  std::int64_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  std::uint8_t* px(std::int64_t x, std::int64_t y) {
    return &rgb[(y * width + x) * 3];
  }
  const std::uint8_t* px(std::int64_t x, std::int64_t y) const {
    return &rgb[(y * width + x) * 3];
  }
};

void write_png(const Image8& img, const std::filesystem::path& path);
Image8 read_png(const std::filesystem::path& path);

// Panels left to right: image | uncertainty overlay + contours (gt green,
// prediction red) | errors | failures. Output is (4*X) x Y pixels.
Image8 render_heatmap(const ScalarVolume& image, const ScalarVolume& unc,
                      const LabelVolume& gt, const LabelVolume& pred,
                      const InaccuracyDecomposition& decomp, std::int64_t z,
                      double u_max);

}  // namespace avuseg
