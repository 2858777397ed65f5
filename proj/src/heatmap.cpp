#include "avuseg/heatmap.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace avuseg {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

void write_png(const Image8& img, const std::filesystem::path& path) {
  if (img.width <= 0 || img.height <= 0 ||
      img.rgb.size() != static_cast<std::size_t>(img.width * img.height * 3))
    throw ShapeError("png: inconsistent image buffer");
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    FilePtr f(std::fopen(tmp.string().c_str(), "wb"));
    if (!f) throw IoError("png: cannot open " + tmp.string());

    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      png_destroy_write_struct(&png, &info);
      throw IoError("png: init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw IoError("png: write failed for " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::int64_t y = 0; y < img.height; ++y)
      png_write_row(png,
                    const_cast<png_bytep>(img.rgb.data() + y * img.width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

Image8 read_png(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.string().c_str(), "rb"));
  if (!f) throw IoError("png: cannot open " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: read failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);

  Image8 img;
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.rgb.resize(img.width * img.height * 3);
  for (std::int64_t y = 0; y < img.height; ++y)
    png_read_row(png, img.rgb.data() + y * img.width * 3, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(
      std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Fixed blue -> cyan -> yellow -> red map over [0,1].
void colormap(double t, std::uint8_t* out) {
  t = std::clamp(t, 0.0, 1.0);
  double r, g, b;
  if (t < 1.0 / 3) {
    const double u = t * 3;
    r = 0.0, g = u, b = 1.0;
  } else if (t < 2.0 / 3) {
    const double u = t * 3 - 1;
    r = u, g = 1.0, b = 1.0 - u;
  } else {
    const double u = t * 3 - 2;
    r = 1.0, g = 1.0 - u, b = 0.0;
  }
  out[0] = to_u8(r);
  out[1] = to_u8(g);
  out[2] = to_u8(b);
}

bool on_contour(const LabelVolume& labels, std::int64_t x, std::int64_t y,
                std::int64_t z) {
  const std::uint8_t v = labels.at(x, y, z);
  if (v == 0) return false;
  const auto& d = labels.dims();
  const std::int64_t nx[] = {x - 1, x + 1, x, x};
  const std::int64_t ny[] = {y, y, y - 1, y + 1};
  for (int i = 0; i < 4; ++i) {
    if (nx[i] < 0 || nx[i] >= d.x || ny[i] < 0 || ny[i] >= d.y) return true;
    if (labels.at(nx[i], ny[i], z) != v) return true;
  }
  return false;
}

}  // namespace

Image8 render_heatmap(const ScalarVolume& image, const ScalarVolume& unc,
                      const LabelVolume& gt, const LabelVolume& pred,
                      const InaccuracyDecomposition& decomp, std::int64_t z,
                      double u_max) {
  const Dims3& d = image.dims();
  if (unc.dims() != d || gt.dims() != d || pred.dims() != d ||
      decomp.failures.dims != d)
    throw ShapeError("heatmap: mismatched slice dimensions");
  if (z < 0 || z >= d.z)
    throw DomainError("heatmap: slice " + std::to_string(z) +
                      " out of range for z extent " + std::to_string(d.z));
  if (!(u_max > 0.0)) throw DomainError("heatmap: u_max must be positive");

  Image8 img;
  img.width = 4 * d.x;
  img.height = d.y;
  img.rgb.assign(img.width * img.height * 3, 0);

  for (std::int64_t y = 0; y < d.y; ++y)
    for (std::int64_t x = 0; x < d.x; ++x) {
      const std::uint8_t gray = to_u8(image.at(x, y, z));

      std::uint8_t* p0 = img.px(x, y);
      p0[0] = p0[1] = p0[2] = gray;

      // Overlay: constant-alpha blend with the colormap so a zero-
      // uncertainty map still shows the lowest color uniformly.
      std::uint8_t* p1 = img.px(d.x + x, y);
      std::uint8_t col[3];
      colormap(unc.at(x, y, z) / u_max, col);
      for (int c = 0; c < 3; ++c)
        p1[c] = static_cast<std::uint8_t>((gray + col[c]) / 2);
      if (on_contour(gt, x, y, z)) {
        p1[0] = 0, p1[1] = 255, p1[2] = 0;
      } else if (on_contour(pred, x, y, z)) {
        p1[0] = 255, p1[1] = 0, p1[2] = 0;
      }

      const std::int64_t vi = voxel_index(d, x, y, z);
      std::uint8_t* p2 = img.px(2 * d.x + x, y);
      p2[0] = p2[1] = p2[2] = decomp.errors.data[vi] ? 255 : 0;
      std::uint8_t* p3 = img.px(3 * d.x + x, y);
      p3[0] = p3[1] = p3[2] = decomp.failures.data[vi] ? 255 : 0;
    }
  return img;
}

}  // namespace avuseg
