#include "avuseg/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace avuseg::kernels {

namespace {

std::atomic<bool> g_use_openmp{[] {
  const char* env = std::getenv("AVUSEG_SERIAL");
  return !(env && env[0] == '1');
}()};

inline std::int64_t idx4(std::int64_t n, std::int64_t c, std::int64_t y,
                         std::int64_t x, std::int64_t C, std::int64_t H,
                         std::int64_t W) {
  return ((n * C + c) * H + y) * W + x;
}

inline double conv_out_at(const double* in, const double* w,
                          const Conv2dDims& d, std::int64_t n, std::int64_t co,
                          std::int64_t oy, std::int64_t ox) {
  double acc = 0.0;
  for (std::int64_t ci = 0; ci < d.in_ch; ++ci)
    for (std::int64_t ky = 0; ky < d.kh; ++ky) {
      const std::int64_t iy = oy + d.dilation * ky - d.pad_h;
      if (iy < 0 || iy >= d.in_h) continue;
      for (std::int64_t kx = 0; kx < d.kw; ++kx) {
        const std::int64_t ix = ox + d.dilation * kx - d.pad_w;
        if (ix < 0 || ix >= d.in_w) continue;
        acc += in[idx4(n, ci, iy, ix, d.in_ch, d.in_h, d.in_w)] *
               w[((co * d.in_ch + ci) * d.kh + ky) * d.kw + kx];
      }
    }
  return acc;
}

inline double conv_grad_in_at(const double* grad_out, const double* w,
                              const Conv2dDims& d, std::int64_t n,
                              std::int64_t ci, std::int64_t iy,
                              std::int64_t ix) {
  const std::int64_t OH = d.out_h(), OW = d.out_w();
  double acc = 0.0;
  for (std::int64_t co = 0; co < d.out_ch; ++co)
    for (std::int64_t ky = 0; ky < d.kh; ++ky) {
      const std::int64_t oy = iy - d.dilation * ky + d.pad_h;
      if (oy < 0 || oy >= OH) continue;
      for (std::int64_t kx = 0; kx < d.kw; ++kx) {
        const std::int64_t ox = ix - d.dilation * kx + d.pad_w;
        if (ox < 0 || ox >= OW) continue;
        acc += grad_out[idx4(n, co, oy, ox, d.out_ch, OH, OW)] *
               w[((co * d.in_ch + ci) * d.kh + ky) * d.kw + kx];
      }
    }
  return acc;
}

inline double conv_grad_w_at(const double* grad_out, const double* in,
                             const Conv2dDims& d, std::int64_t co,
                             std::int64_t ci, std::int64_t ky,
                             std::int64_t kx) {
  const std::int64_t OH = d.out_h(), OW = d.out_w();
  double acc = 0.0;
  for (std::int64_t n = 0; n < d.batch; ++n)
    for (std::int64_t oy = 0; oy < OH; ++oy) {
      const std::int64_t iy = oy + d.dilation * ky - d.pad_h;
      if (iy < 0 || iy >= d.in_h) continue;
      for (std::int64_t ox = 0; ox < OW; ++ox) {
        const std::int64_t ix = ox + d.dilation * kx - d.pad_w;
        if (ix < 0 || ix >= d.in_w) continue;
        acc += grad_out[idx4(n, co, oy, ox, d.out_ch, OH, OW)] *
               in[idx4(n, ci, iy, ix, d.in_ch, d.in_h, d.in_w)];
      }
    }
  return acc;
}

inline std::int64_t midx(std::int64_t x, std::int64_t y, std::int64_t z,
                         const MorphDims& d) {
  return (z * d.y + y) * d.x + x;
}

inline std::uint8_t erode_at(const std::uint8_t* in, const MorphDims& d,
                             std::int64_t x, std::int64_t y, std::int64_t z) {
  const std::int64_t rx = d.kx / 2, ry = d.ky / 2, rz = d.kz / 2;
  for (std::int64_t dz = -rz; dz <= rz; ++dz)
    for (std::int64_t dy = -ry; dy <= ry; ++dy)
      for (std::int64_t dx = -rx; dx <= rx; ++dx) {
        const std::int64_t nx = x + dx, ny = y + dy, nz = z + dz;
        if (nx < 0 || nx >= d.x || ny < 0 || ny >= d.y || nz < 0 || nz >= d.z)
          return 0;  // outside volume counts as background
        if (!in[midx(nx, ny, nz, d)]) return 0;
      }
  return 1;
}

inline std::uint8_t dilate_at(const std::uint8_t* in, const MorphDims& d,
                              std::int64_t x, std::int64_t y, std::int64_t z) {
  const std::int64_t rx = d.kx / 2, ry = d.ky / 2, rz = d.kz / 2;
  for (std::int64_t dz = -rz; dz <= rz; ++dz)
    for (std::int64_t dy = -ry; dy <= ry; ++dy)
      for (std::int64_t dx = -rx; dx <= rx; ++dx) {
        const std::int64_t nx = x + dx, ny = y + dy, nz = z + dz;
        if (nx < 0 || nx >= d.x || ny < 0 || ny >= d.y || nz < 0 || nz >= d.z)
          continue;
        if (in[midx(nx, ny, nz, d)]) return 1;
      }
  return 0;
}

}  // namespace

bool use_openmp() { return g_use_openmp.load(); }
void set_use_openmp(bool on) { g_use_openmp.store(on); }

void conv2d_forward_serial(const double* in, const double* w, double* out,
                           const Conv2dDims& d) {
  const std::int64_t OH = d.out_h(), OW = d.out_w();
  for (std::int64_t n = 0; n < d.batch; ++n)
    for (std::int64_t co = 0; co < d.out_ch; ++co)
      for (std::int64_t oy = 0; oy < OH; ++oy)
        for (std::int64_t ox = 0; ox < OW; ++ox)
          out[idx4(n, co, oy, ox, d.out_ch, OH, OW)] =
              conv_out_at(in, w, d, n, co, oy, ox);
}

void conv2d_forward_omp(const double* in, const double* w, double* out,
                        const Conv2dDims& d) {
  const std::int64_t OH = d.out_h(), OW = d.out_w();
  const std::int64_t total = d.batch * d.out_ch * OH * OW;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < total; ++i) {
    const std::int64_t ox = i % OW;
    const std::int64_t oy = (i / OW) % OH;
    const std::int64_t co = (i / (OW * OH)) % d.out_ch;
    const std::int64_t n = i / (OW * OH * d.out_ch);
    out[i] = conv_out_at(in, w, d, n, co, oy, ox);
  }
}

void conv2d_forward(const double* in, const double* w, double* out,
                    const Conv2dDims& d) {
  if (use_openmp())
    conv2d_forward_omp(in, w, out, d);
  else
    conv2d_forward_serial(in, w, out, d);
}

void conv2d_backward_input_serial(const double* grad_out, const double* w,
                                  double* grad_in, const Conv2dDims& d) {
  for (std::int64_t n = 0; n < d.batch; ++n)
    for (std::int64_t ci = 0; ci < d.in_ch; ++ci)
      for (std::int64_t iy = 0; iy < d.in_h; ++iy)
        for (std::int64_t ix = 0; ix < d.in_w; ++ix)
          grad_in[idx4(n, ci, iy, ix, d.in_ch, d.in_h, d.in_w)] +=
              conv_grad_in_at(grad_out, w, d, n, ci, iy, ix);
}

void conv2d_backward_input_omp(const double* grad_out, const double* w,
                               double* grad_in, const Conv2dDims& d) {
  const std::int64_t total = d.batch * d.in_ch * d.in_h * d.in_w;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < total; ++i) {
    const std::int64_t ix = i % d.in_w;
    const std::int64_t iy = (i / d.in_w) % d.in_h;
    const std::int64_t ci = (i / (d.in_w * d.in_h)) % d.in_ch;
    const std::int64_t n = i / (d.in_w * d.in_h * d.in_ch);
    grad_in[i] += conv_grad_in_at(grad_out, w, d, n, ci, iy, ix);
  }
}

void conv2d_backward_input(const double* grad_out, const double* w,
                           double* grad_in, const Conv2dDims& d) {
  if (use_openmp())
    conv2d_backward_input_omp(grad_out, w, grad_in, d);
  else
    conv2d_backward_input_serial(grad_out, w, grad_in, d);
}

void conv2d_backward_weight_serial(const double* grad_out, const double* in,
                                   double* grad_w, const Conv2dDims& d) {
  for (std::int64_t co = 0; co < d.out_ch; ++co)
    for (std::int64_t ci = 0; ci < d.in_ch; ++ci)
      for (std::int64_t ky = 0; ky < d.kh; ++ky)
        for (std::int64_t kx = 0; kx < d.kw; ++kx)
          grad_w[((co * d.in_ch + ci) * d.kh + ky) * d.kw + kx] +=
              conv_grad_w_at(grad_out, in, d, co, ci, ky, kx);
}

void conv2d_backward_weight_omp(const double* grad_out, const double* in,
                                double* grad_w, const Conv2dDims& d) {
  const std::int64_t total = d.out_ch * d.in_ch * d.kh * d.kw;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < total; ++i) {
    const std::int64_t kx = i % d.kw;
    const std::int64_t ky = (i / d.kw) % d.kh;
    const std::int64_t ci = (i / (d.kw * d.kh)) % d.in_ch;
    const std::int64_t co = i / (d.kw * d.kh * d.in_ch);
    grad_w[i] += conv_grad_w_at(grad_out, in, d, co, ci, ky, kx);
  }
}

void conv2d_backward_weight(const double* grad_out, const double* in,
                            double* grad_w, const Conv2dDims& d) {
  if (use_openmp())
    conv2d_backward_weight_omp(grad_out, in, grad_w, d);
  else
    conv2d_backward_weight_serial(grad_out, in, grad_w, d);
}

void erode_serial(const std::uint8_t* in, std::uint8_t* out,
                  const MorphDims& d) {
  for (std::int64_t z = 0; z < d.z; ++z)
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x)
        out[midx(x, y, z, d)] = erode_at(in, d, x, y, z);
}

void erode_omp(const std::uint8_t* in, std::uint8_t* out, const MorphDims& d) {
  const std::int64_t total = d.x * d.y * d.z;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < total; ++i) {
    const std::int64_t x = i % d.x;
    const std::int64_t y = (i / d.x) % d.y;
    const std::int64_t z = i / (d.x * d.y);
    out[i] = erode_at(in, d, x, y, z);
  }
}

void erode(const std::uint8_t* in, std::uint8_t* out, const MorphDims& d) {
  if (use_openmp())
    erode_omp(in, out, d);
  else
    erode_serial(in, out, d);
}

void dilate_serial(const std::uint8_t* in, std::uint8_t* out,
                   const MorphDims& d) {
  for (std::int64_t z = 0; z < d.z; ++z)
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x)
        out[midx(x, y, z, d)] = dilate_at(in, d, x, y, z);
}

void dilate_omp(const std::uint8_t* in, std::uint8_t* out, const MorphDims& d) {
  const std::int64_t total = d.x * d.y * d.z;
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < total; ++i) {
    const std::int64_t x = i % d.x;
    const std::int64_t y = (i / d.x) % d.y;
    const std::int64_t z = i / (d.x * d.y);
    out[i] = dilate_at(in, d, x, y, z);
  }
}

void dilate(const std::uint8_t* in, std::uint8_t* out, const MorphDims& d) {
  if (use_openmp())
    dilate_omp(in, out, d);
  else
    dilate_serial(in, out, d);
}

}  // namespace avuseg::kernels
