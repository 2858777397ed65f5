#pragma once

#include <cstdint>
#include <vector>

// Hot inner loops, each in a serial reference form and an OpenMP form.
// Both variants compute every output element with the same serial
// accumulation order, so results are bit-identical for any thread count.
// The OpenMP form is the default; the serial form is kept for tests and
// the benchmark target.

namespace avuseg::kernels {

bool use_openmp();
void set_use_openmp(bool on);

struct Conv2dDims {
  std::int64_t batch, in_ch, in_h, in_w;
  std::int64_t out_ch, kh, kw;
  std::int64_t dilation;
  std::int64_t pad_h, pad_w;  // symmetric zero padding
  std::int64_t out_h() const { return in_h + 2 * pad_h - dilation * (kh - 1); }
  std::int64_t out_w() const { return in_w + 2 * pad_w - dilation * (kw - 1); }
};

// out[n,co,y,x] = sum_{ci,ky,kx} in[n,ci,y+d*ky-ph,x+d*kx-pw] * w[co,ci,ky,kx]
void conv2d_forward_serial(const double* in, const double* w, double* out,
                           const Conv2dDims& d);
void conv2d_forward_omp(const double* in, const double* w, double* out,
                        const Conv2dDims& d);
void conv2d_forward(const double* in, const double* w, double* out,
                    const Conv2dDims& d);

void conv2d_backward_input_serial(const double* grad_out, const double* w,
                                  double* grad_in, const Conv2dDims& d);
void conv2d_backward_input_omp(const double* grad_out, const double* w,
                               double* grad_in, const Conv2dDims& d);
void conv2d_backward_input(const double* grad_out, const double* w,
                           double* grad_in, const Conv2dDims& d);

void conv2d_backward_weight_serial(const double* grad_out, const double* in,
                                   double* grad_w, const Conv2dDims& d);
void conv2d_backward_weight_omp(const double* grad_out, const double* in,
                                double* grad_w, const Conv2dDims& d);
void conv2d_backward_weight(const double* grad_out, const double* in,
                            double* grad_w, const Conv2dDims& d);

// Binary erosion/dilation with a full rectangular structuring element.
// Erosion treats out-of-bounds neighbors as background; dilation ignores
// out-of-bounds targets. Masks are uint8 {0,1}, x-fastest layout.
struct MorphDims {
  std::int64_t x, y, z;
  std::int64_t kx, ky, kz;  // odd
};

void erode_serial(const std::uint8_t* in, std::uint8_t* out, const MorphDims& d);
void erode_omp(const std::uint8_t* in, std::uint8_t* out, const MorphDims& d);
void erode(const std::uint8_t* in, std::uint8_t* out, const MorphDims& d);

void dilate_serial(const std::uint8_t* in, std::uint8_t* out, const MorphDims& d);
void dilate_omp(const std::uint8_t* in, std::uint8_t* out, const MorphDims& d);
void dilate(const std::uint8_t* in, std::uint8_t* out, const MorphDims& d);

}  // namespace avuseg::kernels
