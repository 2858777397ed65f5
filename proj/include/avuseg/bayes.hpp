#pragma once

#include <cstdint>
#include <vector>

#include "avuseg/tensor.hpp"

// Gaussian variational layers with FlipOut perturbation decorrelation.
// std = softplus(rho) keeps the posterior scale positive; a single weight
// perturbation per forward pass is decorrelated across batch elements with
// per-element Rademacher sign vectors.

namespace avuseg {

struct FlipoutDense {
  Tensor w_mu;   // (out, in)
  Tensor w_rho;  // (out, in)
  Tensor b_mu;   // (out)
  Tensor b_rho;  // (out)
  double prior_std = 1.0;

  static FlipoutDense init(std::int64_t in, std::int64_t out, Rng& rng,
                           double init_std_scale = 1e-3);

  // x: (batch, in). rng == nullptr gives the mean (zero-noise) path.
  Tensor forward(const Tensor& x, Rng* rng) const;
};

struct FlipoutConv2d {
  Tensor w_mu;   // (out, in, kh, kw)
  Tensor w_rho;
  Tensor b_mu;   // (out)
  Tensor b_rho;
  Padding padding = Padding::Same;
  std::int64_t dilation = 1;
  double prior_std = 1.0;

  static FlipoutConv2d init(std::int64_t in_ch, std::int64_t out_ch,
                            std::int64_t k, Padding padding,
                            std::int64_t dilation, Rng& rng,
                            double init_std_scale = 1e-3);

  // x: (N, in_ch, H, W); Rademacher signs are drawn per example and
  // channel. rng == nullptr gives the mean path.
  Tensor forward(const Tensor& x, Rng* rng) const;
};

// Closed-form KL(q || N(0, prior_std^2)) summed over all variational
// parameters of the given layers, scaled by `scale` (typically
// 1 / training voxel count). The paper's stated losses carry no KL term,
// so trainers default its weight to zero.
Tensor kl_divergence(const Tensor& mu, const Tensor& rho, double prior_std);

}  // namespace avuseg
