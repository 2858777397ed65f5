#pragma once

#include <cstdint>
#include <vector>

#include "avuseg/tensor.hpp"

// Differentiable training objectives over (N,C,H,W) probability (or logit)
// tensors with constant one-hot targets. All losses are scalars.

namespace avuseg {

// One-hot constant target from per-voxel class indices (x fastest within
// each slice), laid out (N,C,H,W).
Tensor one_hot_tensor(const std::vector<std::uint8_t>& labels, std::int64_t n,
                      std::int64_t c, std::int64_t h, std::int64_t w);

struct ClassWeights {
  std::vector<double> w;  // one positive weight per class
};

// L_CE = -(1/|C|) sum_c w_c sum_i [ y ln p + (1-y) ln(1-p) ], eps-clamped.
Tensor weighted_bce(const Tensor& probs, const Tensor& onehot,
                    const ClassWeights& weights);

struct AvuLossConfig {
  double alpha = 100.0;
  // Threshold grid over the theoretical uncertainty range; strictly
  // ascending within [0,1]. Default: 10 evenly spaced interior points.
  std::vector<double> thresholds = default_loss_thresholds();
  bool tanh_constraint = true;
  double denom_eps = 1e-8;

  static std::vector<double> default_loss_thresholds();
};

// Threshold-integrated differentiable AvU objective. Per threshold t the
// proxy counts weight the max class probability and (1 -/+ tanh u) by
// detached accuracy/certainty masks; the per-threshold term is
// ln(1 + (n_au + n_ic) / (n_ac + n_iu)), averaged over the grid, so the
// loss is >= 0 and minimizing it shrinks the bad-mass ratio.
Tensor avu_loss(const Tensor& probs, const Tensor& onehot,
                const AvuLossConfig& cfg);

// L = L_CE + alpha * L_AvU
Tensor total_loss(const Tensor& probs, const Tensor& onehot,
                  const ClassWeights& weights, const AvuLossConfig& cfg);

// Baseline calibration losses, standard published formulations; all are
// means over voxels.
Tensor focal_loss(const Tensor& probs, const Tensor& onehot, double gamma);
Tensor ecp_loss(const Tensor& probs, const Tensor& onehot, double lambda);
Tensor label_smoothing_loss(const Tensor& probs, const Tensor& onehot,
                            double alpha);
// Targets blurred spatially (per class, per slice) by a 3x3 Gaussian of
// width sigma, then renormalized per voxel.
Tensor svls_loss(const Tensor& probs, const Tensor& onehot, double sigma);
// Margin penalty acts on logits; CE on their softmax.
Tensor mbls_loss(const Tensor& logits, const Tensor& onehot, double lambda,
                 double margin);

}  // namespace avuseg
