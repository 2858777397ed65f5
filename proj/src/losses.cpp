#include "avuseg/losses.hpp"

#include <cmath>

namespace avuseg {

namespace {

void check_probs_target(const Tensor& probs, const Tensor& onehot,
                        const char* op) {
  if (probs.shape().size() != 4)
    throw ShapeError(std::string(op) + ": expected 4-D probs, got " +
                     shape_str(probs.shape()));
  if (probs.shape() != onehot.shape())
    throw ShapeError(std::string(op) + ": probs/target shape mismatch " +
                     shape_str(probs.shape()) + " vs " +
                     shape_str(onehot.shape()));
}

Tensor clamped_log(const Tensor& t) {
  return vlog(maximum_scalar(t, kProbEps));
}

// -sum_i sum_c y ln p, as a mean over voxels.
Tensor categorical_ce(const Tensor& probs, const Tensor& onehot) {
  const auto& s = probs.shape();
  const double voxels = static_cast<double>(s[0] * s[2] * s[3]);
  return mul_scalar(sum(mul(onehot, clamped_log(probs))), -1.0 / voxels);
}

// Max class probability per voxel, differentiable through the selected
// entry; the selection index itself is detached.
Tensor max_class_prob(const Tensor& probs) {
  const auto& s = probs.shape();
  const std::int64_t N = s[0], C = s[1], HW = s[2] * s[3];
  std::vector<double> mask(probs.size(), 0.0);
  const auto& pv = probs.values();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t i = 0; i < HW; ++i) {
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < C; ++c)
        if (pv[(n * C + c) * HW + i] > pv[(n * C + best) * HW + i]) best = c;
      mask[(n * C + best) * HW + i] = 1.0;
    }
  return sum_channels(mul(probs, Tensor::constant(s, std::move(mask))));
}

// Normalized entropy per voxel, differentiable: (N,C,H,W) -> (N,1,H,W).
Tensor entropy_tensor(const Tensor& probs) {
  const double inv_log_c = 1.0 / std::log(static_cast<double>(probs.shape()[1]));
  return mul_scalar(sum_channels(mul(probs, clamped_log(probs))), -inv_log_c);
}

}  // namespace

Tensor one_hot_tensor(const std::vector<std::uint8_t>& labels, std::int64_t n,
                      std::int64_t c, std::int64_t h, std::int64_t w) {
  const std::int64_t hw = h * w;
  if (static_cast<std::int64_t>(labels.size()) != n * hw)
    throw ShapeError("one_hot_tensor: label count mismatch");
  std::vector<double> out(static_cast<std::size_t>(n * c * hw), 0.0);
  for (std::int64_t i = 0; i < n * hw; ++i) {
    const std::int64_t nn = i / hw, rest = i % hw;
    if (labels[i] >= c) throw DomainError("one_hot_tensor: label out of range");
    out[(nn * c + labels[i]) * hw + rest] = 1.0;
  }
  return Tensor::constant({n, c, h, w}, std::move(out));
}

Tensor weighted_bce(const Tensor& probs, const Tensor& onehot,
                    const ClassWeights& weights) {
  check_probs_target(probs, onehot, "weighted_bce");
  const auto& s = probs.shape();
  const std::int64_t C = s[1];
  if (static_cast<std::int64_t>(weights.w.size()) != C)
    throw ShapeError("weighted_bce: weight count " +
                     std::to_string(weights.w.size()) + " != classes " +
                     std::to_string(C));
  for (double w : weights.w)
    if (!(w > 0.0)) throw DomainError("weighted_bce: weights must be positive");

  // Per-channel weight as a constant tensor.
  const std::int64_t N = s[0], HW = s[2] * s[3];
  std::vector<double> wfull(probs.size());
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t c = 0; c < C; ++c)
      std::fill_n(wfull.begin() + (n * C + c) * HW, HW, weights.w[c]);
  const Tensor wt = Tensor::constant(s, std::move(wfull));

  const Tensor fg = mul(onehot, clamped_log(probs));
  const Tensor bg =
      mul(rsub_scalar(1.0, onehot), clamped_log(rsub_scalar(1.0, probs)));
  return mul_scalar(sum(mul(wt, add(fg, bg))),
                    -1.0 / static_cast<double>(C));
}

std::vector<double> AvuLossConfig::default_loss_thresholds() {
  // 10 evenly spaced interior points of (0,1): k/11 for k = 1..10.
  std::vector<double> t(10);
  for (int k = 1; k <= 10; ++k) t[k - 1] = static_cast<double>(k) / 11.0;
  return t;
}

Tensor avu_loss(const Tensor& probs, const Tensor& onehot,
                const AvuLossConfig& cfg) {
  check_probs_target(probs, onehot, "avu_loss");
  if (cfg.thresholds.empty())
    throw DomainError("avu_loss: empty threshold grid");
  for (std::size_t i = 0; i < cfg.thresholds.size(); ++i) {
    const double t = cfg.thresholds[i];
    if (!(t >= 0.0 && t <= 1.0))
      throw DomainError("avu_loss: threshold outside [0,1]");
    if (i > 0 && t <= cfg.thresholds[i - 1])
      throw DomainError("avu_loss: thresholds must be strictly ascending");
  }

  const Tensor p_hat = max_class_prob(probs);          // (N,1,H,W)
  const Tensor u = entropy_tensor(probs);              // (N,1,H,W)
  const Tensor unc_w = cfg.tanh_constraint ? vtanh(u) : u;
  const Tensor cert_w = rsub_scalar(1.0, unc_w);
  const Tensor one_minus_p = rsub_scalar(1.0, p_hat);

  // Training-time accuracy is raw voxel accuracy y == argmax(p) (lowest
  // index on ties); the morphological opening is evaluation-only.
  const std::int64_t N = probs.shape()[0], C = probs.shape()[1],
                     HW = probs.shape()[2] * probs.shape()[3];
  std::vector<double> acc(static_cast<std::size_t>(N * HW));
  {
    const auto& pv = probs.values();
    const auto& yv = onehot.values();
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < HW; ++i) {
        std::int64_t best = 0, truth = 0;
        for (std::int64_t c = 1; c < C; ++c) {
          if (pv[(n * C + c) * HW + i] > pv[(n * C + best) * HW + i]) best = c;
          if (yv[(n * C + c) * HW + i] > 0.5) truth = c;
        }
        acc[n * HW + i] = best == truth ? 1.0 : 0.0;
      }
  }
  const Tensor acc_mask = Tensor::constant(
      {N, 1, probs.shape()[2], probs.shape()[3]}, std::move(acc));
  const Tensor inacc_mask = rsub_scalar(1.0, acc_mask);

  Tensor total;
  for (double t : cfg.thresholds) {
    const Tensor certain = mask_from(u, [t](double ui) { return ui <= t ? 1.0 : 0.0; });
    const Tensor uncertain = rsub_scalar(1.0, certain);

    const Tensor n_ac = sum(mul(mul(acc_mask, certain), mul(p_hat, cert_w)));
    const Tensor n_au = sum(mul(mul(acc_mask, uncertain), mul(p_hat, unc_w)));
    const Tensor n_ic =
        sum(mul(mul(inacc_mask, certain), mul(one_minus_p, cert_w)));
    const Tensor n_iu =
        sum(mul(mul(inacc_mask, uncertain), mul(one_minus_p, unc_w)));

    const Tensor ratio =
        div(add(n_au, n_ic), add_scalar(add(n_ac, n_iu), cfg.denom_eps));
    const Tensor lt = vlog(add_scalar(ratio, 1.0));
    total = total.defined() ? add(total, lt) : lt;
  }
  return mul_scalar(total, 1.0 / static_cast<double>(cfg.thresholds.size()));
}

Tensor total_loss(const Tensor& probs, const Tensor& onehot,
                  const ClassWeights& weights, const AvuLossConfig& cfg) {
  if (cfg.alpha < 0.0) throw DomainError("total_loss: alpha must be >= 0");
  const Tensor ce = weighted_bce(probs, onehot, weights);
  if (cfg.alpha == 0.0) return ce;
  return add(ce, mul_scalar(avu_loss(probs, onehot, cfg), cfg.alpha));
}

Tensor focal_loss(const Tensor& probs, const Tensor& onehot, double gamma) {
  check_probs_target(probs, onehot, "focal_loss");
  if (gamma < 0.0) throw DomainError("focal_loss: gamma must be >= 0");
  const auto& s = probs.shape();
  const double voxels = static_cast<double>(s[0] * s[2] * s[3]);
  const Tensor p_y = sum_channels(mul(onehot, probs));  // (N,1,H,W)
  const Tensor log_py = clamped_log(p_y);
  if (gamma == 0.0) return mul_scalar(sum(log_py), -1.0 / voxels);
  // (1 - p)^gamma = exp(gamma ln(1 - p))
  const Tensor mod = vexp(
      mul_scalar(clamped_log(maximum_scalar(rsub_scalar(1.0, p_y), 0.0)), gamma));
  return mul_scalar(sum(mul(mod, log_py)), -1.0 / voxels);
}

Tensor ecp_loss(const Tensor& probs, const Tensor& onehot, double lambda) {
  check_probs_target(probs, onehot, "ecp_loss");
  if (lambda < 0.0) throw DomainError("ecp_loss: lambda must be >= 0");
  const auto& s = probs.shape();
  const double voxels = static_cast<double>(s[0] * s[2] * s[3]);
  // Mean Shannon entropy (unnormalized) as the confidence penalty.
  const Tensor ent =
      mul_scalar(sum(mul(probs, clamped_log(probs))), -1.0 / voxels);
  return sub(categorical_ce(probs, onehot), mul_scalar(ent, lambda));
}

Tensor label_smoothing_loss(const Tensor& probs, const Tensor& onehot,
                            double alpha) {
  check_probs_target(probs, onehot, "label_smoothing_loss");
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw DomainError("label_smoothing_loss: alpha must be in [0,1)");
  const auto& s = probs.shape();
  const double uniform = alpha / static_cast<double>(s[1]);
  const Tensor target = add_scalar(mul_scalar(onehot, 1.0 - alpha), uniform);
  return categorical_ce(probs, target);
}

Tensor svls_loss(const Tensor& probs, const Tensor& onehot, double sigma) {
  check_probs_target(probs, onehot, "svls_loss");
  if (!(sigma > 0.0)) throw DomainError("svls_loss: sigma must be > 0");
  const auto& s = probs.shape();
  const std::int64_t N = s[0], C = s[1], H = s[2], W = s[3];

  // 3x3 Gaussian weights.
  double k[3];
  k[0] = std::exp(-1.0 / (2.0 * sigma * sigma));
  k[1] = 1.0;
  k[2] = k[0];
  const auto& yv = onehot.values();
  std::vector<double> target(yv.size(), 0.0);
  for (std::int64_t nc = 0; nc < N * C; ++nc)
    for (std::int64_t y = 0; y < H; ++y)
      for (std::int64_t x = 0; x < W; ++x) {
        double acc = 0.0, wsum = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const std::int64_t yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
            const double wk = k[dy + 1] * k[dx + 1];
            acc += wk * yv[(nc * H + yy) * W + xx];
            wsum += wk;
          }
        target[(nc * H + y) * W + x] = acc / wsum;
      }
  // Renormalize per voxel so smoothed targets stay on the simplex.
  const std::int64_t HW = H * W;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t i = 0; i < HW; ++i) {
      double ssum = 0.0;
      for (std::int64_t c = 0; c < C; ++c) ssum += target[(n * C + c) * HW + i];
      for (std::int64_t c = 0; c < C; ++c) target[(n * C + c) * HW + i] /= ssum;
    }
  return categorical_ce(probs, Tensor::constant(s, std::move(target)));
}

Tensor mbls_loss(const Tensor& logits, const Tensor& onehot, double lambda,
                 double margin) {
  check_probs_target(logits, onehot, "mbls_loss");
  if (lambda < 0.0) throw DomainError("mbls_loss: lambda must be >= 0");
  if (margin < 0.0) throw DomainError("mbls_loss: margin must be >= 0");
  const auto& s = logits.shape();
  const double voxels = static_cast<double>(s[0] * s[2] * s[3]);
  const Tensor probs = softmax(logits, 1);
  const Tensor ce = categorical_ce(probs, onehot);
  // max_c logit per voxel (grad routed through the argmax entry).
  const Tensor lmax = max_class_prob(logits);
  const Tensor gaps = sub(broadcast_channels(lmax, s[1]), logits);
  const Tensor penalty = maximum_scalar(add_scalar(gaps, -margin), 0.0);
  return add(ce, mul_scalar(sum(penalty), lambda / voxels));
}

}  // namespace avuseg
