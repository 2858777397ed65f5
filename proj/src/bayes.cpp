#include "avuseg/bayes.hpp"

#include <cmath>

namespace avuseg {

namespace {

// rho such that softplus(rho) == std.
double rho_for_std(double std) { return std::log(std::expm1(std)); }

std::vector<double> uniform_init(std::int64_t count, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(count);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::vector<double> normal_sample(std::int64_t count, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(count);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::vector<double> rademacher(std::int64_t count, Rng& rng) {
  std::vector<double> v(count);
  for (auto& x : v) x = (rng() & 1) ? 1.0 : -1.0;
  return v;
}

Tensor sampled_bias(const Tensor& b_mu, const Tensor& b_rho, Rng& rng) {
  const Tensor eps = Tensor::constant(b_mu.shape(),
                                      normal_sample(b_mu.size(), rng));
  return add(b_mu, mul(vsoftplus(b_rho), eps));
}

}  // namespace

FlipoutDense FlipoutDense::init(std::int64_t in, std::int64_t out, Rng& rng,
                                double init_std_scale) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  const double rho0 = rho_for_std(init_std_scale * bound);
  FlipoutDense l;
  l.w_mu = Tensor::param({out, in}, uniform_init(out * in, bound, rng));
  l.w_rho = Tensor::param({out, in}, std::vector<double>(out * in, rho0));
  l.b_mu = Tensor::param({out}, std::vector<double>(out, 0.0));
  l.b_rho = Tensor::param({out}, std::vector<double>(out, rho0));
  return l;
}

Tensor FlipoutDense::forward(const Tensor& x, Rng* rng) const {
  const std::int64_t in = w_mu.shape()[1], out = w_mu.shape()[0];
  if (x.shape().size() != 2 || x.shape()[1] != in)
    throw ShapeError("flipout_dense: input shape " + shape_str(x.shape()) +
                     " does not match weight " + shape_str(w_mu.shape()));
  const std::int64_t batch = x.shape()[0];
  // A dense layer is a 1x1 convolution over a 1x1 image; the per-example
  // Rademacher signs over in/out channels are exactly the dense s and r
  // vectors, so route through the conv path.
  const Tensor x4 = reshape(x, {batch, in, 1, 1});
  const Tensor w4 = reshape(w_mu, {out, in, 1, 1});
  Tensor y = conv2d(x4, w4, Padding::Valid);
  if (rng) {
    const Tensor eps =
        Tensor::constant(w_mu.shape(), normal_sample(w_mu.size(), *rng));
    const Tensor delta_w =
        reshape(mul(vsoftplus(w_rho), eps), {out, in, 1, 1});
    std::vector<double> s_full(static_cast<std::size_t>(batch * in));
    std::vector<double> r_full(static_cast<std::size_t>(batch * out));
    for (std::int64_t b = 0; b < batch; ++b) {
      const auto s = rademacher(in, *rng);
      const auto r = rademacher(out, *rng);
      std::copy(s.begin(), s.end(), s_full.begin() + b * in);
      std::copy(r.begin(), r.end(), r_full.begin() + b * out);
    }
    const Tensor xs =
        mul(x4, Tensor::constant({batch, in, 1, 1}, std::move(s_full)));
    const Tensor perturb =
        mul(conv2d(xs, delta_w, Padding::Valid),
            Tensor::constant({batch, out, 1, 1}, std::move(r_full)));
    y = add(y, perturb);
  }
  const Tensor bias = rng ? sampled_bias(b_mu, b_rho, *rng) : b_mu;
  return reshape(add_channel_bias(y, bias), {batch, out});
}

FlipoutConv2d FlipoutConv2d::init(std::int64_t in_ch, std::int64_t out_ch,
                                  std::int64_t k, Padding padding,
                                  std::int64_t dilation, Rng& rng,
                                  double init_std_scale) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in_ch * k * k));
  const double rho0 = rho_for_std(init_std_scale * bound);
  FlipoutConv2d l;
  const std::int64_t n = out_ch * in_ch * k * k;
  l.w_mu = Tensor::param({out_ch, in_ch, k, k}, uniform_init(n, bound, rng));
  l.w_rho = Tensor::param({out_ch, in_ch, k, k}, std::vector<double>(n, rho0));
  l.b_mu = Tensor::param({out_ch}, std::vector<double>(out_ch, 0.0));
  l.b_rho = Tensor::param({out_ch}, std::vector<double>(out_ch, rho0));
  l.padding = padding;
  l.dilation = dilation;
  return l;
}

Tensor FlipoutConv2d::forward(const Tensor& x, Rng* rng) const {
  Tensor y = conv2d(x, w_mu, padding, dilation);
  if (rng) {
    const Tensor eps =
        Tensor::constant(w_mu.shape(), normal_sample(w_mu.size(), *rng));
    const Tensor delta_w = mul(vsoftplus(w_rho), eps);
    const std::int64_t N = x.shape()[0], Cin = x.shape()[1],
                       HW = x.shape()[2] * x.shape()[3];
    const std::int64_t Cout = w_mu.shape()[0];
    const std::int64_t OHW = y.shape()[2] * y.shape()[3];
    // Signs per example and channel, shared across the spatial extent.
    std::vector<double> s_full(static_cast<std::size_t>(N * Cin * HW));
    std::vector<double> r_full(static_cast<std::size_t>(N * Cout * OHW));
    for (std::int64_t n = 0; n < N; ++n) {
      const auto s = rademacher(Cin, *rng);
      const auto r = rademacher(Cout, *rng);
      for (std::int64_t c = 0; c < Cin; ++c)
        std::fill_n(s_full.begin() + (n * Cin + c) * HW, HW, s[c]);
      for (std::int64_t c = 0; c < Cout; ++c)
        std::fill_n(r_full.begin() + (n * Cout + c) * OHW, OHW, r[c]);
    }
    const Tensor xs = mul(x, Tensor::constant(x.shape(), std::move(s_full)));
    const Tensor perturb =
        mul(conv2d(xs, delta_w, padding, dilation),
            Tensor::constant(y.shape(), std::move(r_full)));
    y = add(y, perturb);
  }
  const Tensor bias = rng ? sampled_bias(b_mu, b_rho, *rng) : b_mu;
  return add_channel_bias(y, bias);
}

Tensor kl_divergence(const Tensor& mu, const Tensor& rho, double prior_std) {
  if (!(prior_std > 0.0)) throw DomainError("kl: prior std must be > 0");
  // KL(N(mu,s^2) || N(0,p^2)) = ln(p/s) + (s^2 + mu^2)/(2 p^2) - 1/2, summed.
  const Tensor s = vsoftplus(rho);
  const double inv_2p2 = 1.0 / (2.0 * prior_std * prior_std);
  const Tensor quad =
      mul_scalar(add(mul(s, s), mul(mu, mu)), inv_2p2);
  const Tensor log_term = rsub_scalar(std::log(prior_std), vlog(s));
  return sum(add_scalar(add(log_term, quad), -0.5));
}

}  // namespace avuseg
