#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "avuseg/tensor.hpp"

namespace avuseg::testutil {

// Worst relative error between analytic gradients and central finite
// differences. `build` must construct a fresh scalar loss graph from the
// current parameter values on every call.
inline double gradient_check(const std::function<Tensor()>& build,
                             std::vector<Tensor>& params, double h = 1e-6) {
  for (auto& p : params) p.zero_grad();
  Tensor loss = build();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(p.grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double up = build().item();
      vals[i] = orig - h;
      const double down = build().item();
      vals[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
      worst = std::max(worst, std::abs(a - fd) / denom);
    }
  }
  return worst;
}

inline std::vector<double> random_uniform(std::int64_t n, Rng& rng, double lo,
                                          double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> out(n);
  for (auto& v : out) v = d(rng);
  return out;
}

// Random probability field laid out (N,C,H,W), rows on the simplex.
inline std::vector<double> random_probs_nchw(std::int64_t n, std::int64_t c,
                                             std::int64_t hw, Rng& rng) {
  std::uniform_real_distribution<double> d(0.05, 1.0);
  std::vector<double> out(n * c * hw);
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t i = 0; i < hw; ++i) {
      double s = 0.0;
      for (std::int64_t k = 0; k < c; ++k) {
        const double v = d(rng);
        out[(b * c + k) * hw + i] = v;
        s += v;
      }
      for (std::int64_t k = 0; k < c; ++k) out[(b * c + k) * hw + i] /= s;
    }
  return out;
}

}  // namespace avuseg::testutil
