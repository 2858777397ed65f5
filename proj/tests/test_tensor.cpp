#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "avuseg/tensor.hpp"
#include "test_util.hpp"

using namespace avuseg;
using testutil::gradient_check;
using testutil::random_uniform;

TEST_CASE("elementwise forward values") {
  const Tensor a = Tensor::constant({3}, {1.0, 2.0, 3.0});
  const Tensor b = Tensor::constant({3}, {4.0, 0.5, -1.0});
  CHECK(add(a, b).values() == std::vector<double>{5.0, 2.5, 2.0});
  CHECK(sub(a, b).values() == std::vector<double>{-3.0, 1.5, 4.0});
  CHECK(mul(a, b).values() == std::vector<double>{4.0, 1.0, -3.0});
  CHECK(div(a, b).values()[1] == doctest::Approx(4.0));
  CHECK(maximum(a, b).values() == std::vector<double>{4.0, 2.0, 3.0});
  CHECK(rsub_scalar(1.0, a).values() == std::vector<double>{0.0, -1.0, -2.0});
  CHECK(sum(a).item() == 6.0);
  CHECK(mean(a).item() == 2.0);
}

TEST_CASE("shape mismatch throws") {
  const Tensor a = Tensor::constant({3}, {1, 2, 3});
  const Tensor b = Tensor::constant({2}, {1, 2});
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(reshape(a, {2, 2}), ShapeError);
}

TEST_CASE("log domain error") {
  CHECK_THROWS_AS(vlog(Tensor::constant({1}, {0.0})), DomainError);
  CHECK_THROWS_AS(vlog(Tensor::constant({1}, {-1.0})), DomainError);
}

TEST_CASE("backward contract") {
  Tensor p = Tensor::param({2}, {1.0, 2.0});
  const Tensor loss = sum(mul(p, p));
  CHECK_THROWS_AS(backward(mul(p, p)), ShapeError);  // non-scalar root
  backward(loss);
  CHECK(p.grad() == std::vector<double>{2.0, 4.0});
  CHECK_THROWS_AS(backward(loss), Error);  // repeated call
  CHECK_THROWS_AS(backward(sum(Tensor::constant({2}, {1, 2}))), Error);
}

TEST_CASE("gradients: elementwise and reductions") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = Tensor::param({6}, random_uniform(6, rng, 0.2, 2.0));
    Tensor b = Tensor::param({6}, random_uniform(6, rng, 0.2, 2.0));
    std::vector<Tensor> params{a, b};
    auto build = [&] {
      const Tensor x = add(mul(a, b), div(a, add_scalar(b, 1.0)));
      return mean(add(mul(vtanh(x), vexp(neg(a))),
                      mul(vlog(x), vsoftplus(b))));
    };
    CHECK(gradient_check(build, params) < 1e-6);
  }
}

TEST_CASE("gradients: maximum routes to larger input") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a = Tensor::param({8}, random_uniform(8, rng, -1.0, 1.0));
    Tensor b = Tensor::param({8}, random_uniform(8, rng, -1.0, 1.0));
    std::vector<Tensor> params{a, b};
    auto build = [&] { return sum(mul(maximum(a, b), maximum_scalar(a, 0.1))); };
    CHECK(gradient_check(build, params) < 1e-6);
  }
}

TEST_CASE("gradients: matmul and reshape") {
  Rng rng(11);
  Tensor a = Tensor::param({3, 4}, random_uniform(12, rng, -1.0, 1.0));
  Tensor b = Tensor::param({4, 2}, random_uniform(8, rng, -1.0, 1.0));
  std::vector<Tensor> params{a, b};
  auto build = [&] {
    return sum(mul(reshape(matmul(a, b), {2, 3}),
                   reshape(matmul(a, b), {2, 3})));
  };
  CHECK(gradient_check(build, params) < 1e-6);
}

TEST_CASE("conv2d matches direct oracle (same and valid, dilation)") {
  Rng rng(13);
  const std::int64_t N = 2, Cin = 3, H = 7, W = 6, Cout = 2, K = 3;
  for (const auto& [padding, dilation] :
       {std::pair{Padding::Same, std::int64_t{1}},
        std::pair{Padding::Same, std::int64_t{2}},
        std::pair{Padding::Valid, std::int64_t{1}}}) {
    const auto xv = random_uniform(N * Cin * H * W, rng, -1.0, 1.0);
    const auto wv = random_uniform(Cout * Cin * K * K, rng, -1.0, 1.0);
    const Tensor x = Tensor::constant({N, Cin, H, W}, xv);
    const Tensor w = Tensor::constant({Cout, Cin, K, K}, wv);
    const Tensor y = conv2d(x, w, padding, dilation);

    const std::int64_t pad =
        padding == Padding::Same ? dilation * (K - 1) / 2 : 0;
    const std::int64_t OH = H + 2 * pad - dilation * (K - 1);
    const std::int64_t OW = W + 2 * pad - dilation * (K - 1);
    REQUIRE(y.shape() == Shape{N, Cout, OH, OW});
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t co = 0; co < Cout; ++co)
        for (std::int64_t oy = 0; oy < OH; ++oy)
          for (std::int64_t ox = 0; ox < OW; ++ox) {
            double acc = 0.0;
            for (std::int64_t ci = 0; ci < Cin; ++ci)
              for (std::int64_t ky = 0; ky < K; ++ky)
                for (std::int64_t kx = 0; kx < K; ++kx) {
                  const std::int64_t iy = oy + dilation * ky - pad;
                  const std::int64_t ix = ox + dilation * kx - pad;
                  if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                  acc += xv[((n * Cin + ci) * H + iy) * W + ix] *
                         wv[((co * Cin + ci) * K + ky) * K + kx];
                }
            CHECK(y.values()[((n * Cout + co) * OH + oy) * OW + ox] ==
                  doctest::Approx(acc).epsilon(1e-12));
          }
  }
}

TEST_CASE("gradients: conv2d, bias, pooling, upsample") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = Tensor::param({1, 2, 4, 4}, random_uniform(32, rng, -1.0, 1.0));
    Tensor w = Tensor::param({3, 2, 3, 3}, random_uniform(54, rng, -0.5, 0.5));
    Tensor b = Tensor::param({3}, random_uniform(3, rng, -0.5, 0.5));
    std::vector<Tensor> params{x, w, b};
    auto build = [&] {
      const Tensor y = add_channel_bias(conv2d(x, w, Padding::Same), b);
      return sum(mul(upsample2(maxpool2(y)), upsample2(maxpool2(y))));
    };
    CHECK(gradient_check(build, params) < 1e-5);
  }
}

TEST_CASE("softmax: rows sum to one, gradient correct") {
  Rng rng(19);
  Tensor x = Tensor::param({2, 3, 2, 2}, random_uniform(24, rng, -2.0, 2.0));
  const Tensor s = softmax(x, 1);
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t i = 0; i < 4; ++i) {
      double rs = 0.0;
      for (std::int64_t c = 0; c < 3; ++c)
        rs += s.values()[(n * 3 + c) * 4 + i];
      CHECK(rs == doctest::Approx(1.0).epsilon(1e-12));
    }
  std::vector<Tensor> params{x};
  auto build = [&] {
    const Tensor sm = softmax(x, 1);
    return sum(mul(sm, vlog(add_scalar(sm, 0.5))));
  };
  CHECK(gradient_check(build, params) < 1e-6);
}

TEST_CASE("sum_channels / broadcast_channels round trip gradient") {
  Rng rng(23);
  Tensor x = Tensor::param({2, 3, 2, 2}, random_uniform(24, rng, 0.1, 1.0));
  std::vector<Tensor> params{x};
  auto build = [&] {
    return sum(mul(broadcast_channels(sum_channels(x), 3), x));
  };
  CHECK(gradient_check(build, params) < 1e-6);
}

TEST_CASE("mask_from is detached") {
  Tensor x = Tensor::param({3}, {0.1, 0.6, 0.9});
  const Tensor m = mask_from(x, [](double v) { return v > 0.5 ? 1.0 : 0.0; });
  CHECK(m.values() == std::vector<double>{0.0, 1.0, 1.0});
  CHECK_FALSE(m.requires_grad());
  backward(sum(mul(m, x)));
  CHECK(x.grad() == std::vector<double>{0.0, 1.0, 1.0});
}

TEST_CASE("maxpool argmax ties and detached graph") {
  const Tensor x = Tensor::constant({1, 1, 2, 2}, {1.0, 1.0, 1.0, 1.0});
  CHECK(maxpool2(x).values() == std::vector<double>{1.0});
  CHECK_THROWS_AS(maxpool2(Tensor::constant({1, 1, 3, 2}, std::vector<double>(6))),
                  ShapeError);
}
