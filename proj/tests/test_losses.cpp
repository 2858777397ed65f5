#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "avuseg/losses.hpp"
#include "test_util.hpp"

using namespace avuseg;
using testutil::gradient_check;
using testutil::random_uniform;

namespace {

std::vector<std::uint8_t> random_labels(std::int64_t n, std::int64_t classes,
                                        Rng& rng) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(classes) - 1);
  std::vector<std::uint8_t> out(n);
  for (auto& v : out) v = static_cast<std::uint8_t>(d(rng));
  return out;
}

}  // namespace

TEST_CASE("weighted bce oracle: single uniform voxel") {
  // C=2, p=(.5,.5), y=(1,0), unit weights: -(1/2)(ln .5 + ln .5) = ln 2.
  const Tensor probs = Tensor::constant({1, 2, 1, 1}, {0.5, 0.5});
  const Tensor onehot = one_hot_tensor({0}, 1, 2, 1, 1);
  const ClassWeights w{{1.0, 1.0}};
  CHECK(weighted_bce(probs, onehot, w).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Class weights scale their channel's contribution.
  const ClassWeights w2{{2.0, 1.0}};
  CHECK(weighted_bce(probs, onehot, w2).item() ==
        doctest::Approx(1.5 * std::log(2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(weighted_bce(probs, onehot, ClassWeights{{1.0}}), ShapeError);
  CHECK_THROWS_AS(weighted_bce(probs, onehot, ClassWeights{{0.0, 1.0}}),
                  DomainError);
}

TEST_CASE("bce decreases as prediction approaches target") {
  const Tensor onehot = one_hot_tensor({0}, 1, 2, 1, 1);
  const ClassWeights w{{1.0, 1.0}};
  double prev = 1e18;
  for (double p : {0.5, 0.7, 0.9, 0.99}) {
    const double v =
        weighted_bce(Tensor::constant({1, 2, 1, 1}, {p, 1.0 - p}), onehot, w)
            .item();
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("avu loss: nonnegative, config validation, confidence direction") {
  Rng rng(59);
  const auto pv = testutil::random_probs_nchw(1, 2, 16, rng);
  const Tensor probs = Tensor::constant({1, 2, 4, 4}, pv);
  const Tensor onehot =
      one_hot_tensor(random_labels(16, 2, rng), 1, 2, 4, 4);
  AvuLossConfig cfg;
  CHECK(avu_loss(probs, onehot, cfg).item() >= 0.0);

  AvuLossConfig bad = cfg;
  bad.thresholds = {0.5, 0.5};
  CHECK_THROWS_AS(avu_loss(probs, onehot, bad), DomainError);
  bad.thresholds = {};
  CHECK_THROWS_AS(avu_loss(probs, onehot, bad), DomainError);
  bad.thresholds = {1.5};
  CHECK_THROWS_AS(avu_loss(probs, onehot, bad), DomainError);

  // Confident correct predictions give a smaller loss than uncertain ones.
  std::vector<std::uint8_t> labels(16, 0);
  const Tensor y = one_hot_tensor(labels, 1, 2, 4, 4);
  std::vector<double> cprob(32), hprob(32);
  for (int i = 0; i < 16; ++i) {
    cprob[i] = 0.99;
    cprob[16 + i] = 0.01;
    hprob[i] = 0.55;
    hprob[16 + i] = 0.45;
  }
  const double lc =
      avu_loss(Tensor::constant({1, 2, 4, 4}, cprob), y, cfg).item();
  const double lh =
      avu_loss(Tensor::constant({1, 2, 4, 4}, hprob), y, cfg).item();
  CHECK(lc < lh);
}

TEST_CASE("total loss: alpha 0 is bitwise the bce") {
  Rng rng(61);
  const auto pv = testutil::random_probs_nchw(1, 2, 16, rng);
  const Tensor probs = Tensor::constant({1, 2, 4, 4}, pv);
  const Tensor onehot = one_hot_tensor(random_labels(16, 2, rng), 1, 2, 4, 4);
  const ClassWeights w{{1.0, 3.0}};
  AvuLossConfig cfg;
  cfg.alpha = 0.0;
  CHECK(total_loss(probs, onehot, w, cfg).item() ==
        weighted_bce(probs, onehot, w).item());
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(total_loss(probs, onehot, w, cfg), DomainError);
}

TEST_CASE("gradient checks across all losses, 10 seeds each") {
  const std::int64_t N = 1, C = 3, H = 2, W = 2, HW = H * W;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Tensor logits =
        Tensor::param({N, C, H, W}, random_uniform(N * C * HW, rng, -1.5, 1.5));
    const Tensor onehot = one_hot_tensor(random_labels(HW, C, rng), N, C, H, W);
    const ClassWeights w{{1.0, 2.0, 0.5}};
    std::vector<Tensor> params{logits};

    const auto check = [&](const char* name, auto loss_fn) {
      CAPTURE(name);
      CAPTURE(seed);
      auto build = [&] { return loss_fn(softmax(logits, 1)); };
      CHECK(gradient_check(build, params) < 1e-5);
    };

    check("bce", [&](const Tensor& p) { return weighted_bce(p, onehot, w); });
    check("avu", [&](const Tensor& p) {
      AvuLossConfig cfg;
      return avu_loss(p, onehot, cfg);
    });
    check("total", [&](const Tensor& p) {
      AvuLossConfig cfg;
      cfg.alpha = 10.0;
      return total_loss(p, onehot, w, cfg);
    });
    check("focal", [&](const Tensor& p) { return focal_loss(p, onehot, 2.0); });
    check("ecp", [&](const Tensor& p) { return ecp_loss(p, onehot, 0.1); });
    check("ls",
          [&](const Tensor& p) { return label_smoothing_loss(p, onehot, 0.1); });
    check("svls", [&](const Tensor& p) { return svls_loss(p, onehot, 1.0); });

    auto build_mbls = [&] { return mbls_loss(logits, onehot, 0.1, 0.5); };
    CHECK(gradient_check(build_mbls, params) < 1e-5);
  }
}

TEST_CASE("one hot validation") {
  CHECK_THROWS_AS(one_hot_tensor({3}, 1, 2, 1, 1), DomainError);
  CHECK_THROWS_AS(one_hot_tensor({0, 1}, 1, 2, 1, 1), ShapeError);
}
