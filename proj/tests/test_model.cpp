#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "avuseg/model.hpp"
#include "test_util.hpp"

using namespace avuseg;
namespace fs = std::filesystem;

namespace {

ScalarVolume random_image(const Dims3& d, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(d.voxels());
  for (auto& x : v) x = u(rng);
  return ScalarVolume(d, std::move(v));
}

SegModelConfig small_config(Variant v) {
  SegModelConfig cfg;
  cfg.variant = v;
  cfg.c1 = 3;
  cfg.c2 = 4;
  cfg.init_seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("forward shapes and softmax head") {
  const SegModel model(small_config(Variant::Det));
  Rng rng(3);
  const Tensor x = Tensor::constant(
      {2, 1, 8, 8}, testutil::random_uniform(128, rng, 0.0, 1.0));
  const Tensor p = model.forward_probs(x);
  REQUIRE(p.shape() == Shape{2, 2, 8, 8});
  for (std::int64_t i = 0; i < 2 * 64; ++i) {
    const std::int64_t n = i / 64, r = i % 64;
    const double s = p.values()[(n * 2 + 0) * 64 + r] +
                     p.values()[(n * 2 + 1) * 64 + r];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(model.forward_logits(Tensor::constant(
                      {1, 1, 6, 8}, std::vector<double>(48, 0.0))),
                  ShapeError);
  CHECK_THROWS_AS(model.forward_logits(Tensor::constant(
                      {1, 2, 8, 8}, std::vector<double>(128, 0.0))),
                  ShapeError);
}

TEST_CASE("parameter count is architecture-determined") {
  const SegModel det(small_config(Variant::Det));
  const SegModel mid(small_config(Variant::BayesMid));
  // conv w+b per layer; Bayesian layers double their parameters (mu, rho).
  auto conv_params = [](std::int64_t in, std::int64_t out, std::int64_t k) {
    return out * in * k * k + out;
  };
  const std::int64_t c1 = 3, c2 = 4, C = 2;
  const std::int64_t det_count =
      conv_params(1, c1, 3) + conv_params(c1, c1, 3) + conv_params(c1, c2, 3) +
      4 * conv_params(c2, c2, 3) + conv_params(c2, c2, 3) +
      conv_params(c2, c1, 3) + conv_params(c1, c1, 3) + conv_params(c1, C, 1);
  CHECK(det.parameter_count() == det_count);
  CHECK(mid.parameter_count() == det_count + 4 * conv_params(c2, c2, 3));
}

TEST_CASE("same seed, same model; different seed, different weights") {
  const SegModel a(small_config(Variant::Det));
  const SegModel b(small_config(Variant::Det));
  auto cfg = small_config(Variant::Det);
  cfg.init_seed = 6;
  const SegModel c(cfg);
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    CHECK(a.parameters()[i].second.values() ==
          b.parameters()[i].second.values());
  CHECK(a.parameters()[0].second.values() !=
        c.parameters()[0].second.values());
}

TEST_CASE("checkpoint round trip preserves weights and config") {
  const fs::path dir = fs::temp_directory_path() / "avuseg_test_model";
  fs::create_directories(dir);
  const fs::path path = dir / "model.ueckpt";

  const SegModel model(small_config(Variant::BayesMid));
  model.save(path);
  const SegModel loaded = SegModel::load(path);
  CHECK(loaded.config().variant == Variant::BayesMid);
  CHECK(loaded.config().c1 == 3);
  REQUIRE(loaded.parameters().size() == model.parameters().size());
  for (std::size_t i = 0; i < model.parameters().size(); ++i) {
    CHECK(loaded.parameters()[i].first == model.parameters()[i].first);
    CHECK(loaded.parameters()[i].second.values() ==
          model.parameters()[i].second.values());
  }
  CHECK_THROWS_AS(SegModel::load(dir / "missing.ueckpt"), IoError);
}

TEST_CASE("zero-variance bayes model equals det model with the same means") {
  SegModel det(small_config(Variant::Det));
  SegModel bayes(small_config(Variant::BayesMid));
  for (auto& [name, t] : bayes.parameters())
    if (name.ends_with("_rho"))
      for (auto& v : t.mutable_values()) v = -40.0;

  Rng rng(11);
  const ScalarVolume img = random_image({8, 8, 1}, rng);
  const ProbVolume det_out = mc_predict(det, img, 1, 42);
  const ProbVolume bayes_out = mc_predict(bayes, img, 3, 42);
  REQUIRE(det_out.data().size() == bayes_out.data().size());
  for (std::size_t i = 0; i < det_out.data().size(); ++i)
    CHECK(std::abs(det_out.data()[i] - bayes_out.data()[i]) <= 1e-12);
}

TEST_CASE("mc_predict is seed-deterministic and sample-count sensitive") {
  const SegModel model(small_config(Variant::BayesMid));
  Rng rng(13);
  const ScalarVolume img = random_image({8, 8, 2}, rng);
  const ProbVolume a = mc_predict(model, img, 4, 9);
  const ProbVolume b = mc_predict(model, img, 4, 9);
  CHECK(a.data() == b.data());
  const ProbVolume c = mc_predict(model, img, 4, 10);
  CHECK(a.data() != c.data());
}

TEST_CASE("ensemble and tta predictors") {
  auto cfg = small_config(Variant::Det);
  const SegModel m1(cfg);
  cfg.init_seed = 77;
  const SegModel m2(cfg);
  Rng rng(17);
  const ScalarVolume img = random_image({8, 8, 1}, rng);
  std::vector<SegModel> members;
  members.push_back(SegModel(small_config(Variant::Det)));
  members.push_back(SegModel(cfg));
  const ProbVolume e = ensemble_predict(members, img);
  CHECK(e.dims() == img.dims());
  CHECK_THROWS_AS(ensemble_predict({members[0]}, img), DomainError);

  const ProbVolume t1 = tta_predict(m1, img, 3, 0.05, 0.02, 21);
  const ProbVolume t2 = tta_predict(m1, img, 3, 0.05, 0.02, 21);
  CHECK(t1.data() == t2.data());
  const ProbVolume t3 = tta_predict(m1, img, 3, 0.05, 0.02, 22);
  CHECK(t1.data() != t3.data());
}
