#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "avuseg/bayes.hpp"
#include "avuseg/tensor.hpp"
#include "avuseg/volumes.hpp"

// Miniature encoder-decoder segmentation network: two downsampling stages,
// four dilated middle convolutions (dilations 1,2,5,1), a skip-connected
// decoder and a per-class softmax head. Variants differ only in where
// FlipOut layers replace deterministic convolutions.

namespace avuseg {

enum class Variant { Det, BayesMid, BayesHead };

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

struct SegModelConfig {
  Variant variant = Variant::Det;
  std::int64_t num_classes = 2;
  std::int64_t c1 = 6;   // encoder stage-1 / decoder stage-1 channels
  std::int64_t c2 = 12;  // encoder stage-2 / middle channels
  std::vector<std::int64_t> dilations = {1, 2, 5, 1};
  double init_std_scale = 1e-3;
  double prior_std = 1.0;
  std::uint64_t init_seed = 0;
};

class SegModel {
 public:
  explicit SegModel(const SegModelConfig& cfg);

  const SegModelConfig& config() const { return cfg_; }

  // x: (N,1,H,W) with H, W divisible by 4. rng == nullptr uses posterior
  // means (and is the only path for Det).
  Tensor forward_logits(const Tensor& x, Rng* rng = nullptr) const;
  Tensor forward_probs(const Tensor& x, Rng* rng = nullptr) const;

  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const {
    return params_;
  }
  std::int64_t parameter_count() const;

  void save(const std::filesystem::path& path) const;
  static SegModel load(const std::filesystem::path& path);

 private:
  struct Layer {
    std::string name;
    bool bayesian = false;
    std::int64_t dilation = 1;
    Padding padding = Padding::Same;
    // Deterministic layers use w/b; Bayesian ones the FlipOut pair.
    Tensor w, b;
    FlipoutConv2d flip;

    Tensor apply(const Tensor& x, Rng* rng) const;
  };

  Layer make_layer(const std::string& name, std::int64_t in_ch,
                   std::int64_t out_ch, std::int64_t k, std::int64_t dilation,
                   bool bayesian, Rng& rng);

  SegModelConfig cfg_;
  std::vector<Layer> layers_;  // by role, see seg_model.cpp
  std::vector<std::pair<std::string, Tensor>> params_;
};

// Image volume -> (Z,1,Y,X) input tensor and back.
Tensor image_to_tensor(const ScalarVolume& image);
ProbVolume tensor_to_prob_volume(const Tensor& probs, const Dims3& dims);

// Mean of M stochastic softmax passes; sample m uses substream
// seed(seed, m), so the result is independent of scheduling.
ProbVolume mc_predict(const SegModel& model, const ScalarVolume& image,
                      std::int64_t samples, std::uint64_t seed);

// Mean of member mean-path outputs.
ProbVolume ensemble_predict(const std::vector<SegModel>& members,
                            const ScalarVolume& image);

// M additive-Gaussian-noise passes plus M random-pixel-removal passes,
// all 2M averaged.
ProbVolume tta_predict(const SegModel& model, const ScalarVolume& image,
                       std::int64_t reps, double noise_sigma,
                       double removal_rate, std::uint64_t seed);

}  // namespace avuseg
