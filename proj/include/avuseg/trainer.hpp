#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "avuseg/eval.hpp"
#include "avuseg/losses.hpp"
#include "avuseg/model.hpp"
#include "avuseg/synthdata.hpp"

// Adam training loop over synthetic datasets with per-epoch CSV logging and
// best-validation-DICE checkpointing, plus the alpha sweep with automatic
// candidate selection.

namespace avuseg {

enum class LossKind { Ce, Avu, Focal, Ecp, LabelSmoothing, Svls, Mbls };

LossKind loss_kind_from_string(const std::string& s);
std::string loss_kind_to_string(LossKind k);

struct TrainConfig {
  SegModelConfig model;
  LossKind loss = LossKind::Ce;
  double alpha = 100.0;          // AvU weight
  double focal_gamma = 2.0;
  double ecp_lambda = 0.1;
  double smoothing = 0.1;        // label smoothing / SVLS sigma
  double mbls_lambda = 0.1;
  double mbls_margin = 10.0;
  std::vector<double> class_weights;  // empty -> inverse train frequency
  double kl_weight = 0.0;

  std::int64_t epochs = 200;
  std::int64_t batch_slices = 4;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;

  std::int64_t val_every = 1;  // epochs between validation passes
  EvalConfig eval;

  std::filesystem::path log_csv;    // empty -> no log file
  std::filesystem::path checkpoint; // empty -> no checkpoint file
};

struct EpochStats {
  std::int64_t epoch = 0;
  double ce = 0.0, avu = 0.0, total = 0.0;
  double val_dice = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  SegModel model;
  std::vector<EpochStats> history;
  double best_val_dice = 0.0;
  std::int64_t best_epoch = -1;
};

// Adam with global-norm gradient clipping over the model parameter list.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::pair<std::string, Tensor>>& params, double lr,
                double beta1, double beta2, double eps, double clip_norm);

  void step();
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>>* params_;
  double lr_, beta1_, beta2_, eps_, clip_norm_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Inverse-frequency class weights over the train split annotations,
// normalized to mean 1.
ClassWeights inverse_frequency_weights(const Dataset& ds,
                                       std::int64_t num_classes);

TrainResult train(const TrainConfig& cfg, const Dataset& ds);

struct SweepResult {
  std::vector<double> alphas;
  std::vector<CandidateMetrics> candidates;  // validation metrics per alpha
  std::size_t selected = 0;
  std::vector<TrainResult> runs;
};

// Trains one AvU model per alpha and applies the selection rule to the
// validation metrics.
SweepResult sweep_alpha(const TrainConfig& base, const Dataset& ds,
                        const std::vector<double>& alphas);

}  // namespace avuseg
