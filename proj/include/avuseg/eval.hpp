#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "avuseg/metrics.hpp"
#include "avuseg/model.hpp"
#include "avuseg/synthdata.hpp"

// Per-scan evaluation battery and dataset-level aggregation.

namespace avuseg {

struct EvalConfig {
  double u_max = 0.0;  // 0 = preset from class count (2 -> 1.0, 6 -> 0.4)
  std::int64_t steps = 101;
  MorphKernel kernel;  // (3,3,1)
  std::int64_t bins = 10;
  std::int64_t mc_samples = 5;
  std::string predictor = "mc";  // mc | mean | tta
  double tta_sigma = 0.05;
  double tta_rate = 0.02;
  std::int64_t tta_reps = 5;
  std::uint64_t seed = 0;
  bool crop_to_foreground = false;  // restrict ECE to a foreground box
};

double resolve_u_max(const EvalConfig& cfg, std::int64_t num_classes);

struct ScanEval {
  std::string id;
  double dice = 0.0, ece = 0.0, avu_auc = 0.0;
  // Unset when the scan has no failure voxels (excluded from ROC/PRC).
  std::optional<double> roc_auc, prc_auc;
  CurveSeries avu, roc, prc;
};

struct MetricStats {
  double mean = 0.0, stddev = 0.0;
  std::int64_t n = 0;
};

struct EvalSummary {
  std::vector<ScanEval> scans;
  std::map<std::string, MetricStats> stats;  // dice, ece, avu_auc, roc_auc, prc_auc
  std::int64_t roc_excluded = 0;
};

ScanEval evaluate_scan(const std::string& id, const ProbVolume& probs,
                       const LabelVolume& gt, const EvalConfig& cfg);

ProbVolume predict(const SegModel& model, const ScalarVolume& image,
                   const EvalConfig& cfg);

EvalSummary evaluate_model(const SegModel& model, const Dataset& ds,
                           Split split, const EvalConfig& cfg);
EvalSummary evaluate_ensemble(const std::vector<SegModel>& members,
                              const Dataset& ds, Split split,
                              const EvalConfig& cfg);

// Paired Wilcoxon p-values per metric over scans present in both summaries.
std::map<std::string, double> compare_summaries(const EvalSummary& a,
                                                const EvalSummary& b);

}  // namespace avuseg
