#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "avuseg/inaccuracy.hpp"
#include "avuseg/volumes.hpp"

// Evaluation battery: normalized entropy, DICE, ECE, the AvU metric and its
// threshold-swept curve, uncertainty-ROC / uncertainty-PRC, the Wilcoxon
// signed-rank test and the hyperparameter-selection rule.
//
// Inaccuracy throughout means membership in the failures mask of an
// InaccuracyDecomposition; small opened-away errors count as accurate.

namespace avuseg {

struct AvuCounts {
  std::int64_t n_ac = 0, n_au = 0, n_ic = 0, n_iu = 0;
  std::int64_t total() const { return n_ac + n_au + n_ic + n_iu; }
};

struct CurveSeries {
  std::vector<double> thresholds;  // strictly ascending
  std::vector<double> xs;          // empty for y-vs-threshold curves
  std::vector<double> ys;
  double auc = 0.0;
};

// u = -(1/ln C) sum_c p ln p, logs eps-clamped; values in [0,1].
ScalarVolume entropy_map(const ProbVolume& probs);

// 2|P n G| / (|P| + |G|); both sides empty -> 1.
double dice(const LabelVolume& pred, const LabelVolume& gt, std::int64_t cls);
// Mean DICE over foreground classes 1..C-1.
double mean_foreground_dice(const LabelVolume& pred, const LabelVolume& gt);

// Equal-width confidence bins; confidence is the max class probability,
// accuracy is absence from the failures mask.
double ece(const ProbVolume& probs, const InaccuracyDecomposition& decomp,
           std::int64_t bins = 10);

// Certain iff u <= t; accurate iff not in failures.
AvuCounts avu_counts(const ScalarVolume& unc,
                     const InaccuracyDecomposition& decomp, double t);
double avu_metric(const AvuCounts& counts);

// AvU per threshold on an even grid over [0, u_max]; AUC by trapezoid,
// normalized by u_max.
CurveSeries avu_curve(const ScalarVolume& unc,
                      const InaccuracyDecomposition& decomp, double u_max,
                      std::int64_t steps = 101);

// TPR = n_iu/(n_iu+n_ic), FPR = n_au/(n_au+n_ac); anchored at (0,0),(1,1).
// DomainError when the scan has no failure voxels (or no accurate ones).
CurveSeries unc_roc_curve(const ScalarVolume& unc,
                          const InaccuracyDecomposition& decomp, double u_max,
                          std::int64_t steps = 101);

// precision = n_iu/(n_iu+n_au), recall = n_iu/(n_iu+n_ic); thresholds with
// no uncertain voxels are dropped; AUC by trapezoid over recall.
CurveSeries unc_prc_curve(const ScalarVolume& unc,
                          const InaccuracyDecomposition& decomp, double u_max,
                          std::int64_t steps = 101);

// Two-sided p-value; exact enumeration for n <= 12 non-zero differences,
// normal approximation with tie correction above.
double wilcoxon_signed_rank(const std::vector<double>& a,
                            const std::vector<double>& b);

struct CandidateMetrics {
  std::string id;
  // Natural [0,1] scale; the selection rule's "10.0 points" is 0.10 here.
  double dice = 0.0, ece = 0.0, avu_auc = 0.0, roc_auc = 0.0, prc_auc = 0.0;
};

// Drops candidates more than 10 points (0.10) behind the class best on
// DICE, ECE or AvU-AUC, picks a survivor winning >= 4 of the 5 metrics,
// otherwise the middlemost survivor in sweep order. Returns the index into
// `candidates`.
std::size_t select_hyperparameter(const std::vector<CandidateMetrics>& candidates);

}  // namespace avuseg
