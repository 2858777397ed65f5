#include "avuseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace avuseg {

namespace {

void check_paired_dims(const Dims3& a, const Dims3& b, const char* op) {
  if (!(a == b))
    throw ShapeError(std::string(op) + ": dim mismatch " + a.str() + " vs " +
                     b.str());
}

std::vector<double> even_grid(double lo, double hi, std::int64_t steps) {
  std::vector<double> g(steps);
  for (std::int64_t i = 0; i < steps; ++i)
    g[i] = lo + (hi - lo) * static_cast<double>(i) /
                    static_cast<double>(steps - 1);
  return g;
}

void check_curve_args(double u_max, std::int64_t steps) {
  if (!(u_max > 0.0 && u_max <= 1.0))
    throw DomainError("curve: u_max must be in (0,1]");
  if (steps < 2) throw DomainError("curve: steps must be >= 2");
}

// Trapezoid over (x, y) pairs already sorted by x.
double trapezoid(const std::vector<double>& xs, const std::vector<double>& ys) {
  double a = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i)
    a += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
  return a;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

ScalarVolume entropy_map(const ProbVolume& probs) {
  const std::int64_t C = probs.num_classes();
  const double inv_log_c = 1.0 / std::log(static_cast<double>(C));
  std::vector<double> u(probs.dims().voxels());
  const auto& d = probs.data();
  for (std::int64_t v = 0; v < probs.dims().voxels(); ++v) {
    double h = 0.0;
    for (std::int64_t c = 0; c < C; ++c) {
      const double p = d[v * C + c];
      h -= p * std::log(std::max(p, kProbEps));
    }
    u[v] = std::clamp(h * inv_log_c, 0.0, 1.0);
  }
  return ScalarVolume(probs.dims(), std::move(u));
}

double dice(const LabelVolume& pred, const LabelVolume& gt, std::int64_t cls) {
  check_paired_dims(pred.dims(), gt.dims(), "dice");
  std::int64_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.data().size(); ++i) {
    const bool in_p = pred.data()[i] == cls;
    const bool in_g = gt.data()[i] == cls;
    p += in_p;
    g += in_g;
    both += in_p && in_g;
  }
  if (p + g == 0) return 1.0;  // empty organ predicted empty
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

double mean_foreground_dice(const LabelVolume& pred, const LabelVolume& gt) {
  const std::int64_t C = gt.num_classes();
  double acc = 0.0;
  for (std::int64_t c = 1; c < C; ++c) acc += dice(pred, gt, c);
  return acc / static_cast<double>(C - 1);
}

double ece(const ProbVolume& probs, const InaccuracyDecomposition& decomp,
           std::int64_t bins) {
  check_paired_dims(probs.dims(), decomp.failures.dims, "ece");
  if (bins < 1) throw DomainError("ece: bins must be >= 1");
  const std::int64_t C = probs.num_classes();
  std::vector<std::int64_t> n(bins, 0), hits(bins, 0);
  std::vector<double> conf_sum(bins, 0.0);
  const auto& d = probs.data();
  const std::int64_t voxels = probs.dims().voxels();
  for (std::int64_t v = 0; v < voxels; ++v) {
    double conf = d[v * C];
    for (std::int64_t c = 1; c < C; ++c) conf = std::max(conf, d[v * C + c]);
    const auto b = std::min<std::int64_t>(
        bins - 1, static_cast<std::int64_t>(conf * static_cast<double>(bins)));
    ++n[b];
    conf_sum[b] += conf;
    hits[b] += decomp.failures.data[v] ? 0 : 1;
  }
  double e = 0.0;
  for (std::int64_t b = 0; b < bins; ++b) {
    if (n[b] == 0) continue;
    const double nb = static_cast<double>(n[b]);
    e += (nb / static_cast<double>(voxels)) *
         std::abs(static_cast<double>(hits[b]) / nb - conf_sum[b] / nb);
  }
  return e;
}

AvuCounts avu_counts(const ScalarVolume& unc,
                     const InaccuracyDecomposition& decomp, double t) {
  check_paired_dims(unc.dims(), decomp.failures.dims, "avu_counts");
  if (t < 0.0) throw DomainError("avu_counts: threshold must be >= 0");
  AvuCounts c;
  for (std::size_t i = 0; i < unc.data().size(); ++i) {
    const bool certain = unc.data()[i] <= t;
    const bool accurate = decomp.failures.data[i] == 0;
    if (accurate)
      certain ? ++c.n_ac : ++c.n_au;
    else
      certain ? ++c.n_ic : ++c.n_iu;
  }
  return c;
}

double avu_metric(const AvuCounts& c) {
  if (c.total() == 0) throw DomainError("avu_metric: all counts zero");
  return static_cast<double>(c.n_ac + c.n_iu) / static_cast<double>(c.total());
}

CurveSeries avu_curve(const ScalarVolume& unc,
                      const InaccuracyDecomposition& decomp, double u_max,
                      std::int64_t steps) {
  check_curve_args(u_max, steps);
  CurveSeries s;
  s.thresholds = even_grid(0.0, u_max, steps);
  s.ys.reserve(steps);
  for (double t : s.thresholds)
    s.ys.push_back(avu_metric(avu_counts(unc, decomp, t)));
  s.auc = trapezoid(s.thresholds, s.ys) / u_max;
  return s;
}

CurveSeries unc_roc_curve(const ScalarVolume& unc,
                          const InaccuracyDecomposition& decomp, double u_max,
                          std::int64_t steps) {
  check_curve_args(u_max, steps);
  const std::int64_t failures = decomp.failures.count();
  const std::int64_t accurate =
      decomp.failures.dims.voxels() - failures;
  if (failures == 0)
    throw DomainError("unc_roc_curve: undefined TPR (no failure voxels)");
  if (accurate == 0)
    throw DomainError("unc_roc_curve: undefined FPR (no accurate voxels)");
  CurveSeries s;
  s.thresholds = even_grid(0.0, u_max, steps);
  std::vector<std::pair<double, double>> pts;  // (fpr, tpr)
  pts.reserve(steps + 2);
  pts.emplace_back(0.0, 0.0);
  pts.emplace_back(1.0, 1.0);
  for (double t : s.thresholds) {
    const AvuCounts c = avu_counts(unc, decomp, t);
    pts.emplace_back(
        static_cast<double>(c.n_au) / static_cast<double>(c.n_au + c.n_ac),
        static_cast<double>(c.n_iu) / static_cast<double>(c.n_iu + c.n_ic));
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  for (auto& [x, y] : pts) {
    s.xs.push_back(x);
    s.ys.push_back(y);
  }
  s.auc = trapezoid(s.xs, s.ys);
  return s;
}

CurveSeries unc_prc_curve(const ScalarVolume& unc,
                          const InaccuracyDecomposition& decomp, double u_max,
                          std::int64_t steps) {
  check_curve_args(u_max, steps);
  if (decomp.failures.count() == 0)
    throw DomainError("unc_prc_curve: no failure voxels");
  CurveSeries s;
  const auto grid = even_grid(0.0, u_max, steps);
  std::vector<std::pair<double, double>> pts;  // (recall, precision)
  for (double t : grid) {
    const AvuCounts c = avu_counts(unc, decomp, t);
    if (c.n_iu + c.n_au == 0) continue;  // no uncertain voxels left
    s.thresholds.push_back(t);
    pts.emplace_back(
        static_cast<double>(c.n_iu) / static_cast<double>(c.n_iu + c.n_ic),
        static_cast<double>(c.n_iu) / static_cast<double>(c.n_iu + c.n_au));
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  for (auto& [x, y] : pts) {
    s.xs.push_back(x);
    s.ys.push_back(y);
  }
  s.auc = trapezoid(s.xs, s.ys);
  return s;
}

double wilcoxon_signed_rank(const std::vector<double>& a,
                            const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ShapeError("wilcoxon: paired samples differ in length");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = b[i] - a[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw DomainError("wilcoxon: degenerate pairing");
  const std::size_t n = diffs.size();
  if (n < 5)
    throw DomainError("wilcoxon: need >= 5 non-zero differences, have " +
                      std::to_string(n));

  // Average ranks of |d|, handling ties.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::abs(diffs[i]) < std::abs(diffs[j]);
  });
  std::vector<double> rank(n);
  std::vector<std::size_t> tie_sizes;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n &&
           std::abs(diffs[order[j]]) == std::abs(diffs[order[i]]))
      ++j;
    const double avg = 0.5 * static_cast<double>(i + j - 1) + 1.0;
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    tie_sizes.push_back(j - i);
    i = j;
  }

  double w_plus = 0.0, w_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w_total += rank[i];
    if (diffs[i] > 0.0) w_plus += rank[i];
  }
  const double w_min = std::min(w_plus, w_total - w_plus);

  if (n <= 12) {
    // Exact: enumerate all sign assignments of the ranks.
    const std::uint64_t total = 1ULL << n;
    std::uint64_t at_most = 0;
    for (std::uint64_t m = 0; m < total; ++m) {
      double w = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (m & (1ULL << i)) w += rank[i];
      if (w <= w_min + 1e-9) ++at_most;
    }
    return std::min(1.0, 2.0 * static_cast<double>(at_most) /
                             static_cast<double>(total));
  }

  const double nn = static_cast<double>(n);
  double tie_term = 0.0;
  for (std::size_t t : tie_sizes) {
    const double td = static_cast<double>(t);
    tie_term += td * td * td - td;
  }
  const double mean_w = nn * (nn + 1.0) / 4.0;
  const double var_w = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double z = (w_min - mean_w) / std::sqrt(var_w);
  return std::min(1.0, 2.0 * (1.0 - normal_sf(z)));
}

std::size_t select_hyperparameter(
    const std::vector<CandidateMetrics>& candidates) {
  if (candidates.empty())
    throw DomainError("select_hyperparameter: empty candidate list");
  constexpr double kDropMargin = 0.10;  // "10.0 points" on the x1e-2 scale

  double best_dice = -1.0, best_ece = 2.0, best_avu = -1.0;
  for (const auto& c : candidates) {
    best_dice = std::max(best_dice, c.dice);
    best_ece = std::min(best_ece, c.ece);
    best_avu = std::max(best_avu, c.avu_auc);
  }
  std::vector<std::size_t> survivors;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    if (best_dice - c.dice > kDropMargin) continue;
    if (c.ece - best_ece > kDropMargin) continue;
    if (best_avu - c.avu_auc > kDropMargin) continue;
    survivors.push_back(i);
  }
  if (survivors.empty())  // all behind on something: fall back to full list
    for (std::size_t i = 0; i < candidates.size(); ++i) survivors.push_back(i);

  for (std::size_t i : survivors) {
    int wins = 0;
    auto best_on = [&](auto field, bool lower_is_better) {
      double best = lower_is_better ? 2.0 : -2.0;
      for (std::size_t j : survivors) {
        const double v = field(candidates[j]);
        best = lower_is_better ? std::min(best, v) : std::max(best, v);
      }
      return field(candidates[i]) == best;
    };
    wins += best_on([](const CandidateMetrics& c) { return c.dice; }, false);
    wins += best_on([](const CandidateMetrics& c) { return c.ece; }, true);
    wins += best_on([](const CandidateMetrics& c) { return c.avu_auc; }, false);
    wins += best_on([](const CandidateMetrics& c) { return c.roc_auc; }, false);
    wins += best_on([](const CandidateMetrics& c) { return c.prc_auc; }, false);
    if (wins >= 4) return i;
  }
  return survivors[(survivors.size() - 1) / 2];  // middlemost in sweep order
}

}  // namespace avuseg
