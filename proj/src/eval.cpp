#include "avuseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace avuseg {

double resolve_u_max(const EvalConfig& cfg, std::int64_t num_classes) {
  if (cfg.u_max != 0.0) {
    if (!(cfg.u_max > 0.0 && cfg.u_max <= 1.0))
      throw DomainError("eval: u_max must be in (0,1]");
    return cfg.u_max;
  }
  return num_classes == 6 ? 0.4 : 1.0;
}

namespace {

// Bounding box of gt/pred foreground plus margin, used by the optional
// cropped ECE.
struct Box {
  std::int64_t x0, x1, y0, y1, z0, z1;  // half-open
};

Box foreground_box(const LabelVolume& gt, const LabelVolume& pred,
                   std::int64_t margin) {
  const auto& d = gt.dims();
  Box b{d.x, 0, d.y, 0, d.z, 0};
  bool any = false;
  for (std::int64_t z = 0; z < d.z; ++z)
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x)
        if (gt.at(x, y, z) != 0 || pred.at(x, y, z) != 0) {
          any = true;
          b.x0 = std::min(b.x0, x);
          b.x1 = std::max(b.x1, x + 1);
          b.y0 = std::min(b.y0, y);
          b.y1 = std::max(b.y1, y + 1);
          b.z0 = std::min(b.z0, z);
          b.z1 = std::max(b.z1, z + 1);
        }
  if (!any) return {0, d.x, 0, d.y, 0, d.z};
  b.x0 = std::max<std::int64_t>(0, b.x0 - margin);
  b.y0 = std::max<std::int64_t>(0, b.y0 - margin);
  b.z0 = std::max<std::int64_t>(0, b.z0 - margin);
  b.x1 = std::min(d.x, b.x1 + margin);
  b.y1 = std::min(d.y, b.y1 + margin);
  b.z1 = std::min(d.z, b.z1 + margin);
  return b;
}

double cropped_ece(const ProbVolume& probs, const InaccuracyDecomposition& dec,
                   const LabelVolume& gt, const LabelVolume& pred,
                   std::int64_t bins) {
  const Box b = foreground_box(gt, pred, 4);
  const Dims3 cd{b.x1 - b.x0, b.y1 - b.y0, b.z1 - b.z0};
  const std::int64_t C = probs.num_classes();
  std::vector<double> pdata(cd.voxels() * C);
  BinaryMask fails{cd, std::vector<std::uint8_t>(cd.voxels())};
  std::int64_t i = 0;
  for (std::int64_t z = b.z0; z < b.z1; ++z)
    for (std::int64_t y = b.y0; y < b.y1; ++y)
      for (std::int64_t x = b.x0; x < b.x1; ++x, ++i) {
        for (std::int64_t c = 0; c < C; ++c)
          pdata[i * C + c] = probs.at(x, y, z, c);
        fails.data[i] = dec.failures.data[voxel_index(gt.dims(), x, y, z)];
      }
  InaccuracyDecomposition cropped;
  cropped.failures = std::move(fails);
  return ece(ProbVolume(cd, C, std::move(pdata)), cropped, bins);
}

MetricStats stats_of(const std::vector<double>& v) {
  MetricStats s;
  s.n = static_cast<std::int64_t>(v.size());
  if (v.empty()) return s;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  s.mean = m;
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    s.stddev = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

EvalSummary summarize(std::vector<ScanEval> scans) {
  EvalSummary out;
  std::vector<double> d, e, a, r, p;
  for (auto& s : scans) {
    d.push_back(s.dice);
    e.push_back(s.ece);
    a.push_back(s.avu_auc);
    if (s.roc_auc) r.push_back(*s.roc_auc);
    if (s.prc_auc) p.push_back(*s.prc_auc);
    if (!s.roc_auc) ++out.roc_excluded;
  }
  out.stats["dice"] = stats_of(d);
  out.stats["ece"] = stats_of(e);
  out.stats["avu_auc"] = stats_of(a);
  out.stats["roc_auc"] = stats_of(r);
  out.stats["prc_auc"] = stats_of(p);
  out.scans = std::move(scans);
  return out;
}

}  // namespace

ScanEval evaluate_scan(const std::string& id, const ProbVolume& probs,
                       const LabelVolume& gt, const EvalConfig& cfg) {
  ScanEval s;
  s.id = id;
  const LabelVolume pred = argmax_labels(probs);
  const InaccuracyDecomposition dec = decompose(pred, gt, cfg.kernel);
  const ScalarVolume unc = entropy_map(probs);
  const double u_max = resolve_u_max(cfg, probs.num_classes());

  s.dice = mean_foreground_dice(pred, gt);
  s.ece = cfg.crop_to_foreground ? cropped_ece(probs, dec, gt, pred, cfg.bins)
                                 : ece(probs, dec, cfg.bins);
  s.avu = avu_curve(unc, dec, u_max, cfg.steps);
  s.avu_auc = s.avu.auc;
  if (dec.failures.count() > 0 &&
      dec.failures.count() < dec.failures.dims.voxels()) {
    s.roc = unc_roc_curve(unc, dec, u_max, cfg.steps);
    s.roc_auc = s.roc.auc;
    s.prc = unc_prc_curve(unc, dec, u_max, cfg.steps);
    s.prc_auc = s.prc.auc;
  }
  return s;
}

ProbVolume predict(const SegModel& model, const ScalarVolume& image,
                   const EvalConfig& cfg) {
  if (cfg.predictor == "mc")
    return mc_predict(model, image, cfg.mc_samples, cfg.seed);
  if (cfg.predictor == "mean") {
    const Tensor probs = model.forward_probs(image_to_tensor(image), nullptr);
    return tensor_to_prob_volume(probs, image.dims());
  }
  if (cfg.predictor == "tta")
    return tta_predict(model, image, cfg.tta_reps, cfg.tta_sigma, cfg.tta_rate,
                       cfg.seed);
  throw DomainError("eval: unknown predictor '" + cfg.predictor + "'");
}

EvalSummary evaluate_model(const SegModel& model, const Dataset& ds,
                           Split split, const EvalConfig& cfg) {
  std::vector<ScanEval> scans;
  for (std::size_t i : ds.indices(split)) {
    const Scan& scan = ds.scans[i];
    EvalConfig scan_cfg = cfg;
    scan_cfg.seed = substream_seed(cfg.seed, i);
    scans.push_back(evaluate_scan(scan.id, predict(model, scan.image, scan_cfg),
                                  scan.annotation, cfg));
  }
  return summarize(std::move(scans));
}

EvalSummary evaluate_ensemble(const std::vector<SegModel>& members,
                              const Dataset& ds, Split split,
                              const EvalConfig& cfg) {
  std::vector<ScanEval> scans;
  for (std::size_t i : ds.indices(split)) {
    const Scan& scan = ds.scans[i];
    scans.push_back(evaluate_scan(scan.id, ensemble_predict(members, scan.image),
                                  scan.annotation, cfg));
  }
  return summarize(std::move(scans));
}

std::map<std::string, double> compare_summaries(const EvalSummary& a,
                                                const EvalSummary& b) {
  std::map<std::string, double> out;
  auto paired = [&](auto getter) {
    std::pair<std::vector<double>, std::vector<double>> p;
    for (const auto& sa : a.scans)
      for (const auto& sb : b.scans)
        if (sa.id == sb.id) {
          const auto va = getter(sa), vb = getter(sb);
          if (va && vb) {
            p.first.push_back(*va);
            p.second.push_back(*vb);
          }
        }
    return p;
  };
  auto add = [&](const std::string& name, auto getter) {
    const auto [va, vb] = paired(getter);
    try {
      out[name] = wilcoxon_signed_rank(va, vb);
    } catch (const DomainError&) {
      out[name] = std::numeric_limits<double>::quiet_NaN();
    }
  };
  add("dice", [](const ScanEval& s) { return std::optional<double>(s.dice); });
  add("ece", [](const ScanEval& s) { return std::optional<double>(s.ece); });
  add("avu_auc",
      [](const ScanEval& s) { return std::optional<double>(s.avu_auc); });
  add("roc_auc", [](const ScanEval& s) { return s.roc_auc; });
  add("prc_auc", [](const ScanEval& s) { return s.prc_auc; });
  return out;
}

}  // namespace avuseg
