#include "avuseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace avuseg {

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "ce") return LossKind::Ce;
  if (s == "avu") return LossKind::Avu;
  if (s == "focal") return LossKind::Focal;
  if (s == "ecp") return LossKind::Ecp;
  if (s == "ls") return LossKind::LabelSmoothing;
  if (s == "svls") return LossKind::Svls;
  if (s == "mbls") return LossKind::Mbls;
  throw DomainError("trainer: unknown loss '" + s + "'");
}

std::string loss_kind_to_string(LossKind k) {
  switch (k) {
    case LossKind::Ce: return "ce";
    case LossKind::Avu: return "avu";
    case LossKind::Focal: return "focal";
    case LossKind::Ecp: return "ecp";
    case LossKind::LabelSmoothing: return "ls";
    case LossKind::Svls: return "svls";
    case LossKind::Mbls: return "mbls";
  }
  throw DomainError("trainer: bad loss kind");
}

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>>& params,
                             double lr, double beta1, double beta2, double eps,
                             double clip_norm)
    : params_(&params),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      clip_norm_(clip_norm) {
  for (const auto& [name, t] : params) {
    m_.emplace_back(t.size(), 0.0);
    v_.emplace_back(t.size(), 0.0);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& [name, t] : *params_) t.zero_grad();
}

void AdamOptimizer::step() {
  ++t_;
  double sq = 0.0;
  for (const auto& [name, t] : *params_)
    for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm))
    throw DomainError("trainer: non-finite gradient norm at step " +
                      std::to_string(t_));
  const double scale =
      (clip_norm_ > 0.0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;

  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_->size(); ++p) {
    auto& t = (*params_)[p].second;
    const auto& g = t.grad();
    auto& vals = t.mutable_values();
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      vals[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

ClassWeights inverse_frequency_weights(const Dataset& ds,
                                       std::int64_t num_classes) {
  std::vector<double> counts(num_classes, 0.0);
  double total = 0.0;
  for (std::size_t i : ds.indices(Split::Train))
    for (std::uint8_t v : ds.scans[i].annotation.data()) {
      counts[v] += 1.0;
      total += 1.0;
    }
  ClassWeights w;
  w.w.resize(num_classes);
  for (std::int64_t c = 0; c < num_classes; ++c)
    w.w[c] = total / (static_cast<double>(num_classes) *
                      std::max(counts[c], 1.0));
  // Normalize to mean 1 so the loss scale is comparable across datasets.
  const double mean_w =
      std::accumulate(w.w.begin(), w.w.end(), 0.0) / w.w.size();
  for (auto& x : w.w) x /= mean_w;
  return w;
}

namespace {

struct SliceRef {
  std::size_t scan;
  std::int64_t z;
};

// (B,1,H,W) input and per-voxel labels for a batch of slices.
struct Batch {
  Tensor x;
  std::vector<std::uint8_t> labels;
};

Batch make_batch(const Dataset& ds, const std::vector<SliceRef>& slices) {
  const Dims3 d = ds.scans[slices[0].scan].image.dims();
  const std::int64_t B = static_cast<std::int64_t>(slices.size());
  std::vector<double> xv(B * d.y * d.x);
  std::vector<std::uint8_t> lv(B * d.y * d.x);
  for (std::int64_t b = 0; b < B; ++b) {
    const Scan& s = ds.scans[slices[b].scan];
    const std::int64_t z = slices[b].z;
    for (std::int64_t y = 0; y < d.y; ++y)
      for (std::int64_t x = 0; x < d.x; ++x) {
        const std::int64_t o = (b * d.y + y) * d.x + x;
        xv[o] = s.image.at(x, y, z);
        lv[o] = s.annotation.at(x, y, z);
      }
  }
  return {Tensor::constant({B, 1, d.y, d.x}, std::move(xv)), std::move(lv)};
}

struct StepLoss {
  Tensor total;
  double ce = 0.0, avu = 0.0;
};

StepLoss compute_loss(const TrainConfig& cfg, SegModel& model,
                      const Batch& batch, const ClassWeights& weights,
                      Rng* rng) {
  const auto& sh = batch.x.shape();
  const std::int64_t B = sh[0], H = sh[2], W = sh[3];
  const std::int64_t C = cfg.model.num_classes;
  const Tensor onehot = one_hot_tensor(batch.labels, B, C, H, W);

  StepLoss out;
  if (cfg.loss == LossKind::Mbls) {
    const Tensor logits = model.forward_logits(batch.x, rng);
    out.total = mbls_loss(logits, onehot, cfg.mbls_lambda, cfg.mbls_margin);
    out.ce = out.total.item();
  } else {
    const Tensor probs = model.forward_probs(batch.x, rng);
    switch (cfg.loss) {
      case LossKind::Ce:
        out.total = weighted_bce(probs, onehot, weights);
        out.ce = out.total.item();
        break;
      case LossKind::Avu: {
        const Tensor ce = weighted_bce(probs, onehot, weights);
        out.ce = ce.item();
        if (cfg.alpha == 0.0) {
          out.total = ce;
        } else {
          AvuLossConfig acfg;
          acfg.alpha = cfg.alpha;
          const Tensor avu = avu_loss(probs, onehot, acfg);
          out.avu = avu.item();
          out.total = add(ce, mul_scalar(avu, cfg.alpha));
        }
        break;
      }
      case LossKind::Focal:
        out.total = focal_loss(probs, onehot, cfg.focal_gamma);
        out.ce = out.total.item();
        break;
      case LossKind::Ecp:
        out.total = ecp_loss(probs, onehot, cfg.ecp_lambda);
        out.ce = out.total.item();
        break;
      case LossKind::LabelSmoothing:
        out.total = label_smoothing_loss(probs, onehot, cfg.smoothing);
        out.ce = out.total.item();
        break;
      case LossKind::Svls:
        out.total = svls_loss(probs, onehot, cfg.smoothing);
        out.ce = out.total.item();
        break;
      default:
        throw DomainError("trainer: unhandled loss kind");
    }
  }

  if (cfg.kl_weight > 0.0) {
    Tensor kl;
    const auto& params = model.parameters();
    for (std::size_t i = 0; i + 1 < params.size(); ++i) {
      const auto& name = params[i].first;
      if (name.size() > 4 && name.substr(name.size() - 3) == "_mu" &&
          params[i + 1].first == name.substr(0, name.size() - 3) + "_rho") {
        const Tensor term = kl_divergence(params[i].second,
                                          params[i + 1].second,
                                          cfg.model.prior_std);
        kl = kl.defined() ? add(kl, term) : term;
      }
    }
    if (kl.defined())
      out.total = add(out.total, mul_scalar(kl, cfg.kl_weight));
  }
  return out;
}

double validation_dice(const SegModel& model, const Dataset& ds,
                       const EvalConfig& eval, std::uint64_t seed) {
  const auto idx = ds.indices(Split::Val);
  if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (std::size_t i : idx) {
    EvalConfig cfg = eval;
    cfg.seed = substream_seed(seed, i);
    const ProbVolume probs = predict(model, ds.scans[i].image, cfg);
    acc += mean_foreground_dice(argmax_labels(probs), ds.scans[i].annotation);
  }
  return acc / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& ds) {
  if (cfg.epochs < 1) throw DomainError("trainer: epochs must be >= 1");
  if (cfg.batch_slices < 1)
    throw DomainError("trainer: batch_slices must be >= 1");
  if (ds.spec.num_classes != cfg.model.num_classes)
    throw ShapeError("trainer: dataset has " +
                     std::to_string(ds.spec.num_classes) +
                     " classes, model expects " +
                     std::to_string(cfg.model.num_classes));

  SegModelConfig mcfg = cfg.model;
  if (mcfg.init_seed == 0) mcfg.init_seed = substream_seed(cfg.seed, 0x11);
  TrainResult result{SegModel(mcfg)};
  SegModel& model = result.model;

  ClassWeights weights;
  weights.w = cfg.class_weights;
  if (weights.w.empty())
    weights = inverse_frequency_weights(ds, cfg.model.num_classes);
  if (static_cast<std::int64_t>(weights.w.size()) != cfg.model.num_classes)
    throw ShapeError("trainer: expected one class weight per class");

  std::vector<SliceRef> slices;
  for (std::size_t i : ds.indices(Split::Train))
    for (std::int64_t z = 0; z < ds.scans[i].image.dims().z; ++z)
      slices.push_back({i, z});
  if (slices.empty()) throw DomainError("trainer: empty train split");

  AdamOptimizer opt(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2,
                    cfg.adam_eps, cfg.clip_norm);
  Rng sample_rng(substream_seed(cfg.seed, 0x22));
  const bool stochastic = cfg.model.variant != Variant::Det;

  std::ofstream log;
  if (!cfg.log_csv.empty()) {
    log.open(cfg.log_csv);
    if (!log) throw IoError("trainer: cannot open log " + cfg.log_csv.string());
    log << "epoch,ce,avu,total,val_dice\n";
  }

  std::vector<std::vector<double>> best_params;
  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(substream_seed(cfg.seed, 0x1000 + epoch));
    std::shuffle(slices.begin(), slices.end(), shuffle_rng);

    EpochStats st;
    st.epoch = epoch;
    std::int64_t steps = 0;
    for (std::size_t off = 0; off < slices.size();
         off += static_cast<std::size_t>(cfg.batch_slices)) {
      const std::size_t end =
          std::min(off + static_cast<std::size_t>(cfg.batch_slices),
                   slices.size());
      const Batch batch = make_batch(
          ds, std::vector<SliceRef>(slices.begin() + off, slices.begin() + end));

      opt.zero_grad();
      const StepLoss loss = compute_loss(cfg, model, batch, weights,
                                         stochastic ? &sample_rng : nullptr);
      const double total = loss.total.item();
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "trainer: non-finite loss " << total << " at epoch " << epoch
            << " step " << steps << " (ce=" << loss.ce << ", avu=" << loss.avu
            << ")";
        throw DomainError(msg.str());
      }
      backward(loss.total);
      opt.step();

      st.ce += loss.ce;
      st.avu += loss.avu;
      st.total += total;
      ++steps;
    }
    st.ce /= steps;
    st.avu /= steps;
    st.total /= steps;

    if (epoch % cfg.val_every == 0 || epoch == cfg.epochs) {
      st.val_dice = validation_dice(model, ds, cfg.eval,
                                    substream_seed(cfg.seed, 0x33));
      if (result.best_epoch < 0 || st.val_dice > result.best_val_dice) {
        result.best_val_dice = st.val_dice;
        result.best_epoch = epoch;
        best_params.clear();
        for (const auto& [name, t] : model.parameters())
          best_params.push_back(t.values());
        if (!cfg.checkpoint.empty()) model.save(cfg.checkpoint);
      }
    }

    if (log)
      log << st.epoch << ',' << st.ce << ',' << st.avu << ',' << st.total
          << ',' << st.val_dice << '\n';
    result.history.push_back(st);
  }

  // Leave the returned model at its best-validation state.
  if (!best_params.empty()) {
    auto& params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      params[i].second.mutable_values() = best_params[i];
  }
  return result;
}

SweepResult sweep_alpha(const TrainConfig& base, const Dataset& ds,
                        const std::vector<double>& alphas) {
  if (alphas.empty()) throw DomainError("trainer: empty alpha sweep");
  SweepResult out;
  out.alphas = alphas;
  for (double a : alphas) {
    TrainConfig cfg = base;
    cfg.loss = LossKind::Avu;
    cfg.alpha = a;
    if (!base.checkpoint.empty()) {
      std::ostringstream name;
      name << base.checkpoint.stem().string() << "_alpha"
           << static_cast<long long>(a)
           << base.checkpoint.extension().string();
      cfg.checkpoint = base.checkpoint.parent_path() / name.str();
    }
    if (!base.log_csv.empty()) {
      std::ostringstream name;
      name << base.log_csv.stem().string() << "_alpha"
           << static_cast<long long>(a) << base.log_csv.extension().string();
      cfg.log_csv = base.log_csv.parent_path() / name.str();
    }
    out.runs.push_back(train(cfg, ds));

    const EvalSummary val =
        evaluate_model(out.runs.back().model, ds, Split::Val, base.eval);
    CandidateMetrics cm;
    {
      std::ostringstream id;
      id << "avu-alpha-" << a;
      cm.id = id.str();
    }
    cm.dice = val.stats.at("dice").mean;
    cm.ece = val.stats.at("ece").mean;
    cm.avu_auc = val.stats.at("avu_auc").mean;
    cm.roc_auc = val.stats.at("roc_auc").mean;
    cm.prc_auc = val.stats.at("prc_auc").mean;
    out.candidates.push_back(cm);
  }
  out.selected = select_hyperparameter(out.candidates);
  return out;
}

}  // namespace avuseg
