#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <omp.h>

#include "avuseg/eval.hpp"
#include "avuseg/heatmap.hpp"
#include "avuseg/report.hpp"
#include "avuseg/trainer.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Bad config/flag values exit with 2; runtime failures with 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot open config file " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& what) {
  for (const auto& [key, value] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw UsageError(what + ": unknown field '" + key + "'");
}

template <typename T>
void read_field(const json& j, const char* name, T& out) {
  if (!j.contains(name)) return;
  try {
    out = j.at(name).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("field '") + name + "' has the wrong type");
  }
}

avuseg::DatasetSpec parse_dataset_spec(const json& j) {
  reject_unknown_keys(j,
                      {"num_scans", "size", "slices", "num_classes", "jitter",
                       "texture_noise", "intensity_shift", "shape_scale",
                       "seed", "train", "val", "test"},
                      "dataset spec");
  avuseg::DatasetSpec s;
  read_field(j, "num_scans", s.num_scans);
  read_field(j, "size", s.size);
  read_field(j, "slices", s.slices);
  read_field(j, "num_classes", s.num_classes);
  read_field(j, "jitter", s.jitter);
  read_field(j, "texture_noise", s.texture_noise);
  read_field(j, "intensity_shift", s.intensity_shift);
  read_field(j, "shape_scale", s.shape_scale);
  read_field(j, "seed", s.seed);
  read_field(j, "train", s.train);
  read_field(j, "val", s.val);
  read_field(j, "test", s.test);
  return s;
}

avuseg::TrainConfig parse_train_config(const json& j) {
  reject_unknown_keys(
      j, {"variant", "num_classes", "c1", "c2", "loss", "alpha", "focal_gamma",
          "ecp_lambda", "smoothing", "mbls_lambda", "mbls_margin",
          "class_weights", "kl_weight", "epochs", "batch_slices", "lr",
          "beta1", "beta2", "adam_eps", "clip_norm", "seed", "val_every",
          "mc_samples", "predictor"},
      "train config");
  avuseg::TrainConfig c;
  std::string variant = "det", loss = "ce";
  read_field(j, "variant", variant);
  read_field(j, "loss", loss);
  try {
    c.model.variant = avuseg::variant_from_string(variant);
    c.loss = avuseg::loss_kind_from_string(loss);
  } catch (const avuseg::DomainError& e) {
    throw UsageError(e.what());
  }
  read_field(j, "num_classes", c.model.num_classes);
  read_field(j, "c1", c.model.c1);
  read_field(j, "c2", c.model.c2);
  read_field(j, "alpha", c.alpha);
  read_field(j, "focal_gamma", c.focal_gamma);
  read_field(j, "ecp_lambda", c.ecp_lambda);
  read_field(j, "smoothing", c.smoothing);
  read_field(j, "mbls_lambda", c.mbls_lambda);
  read_field(j, "mbls_margin", c.mbls_margin);
  read_field(j, "class_weights", c.class_weights);
  read_field(j, "kl_weight", c.kl_weight);
  read_field(j, "epochs", c.epochs);
  read_field(j, "batch_slices", c.batch_slices);
  read_field(j, "lr", c.lr);
  read_field(j, "beta1", c.beta1);
  read_field(j, "beta2", c.beta2);
  read_field(j, "adam_eps", c.adam_eps);
  read_field(j, "clip_norm", c.clip_norm);
  read_field(j, "seed", c.seed);
  read_field(j, "val_every", c.val_every);
  read_field(j, "mc_samples", c.eval.mc_samples);
  read_field(j, "predictor", c.eval.predictor);
  if (c.epochs < 1) throw UsageError("field 'epochs' must be >= 1");
  if (!(c.lr >= 0.0)) throw UsageError("field 'lr' must be >= 0");
  return c;
}

struct Timer {
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
  }
};

void apply_thread_env() {
  if (const char* env = std::getenv("AVUSEG_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
}

int cmd_gen(const fs::path& spec_path, const fs::path& out_dir) {
  Timer timer;
  const json spec_json = load_json(spec_path);
  const avuseg::DatasetSpec spec = parse_dataset_spec(spec_json);
  avuseg::Dataset ds;
  try {
    ds = avuseg::generate(spec);
  } catch (const avuseg::DomainError& e) {
    throw UsageError(e.what());
  } catch (const avuseg::ShapeError& e) {
    throw UsageError(e.what());
  }
  fs::create_directories(out_dir);
  avuseg::write_dataset(ds, out_dir);

  avuseg::RunManifest m;
  m.command = "gen";
  m.config = spec_json;
  m.seed = spec.seed;
  m.inputs = {spec_path.string()};
  m.outputs = {(out_dir / "manifest.json").string()};
  m.wall_time_s = timer.seconds();
  avuseg::write_manifest(m, out_dir / "run_manifest.json");
  std::cout << "gen: wrote " << ds.scans.size() << " scans to " << out_dir
            << "\n";
  return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& data_dir,
              const fs::path& out_dir) {
  Timer timer;
  const json config_json = load_json(config_path);
  avuseg::TrainConfig cfg = parse_train_config(config_json);
  const avuseg::Dataset ds = avuseg::read_dataset(data_dir);

  fs::create_directories(out_dir);
  cfg.log_csv = out_dir / "train_log.csv";
  cfg.checkpoint = out_dir / "checkpoint.ueckpt";
  const avuseg::TrainResult result = avuseg::train(cfg, ds);

  avuseg::RunManifest m;
  m.command = "train";
  m.config = config_json;
  m.seed = cfg.seed;
  m.inputs = {config_path.string(), data_dir.string()};
  m.outputs = {cfg.checkpoint.string(), cfg.log_csv.string()};
  m.wall_time_s = timer.seconds();
  avuseg::write_manifest(m, out_dir / "run_manifest.json");
  std::cout << "train: best val dice " << avuseg::round6(result.best_val_dice)
            << " at epoch " << result.best_epoch << "\n";
  return 0;
}

std::string write_curves(const avuseg::EvalSummary& summary,
                                   const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& scan : summary.scans) {
    avuseg::write_text_atomic(dir / (scan.id + "_avu.csv"),
                              avuseg::curve_csv(scan.avu));
    if (scan.roc_auc)
      avuseg::write_text_atomic(dir / (scan.id + "_roc.csv"),
                                avuseg::curve_csv(scan.roc));
    if (scan.prc_auc)
      avuseg::write_text_atomic(dir / (scan.id + "_prc.csv"),
                                avuseg::curve_csv(scan.prc));
  }
  return dir.string();
}

int cmd_eval(const std::vector<fs::path>& checkpoints, const fs::path& data_dir,
             const fs::path& out_dir, const avuseg::EvalConfig& ecfg,
             const std::string& split_name) {
  Timer timer;
  avuseg::Split split;
  if (split_name == "train") split = avuseg::Split::Train;
  else if (split_name == "val") split = avuseg::Split::Val;
  else if (split_name == "test") split = avuseg::Split::Test;
  else throw UsageError("unknown split '" + split_name + "'");

  const avuseg::Dataset ds = avuseg::read_dataset(data_dir);
  fs::create_directories(out_dir);

  json report;
  report["schema"] = avuseg::kReportSchema;
  std::vector<avuseg::EvalSummary> summaries;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const avuseg::SegModel model = avuseg::SegModel::load(checkpoints[i]);
    if (model.config().num_classes != ds.spec.num_classes)
      throw UsageError("checkpoint " + checkpoints[i].string() + " has " +
                       std::to_string(model.config().num_classes) +
                       " classes, dataset has " +
                       std::to_string(ds.spec.num_classes));
    summaries.push_back(avuseg::evaluate_model(model, ds, split, ecfg));
    const std::string tag = checkpoints.size() == 1
                                ? std::string("model")
                                : "model" + std::to_string(i + 1);
    report[tag] = avuseg::summary_json(summaries.back());
    write_curves(summaries.back(), out_dir / ("curves_" + tag));
  }

  if (summaries.size() == 2) {
    const auto pvals = avuseg::compare_summaries(summaries[0], summaries[1]);
    json cmp;
    for (const auto& [metric, p] : pvals) {
      if (std::isnan(p)) {
        cmp[metric] = {{"p_value", nullptr},
                       {"note", "degenerate pairing (no nonzero differences)"}};
      } else {
        cmp[metric] = {{"p_value", avuseg::round6(p)},
                       {"significant", p <= 0.05}};
      }
    }
    report["wilcoxon"] = cmp;
  }

  avuseg::write_text_atomic(out_dir / "report.json", report.dump(2) + "\n");

  avuseg::RunManifest m;
  m.command = "eval";
  m.config = {{"split", split_name},
              {"u_max", ecfg.u_max},
              {"steps", ecfg.steps},
              {"bins", ecfg.bins},
              {"mc_samples", ecfg.mc_samples},
              {"predictor", ecfg.predictor}};
  m.seed = ecfg.seed;
  for (const auto& c : checkpoints) m.inputs.push_back(c.string());
  m.inputs.push_back(data_dir.string());
  m.outputs = {(out_dir / "report.json").string()};
  m.wall_time_s = timer.seconds();
  avuseg::write_manifest(m, out_dir / "run_manifest.json");
  std::cout << "eval: wrote " << (out_dir / "report.json") << "\n";
  return 0;
}

int cmd_heatmap(const fs::path& checkpoint, const fs::path& data_dir,
                const std::string& scan_id, std::int64_t z,
                const fs::path& out_png, const avuseg::EvalConfig& ecfg) {
  Timer timer;
  const avuseg::SegModel model = avuseg::SegModel::load(checkpoint);
  const avuseg::Dataset ds = avuseg::read_dataset(data_dir);
  const avuseg::Scan* scan = nullptr;
  for (const auto& s : ds.scans)
    if (s.id == scan_id) scan = &s;
  if (!scan) throw UsageError("scan '" + scan_id + "' not found in dataset");

  const avuseg::ProbVolume probs = avuseg::predict(model, scan->image, ecfg);
  const avuseg::LabelVolume pred = avuseg::argmax_labels(probs);
  const avuseg::InaccuracyDecomposition dec =
      avuseg::decompose(pred, scan->annotation, ecfg.kernel);
  const avuseg::ScalarVolume unc = avuseg::entropy_map(probs);
  const double u_max = avuseg::resolve_u_max(ecfg, probs.num_classes());

  const avuseg::Image8 img = avuseg::render_heatmap(
      scan->image, unc, scan->annotation, pred, dec, z, u_max);
  if (!out_png.parent_path().empty())
    fs::create_directories(out_png.parent_path());
  avuseg::write_png(img, out_png);

  avuseg::RunManifest m;
  m.command = "heatmap";
  m.config = {{"scan", scan_id}, {"slice", z}, {"u_max", u_max}};
  m.seed = ecfg.seed;
  m.inputs = {checkpoint.string(), data_dir.string()};
  m.outputs = {out_png.string()};
  m.wall_time_s = timer.seconds();
  avuseg::write_manifest(m, out_png.string() + ".manifest.json");
  std::cout << "heatmap: wrote " << out_png << "\n";
  return 0;
}

int cmd_sweep(const fs::path& config_path, const fs::path& data_dir,
              const fs::path& out_dir, std::vector<double> alphas) {
  Timer timer;
  if (alphas.empty()) alphas = {10.0, 100.0, 1000.0};
  const json config_json = load_json(config_path);
  avuseg::TrainConfig cfg = parse_train_config(config_json);
  const avuseg::Dataset ds = avuseg::read_dataset(data_dir);

  fs::create_directories(out_dir);
  cfg.checkpoint = out_dir / "checkpoint.ueckpt";
  cfg.log_csv = out_dir / "train_log.csv";
  const avuseg::SweepResult sweep = avuseg::sweep_alpha(cfg, ds, alphas);

  std::string table = "alpha,dice,ece,avu_auc,roc_auc,prc_auc,selected\n";
  json rows = json::array();
  for (std::size_t i = 0; i < sweep.candidates.size(); ++i) {
    const auto& c = sweep.candidates[i];
    char buf[256];
    std::snprintf(buf, sizeof buf, "%g,%.6f,%.6f,%.6f,%.6f,%.6f,%d\n",
                  sweep.alphas[i], c.dice, c.ece, c.avu_auc, c.roc_auc,
                  c.prc_auc, i == sweep.selected ? 1 : 0);
    table += buf;
    rows.push_back({{"alpha", sweep.alphas[i]},
                    {"dice", avuseg::round6(c.dice)},
                    {"ece", avuseg::round6(c.ece)},
                    {"avu_auc", avuseg::round6(c.avu_auc)},
                    {"roc_auc", avuseg::round6(c.roc_auc)},
                    {"prc_auc", avuseg::round6(c.prc_auc)},
                    {"selected", i == sweep.selected}});
  }
  avuseg::write_text_atomic(out_dir / "sweep.csv", table);
  const json report = {{"schema", avuseg::kReportSchema},
                       {"candidates", rows},
                       {"selected_alpha", sweep.alphas[sweep.selected]}};
  avuseg::write_text_atomic(out_dir / "sweep.json", report.dump(2) + "\n");

  avuseg::RunManifest m;
  m.command = "sweep";
  m.config = config_json;
  m.config["alphas"] = alphas;
  m.seed = cfg.seed;
  m.inputs = {config_path.string(), data_dir.string()};
  m.outputs = {(out_dir / "sweep.csv").string(),
               (out_dir / "sweep.json").string()};
  m.wall_time_s = timer.seconds();
  avuseg::write_manifest(m, out_dir / "run_manifest.json");
  std::cout << "sweep: selected alpha " << sweep.alphas[sweep.selected]
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();

  CLI::App app{"Bayesian segmentation with the accuracy-vs-uncertainty loss"};
  app.require_subcommand(1);
  app.set_version_flag("--version", avuseg::kToolVersion);

  std::string spec_path, config_path, data_dir, out_dir, scan_id, out_png;
  std::string split = "test";
  std::vector<std::string> checkpoints;
  std::vector<double> alphas;
  std::int64_t slice_z = 0;
  avuseg::EvalConfig ecfg;

  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "Dataset spec JSON")->required();
  gen->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config_path, "Train config JSON")->required();
  train->add_option("--data", data_dir, "Dataset directory")->required();
  train->add_option("--out", out_dir, "Output directory")->required();

  auto add_eval_flags = [&](CLI::App* cmd) {
    cmd->add_option("--u-max", ecfg.u_max,
                    "Uncertainty range (0 = preset from class count)");
    cmd->add_option("--steps", ecfg.steps, "Threshold grid size");
    cmd->add_option("--bins", ecfg.bins, "ECE bins");
    cmd->add_option("--mc-samples", ecfg.mc_samples, "MC forward passes");
    cmd->add_option("--predictor", ecfg.predictor, "mc | mean | tta");
    cmd->add_option("--seed", ecfg.seed, "Sampling seed");
  };

  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints");
  eval->add_option("--checkpoint", checkpoints, "Checkpoint file (1 or 2)")
      ->required()
      ->expected(1, 2);
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--out", out_dir, "Output directory")->required();
  eval->add_option("--split", split, "train | val | test");
  add_eval_flags(eval);

  auto* heatmap = app.add_subcommand("heatmap", "Render a slice heatmap");
  heatmap->add_option("--checkpoint", checkpoints, "Checkpoint file")
      ->required()
      ->expected(1);
  heatmap->add_option("--data", data_dir, "Dataset directory")->required();
  heatmap->add_option("--scan", scan_id, "Scan id")->required();
  heatmap->add_option("--slice", slice_z, "Slice index");
  heatmap->add_option("--out", out_png, "Output PNG path")->required();
  add_eval_flags(heatmap);

  auto* sweep = app.add_subcommand("sweep", "Alpha sweep with selection");
  sweep->add_option("--config", config_path, "Train config JSON")->required();
  sweep->add_option("--data", data_dir, "Dataset directory")->required();
  sweep->add_option("--out", out_dir, "Output directory")->required();
  sweep->add_option("--alpha", alphas, "Alpha values (default 10 100 1000)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(spec_path, out_dir);
    if (train->parsed()) return cmd_train(config_path, data_dir, out_dir);
    if (eval->parsed()) {
      std::vector<fs::path> cps(checkpoints.begin(), checkpoints.end());
      return cmd_eval(cps, data_dir, out_dir, ecfg, split);
    }
    if (heatmap->parsed())
      return cmd_heatmap(checkpoints.at(0), data_dir, scan_id, slice_z,
                         out_png, ecfg);
    if (sweep->parsed()) return cmd_sweep(config_path, data_dir, out_dir, alphas);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
