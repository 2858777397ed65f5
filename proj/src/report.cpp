#include "avuseg/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace avuseg {

double round6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return std::strtod(buf, nullptr);
}

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("report: cannot open " + tmp.string());
    f << content;
    if (!f) throw IoError("report: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string curve_csv(const CurveSeries& curve) {
  std::string out;
  if (curve.xs.empty()) {
    out = "threshold,value\n";
    for (std::size_t i = 0; i < curve.thresholds.size(); ++i)
      out += fmt6(curve.thresholds[i]) + "," + fmt6(curve.ys[i]) + "\n";
  } else {
    out = "threshold,x,y\n";
    for (std::size_t i = 0; i < curve.xs.size(); ++i) {
      const std::string t = i < curve.thresholds.size()
                                ? fmt6(curve.thresholds[i])
                                : std::string();
      out += t + "," + fmt6(curve.xs[i]) + "," + fmt6(curve.ys[i]) + "\n";
    }
  }
  return out;
}

nlohmann::json scan_eval_json(const ScanEval& s) {
  nlohmann::json j{{"id", s.id},
                   {"dice", round6(s.dice)},
                   {"ece", round6(s.ece)},
                   {"avu_auc", round6(s.avu_auc)}};
  j["roc_auc"] = s.roc_auc ? nlohmann::json(round6(*s.roc_auc))
                           : nlohmann::json(nullptr);
  j["prc_auc"] = s.prc_auc ? nlohmann::json(round6(*s.prc_auc))
                           : nlohmann::json(nullptr);
  return j;
}

nlohmann::json summary_json(const EvalSummary& s) {
  nlohmann::json stats;
  for (const auto& [name, st] : s.stats)
    stats[name] = {{"mean", round6(st.mean)},
                   {"stddev", round6(st.stddev)},
                   {"n", st.n}};
  nlohmann::json scans = nlohmann::json::array();
  for (const auto& sc : s.scans) scans.push_back(scan_eval_json(sc));
  return nlohmann::json{{"schema", kReportSchema},
                        {"stats", stats},
                        {"scans", scans},
                        {"roc_excluded", s.roc_excluded}};
}

void write_manifest(const RunManifest& m, const std::filesystem::path& path) {
  const nlohmann::json j{{"command", m.command},
                         {"config", m.config},
                         {"seed", m.seed},
                         {"version", kToolVersion},
                         {"inputs", m.inputs},
                         {"outputs", m.outputs},
                         {"wall_time_s", round6(m.wall_time_s)}};
  write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace avuseg
