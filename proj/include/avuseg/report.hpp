#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "avuseg/eval.hpp"

// Report serialization: fixed-precision JSON reports, curve CSVs and the
// per-command run manifest. All files are written atomically (temp +
// rename) so reruns can be compared byte-for-byte.

namespace avuseg {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kReportSchema = "avuseg-report-v1";

// Round to 6 decimals; all numeric report fields go through this.
double round6(double v);

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content);

// threshold,value rows for threshold curves; threshold,x,y when the series
// carries explicit x coordinates (ROC/PRC).
std::string curve_csv(const CurveSeries& curve);

nlohmann::json scan_eval_json(const ScanEval& s);
nlohmann::json summary_json(const EvalSummary& s);

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs, outputs;
  double wall_time_s = 0.0;
};

void write_manifest(const RunManifest& m, const std::filesystem::path& path);

}  // namespace avuseg
