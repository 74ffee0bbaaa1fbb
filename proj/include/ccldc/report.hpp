#pragma once

// On-disk artifacts. All values are fractions; only human_summary() renders
// percentages.
//
// Per seed, in <root>/<mode>/seed_<s>/:
//   accuracy_matrix.csv           primary matrix (model1, or ensemble in ensemble mode)
//   accuracy_matrix_{model1,model2,ensemble}.csv   written in "both" mode
//   metrics.json                  metric report of the primary matrix, plus
//                                 "ensemble" and "model2" reports in both mode
//   diagnostics.jsonl             one object per line: probe, entropy, ncm, counters
//   steps.jsonl                   step records (diagnostics.step_records)
//   abort.json                    the failing step when a run aborts
//
// <root>/summary.json: per mode, mean and sample standard deviation (n - 1
// denominator; null for a single seed) of AA, LA, RF and FM across seeds.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccldc/config.hpp"
#include "ccldc/metrics.hpp"
#include "ccldc/trainer.hpp"

namespace ccldc {

nlohmann::json metrics_to_json(const MetricReport& report);
nlohmann::json step_to_json(const StepRecord& record);
std::vector<nlohmann::json> diagnostics_lines(const ExperimentResult& result);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_seed_artifacts(const std::filesystem::path& dir, const RunConfig& cfg,
                          const ExperimentResult& result);

struct Stat {
  std::size_t n = 0;
  double mean = 0.0;
  std::optional<double> std;  // sample standard deviation, n >= 2
};

Stat mean_std(std::span<const double> values);

/// Headline numbers of one seed, taken from its metric reports.
struct SeedOutcome {
  std::uint64_t seed = 0;
  MetricReport primary;
  std::optional<double> model1_aa;
  std::optional<double> model2_aa;
  std::optional<double> ensemble_aa;
  std::optional<double> entropy;  // raw-image entropy of model1
};

SeedOutcome summarize_seed(const RunConfig& cfg, const ExperimentResult& result);

nlohmann::json summary_json(const std::map<std::string, std::vector<SeedOutcome>>& by_mode);
/// Plain-text table with fractions rendered as percentages.
std::string human_summary(const nlohmann::json& summary);

}  // namespace ccldc
