#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "ccldc/config.hpp"
#include "ccldc/errors.hpp"
#include "ccldc/gradcheck.hpp"
#include "ccldc/metrics.hpp"
#include "ccldc/report.hpp"
#include "ccldc/trainer.hpp"

namespace ccldc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
    }
    seeds.push_back(std::stoull(item));
  }
  if (seeds.empty()) throw ConfigError("--seeds: empty seed list");
  return seeds;
}

std::string artifact_root(const std::optional<std::string>& out, const std::string& modes) {
  if (out) return *out;
  const char* env = std::getenv("CCLDC_RUNS_DIR");
  const fs::path base = env && *env ? fs::path(env) : fs::path("runs");
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&now));
  return (base / (std::string(stamp) + "-" + modes)).string();
}

namespace {

json load_config_json(const std::string& path) {
  if (path.empty()) return config_to_json(RunConfig{});
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? sep : "") + items[i];
  return out;
}

}  // namespace

int run(const RunOptions& opt, std::ostream& out, std::ostream& err) {
  RunConfig base;
  std::vector<TrainMode> modes;
  try {
    json j = load_config_json(opt.config);
    for (const std::string& o : opt.overrides) apply_override(j, o);
    base = config_from_json(j);
    if (opt.seeds) base.seeds = parse_seed_list(*opt.seeds);
    if (opt.modes) {
      for (const std::string& m : split_list(*opt.modes)) modes.push_back(train_mode_from_string(m));
      if (modes.empty()) throw ConfigError("--mode: empty mode list");
    } else {
      modes.push_back(base.mode);
    }
    for (TrainMode m : modes) {
      RunConfig cfg = base;
      cfg.mode = m;
      cfg.validate();
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  std::vector<std::string> mode_names;
  for (TrainMode m : modes) mode_names.emplace_back(to_string(m));
  const fs::path root = artifact_root(opt.out, join(mode_names, "+"));

  LabeledSplit data;
  try {
    data = load_data(base);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  std::map<std::string, std::vector<SeedOutcome>> outcomes;
  try {
    fs::create_directories(root);
    json resolved = config_to_json(base);
    resolved["modes"] = mode_names;
    write_json(root / "config.json", resolved);
    for (TrainMode m : modes) {
      RunConfig cfg = base;
      cfg.mode = m;
      for (std::uint64_t seed : cfg.seeds) {
        const fs::path dir = root / std::string(to_string(m)) / ("seed_" + std::to_string(seed));
        fs::create_directories(dir);
        std::ofstream steps;
        if (cfg.diagnostics.step_records) steps.open(dir / "steps.jsonl", std::ios::binary);
        StepCallback on_step;
        if (steps.is_open()) {
          on_step = [&steps](const StepRecord& r) { steps << step_to_json(r).dump() << '\n'; };
        }
        ExperimentResult result;
        try {
          result = run_experiment(cfg, data, seed, on_step);
        } catch (const NonFiniteLossError& e) {
          steps.flush();
          write_json(dir / "abort.json", {{"error", e.what()}, {"step", step_to_json(e.record())}});
          err << "error: " << to_string(m) << " seed " << seed << ": " << e.what() << '\n';
          err << "partial artifacts kept in " << root.string() << '\n';
          return kFailure;
        }
        write_seed_artifacts(dir, cfg, result);
        outcomes[std::string(to_string(m))].push_back(summarize_seed(cfg, result));
        if (!opt.quiet) {
          const auto& o = outcomes[std::string(to_string(m))].back();
          char line[128];
          std::snprintf(line, sizeof line, "%s seed %llu: AA %.2f%%  LA %.2f%%\n",
                        std::string(to_string(m)).c_str(), static_cast<unsigned long long>(seed),
                        o.primary.aa * 100.0, o.primary.la.mean * 100.0);
          out << line;
        }
      }
    }
    const json summary = summary_json(outcomes);
    write_json(root / "summary.json", summary);
    if (!opt.quiet) out << human_summary(summary) << "artifacts: " << root.string() << '\n';
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\npartial artifacts kept in " << root.string() << '\n';
    return kFailure;
  }
  return kOk;
}

int metrics(const std::string& csv_path, std::ostream& out, std::ostream& err) {
  try {
    const AccuracyMatrix a = read_matrix_csv(csv_path);
    out << metrics_to_json(compute_metrics(a)).dump(2) << '\n';
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

int gradcheck(std::ostream& out, std::ostream& err) {
  const GradCheckReport report = run_gradcheck(builtin_grad_cases());
  char line[256];
  for (const GradCaseResult& r : report.cases) {
    std::snprintf(line, sizeof line, "%-4s %-34s instances=%zu max_rel_err=%.2e teacher_grad=%.1e",
                  r.passed ? "PASS" : "FAIL", r.name.c_str(), r.instances, r.max_error,
                  r.max_teacher_grad);
    out << line;
    if (!r.passed) out << "  " << r.message;
    out << '\n';
  }
  if (!report.all_passed()) {
    err << "gradient check failed\n";
    return kFailure;
  }
  return kOk;
}

int gen_data(const GenDataOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    json j = load_config_json(opt.config);
    for (const std::string& o : opt.overrides) apply_override(j, o);
    const RunConfig cfg = config_from_json(j);
    const LabeledSplit data = gen_synthetic(cfg.synthetic);
    const fs::path dir = opt.out;
    fs::create_directories(dir);
    write_idx(data.train, dir / "train-images.idx", dir / "train-labels.idx");
    write_idx(data.test, dir / "test-images.idx", dir / "test-labels.idx");
    out << "wrote " << data.train.size() << " train and " << data.test.size()
        << " test examples to " << dir.string() << '\n';
    return kOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace ccldc::cli
