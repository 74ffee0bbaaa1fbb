#include "ccldc/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "ccldc/errors.hpp"

namespace ccldc {

using nlohmann::json;

json metrics_to_json(const MetricReport& r) {
  json j;
  j["tasks"] = r.tasks;
  j["LA"] = r.la.mean;
  j["FM"] = r.fm ? json(r.fm->mean) : json(nullptr);
  j["RF"] = r.rf ? json(r.rf->mean) : json(nullptr);
  j["AA"] = r.aa;
  json per_task;
  per_task["l"] = r.la.per_task;
  per_task["fm"] = r.fm ? json(r.fm->per_task) : json::array();
  per_task["f"] = r.rf ? json(r.rf->per_task) : json::array();
  j["per_task"] = per_task;
  if (r.bound) {
    j["bound_slack"] = r.bound->aggregate;
    j["bound_holds"] = r.bound->holds;
    j["bound_min_cell_slack"] = r.bound->min_slack;
  } else {
    j["bound_slack"] = nullptr;
    j["bound_holds"] = nullptr;
    j["bound_min_cell_slack"] = nullptr;
  }
  if (!r.rf_error.empty()) j["rf_error"] = r.rf_error;
  return j;
}

json step_to_json(const StepRecord& r) {
  return {{"step", r.step},
          {"task", r.task + 1},
          {"stream", r.stream_size},
          {"memory", r.memory_size},
          {"losses", r.losses},
          {"wall_seconds", r.wall_seconds}};
}

std::vector<json> diagnostics_lines(const ExperimentResult& r) {
  std::vector<json> lines;
  for (const ProbePoint& p : r.probe) {
    lines.push_back({{"type", "loss_probe"},
                     {"task", p.task + 1},
                     {"step", p.step_in_task},
                     {"model1", p.model1},
                     {"model2", p.model2}});
  }
  const std::pair<const char*, const std::vector<double>*> tables[] = {
      {"model1", &r.entropy_model1}, {"model2", &r.entropy_model2}};
  for (const auto& [learner, values] : tables) {
    for (std::size_t s = 0; s < values->size(); ++s) {
      lines.push_back({{"type", "entropy"}, {"learner", learner}, {"stage", s}, {"value", (*values)[s]}});
    }
  }
  if (!r.entropy_ensemble_raw.empty()) {
    lines.push_back({{"type", "entropy"},
                     {"learner", "ensemble"},
                     {"stage", 0},
                     {"value", r.entropy_ensemble_raw.front()}});
  }
  if (r.ncm_model1) {
    lines.push_back({{"type", "ncm"}, {"model1", *r.ncm_model1}, {"model2", *r.ncm_model2}});
  } else if (!r.ncm_error.empty()) {
    lines.push_back({{"type", "ncm"}, {"error", r.ncm_error}});
  }
  json groups = json::array();
  for (const auto& g : r.schedule.groups) groups.push_back(g);
  lines.push_back({{"type", "counters"},
                   {"consumed", r.consumed},
                   {"train_size", r.train_size},
                   {"buffer_seen", r.buffer_seen},
                   {"task_classes", groups}});
  return lines;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

void write_seed_artifacts(const std::filesystem::path& dir, const RunConfig& cfg,
                          const ExperimentResult& r) {
  std::filesystem::create_directories(dir);
  write_matrix_csv(r.primary(cfg.eval_mode), dir / "accuracy_matrix.csv");
  json metrics = metrics_to_json(compute_metrics(r.primary(cfg.eval_mode)));
  metrics["matrix"] = cfg.eval_mode == EvalMode::ensemble ? "ensemble" : "model1";
  if (cfg.eval_mode == EvalMode::both) {
    write_matrix_csv(r.model1, dir / "accuracy_matrix_model1.csv");
    write_matrix_csv(r.model2, dir / "accuracy_matrix_model2.csv");
    write_matrix_csv(r.ensemble, dir / "accuracy_matrix_ensemble.csv");
    metrics["model2"] = metrics_to_json(compute_metrics(r.model2));
    metrics["ensemble"] = metrics_to_json(compute_metrics(r.ensemble));
  }
  write_json(dir / "metrics.json", metrics);
  std::ofstream diag(dir / "diagnostics.jsonl", std::ios::binary);
  if (!diag) throw Error("cannot open " + (dir / "diagnostics.jsonl").string() + " for writing");
  for (const json& line : diagnostics_lines(r)) diag << line.dump() << '\n';
}

Stat mean_std(std::span<const double> values) {
  Stat s;
  s.n = values.size();
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(s.n);
  if (s.n >= 2) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(s.n - 1));
  }
  return s;
}

SeedOutcome summarize_seed(const RunConfig& cfg, const ExperimentResult& r) {
  SeedOutcome o;
  o.seed = r.seed;
  o.primary = compute_metrics(r.primary(cfg.eval_mode));
  if (cfg.eval_mode == EvalMode::both) {
    o.model1_aa = average_accuracy(r.model1);
    o.model2_aa = average_accuracy(r.model2);
    o.ensemble_aa = average_accuracy(r.ensemble);
  }
  if (!r.entropy_model1.empty()) o.entropy = r.entropy_model1.front();
  return o;
}

namespace {

json stat_json(const std::vector<double>& values) {
  const Stat s = mean_std(values);
  if (s.n == 0) return nullptr;
  return {{"mean", s.mean}, {"std", s.std ? json(*s.std) : json(nullptr)}, {"n", s.n},
          {"per_seed", values}};
}

}  // namespace

json summary_json(const std::map<std::string, std::vector<SeedOutcome>>& by_mode) {
  json modes = json::object();
  for (const auto& [mode, outcomes] : by_mode) {
    std::vector<double> aa, la, rf, fm, m1, m2, ens, ent;
    json seeds = json::array();
    for (const SeedOutcome& o : outcomes) {
      seeds.push_back(o.seed);
      aa.push_back(o.primary.aa);
      la.push_back(o.primary.la.mean);
      if (o.primary.rf) rf.push_back(o.primary.rf->mean);
      if (o.primary.fm) fm.push_back(o.primary.fm->mean);
      if (o.model1_aa) m1.push_back(*o.model1_aa);
      if (o.model2_aa) m2.push_back(*o.model2_aa);
      if (o.ensemble_aa) ens.push_back(*o.ensemble_aa);
      if (o.entropy) ent.push_back(*o.entropy);
    }
    json m = {{"seeds", seeds},      {"AA", stat_json(aa)}, {"LA", stat_json(la)},
              {"RF", stat_json(rf)}, {"FM", stat_json(fm)}};
    if (!ens.empty()) {
      m["model1_AA"] = stat_json(m1);
      m["model2_AA"] = stat_json(m2);
      m["ensemble_AA"] = stat_json(ens);
    }
    if (!ent.empty()) m["entropy"] = stat_json(ent);
    modes[mode] = m;
  }
  return {{"std", "sample standard deviation (n - 1 denominator), null for one seed"},
          {"modes", modes}};
}

std::string human_summary(const json& summary) {
  std::string out;
  char buf[160];
  auto pct = [&](const json& stat) -> std::string {
    if (stat.is_null()) return "n/a";
    const double mean = stat["mean"].get<double>() * 100.0;
    if (stat["std"].is_null()) {
      std::snprintf(buf, sizeof buf, "%.2f%%", mean);
    } else {
      std::snprintf(buf, sizeof buf, "%.2f +- %.2f%%", mean, stat["std"].get<double>() * 100.0);
    }
    return buf;
  };
  for (const auto& [mode, m] : summary["modes"].items()) {
    out += mode + " (" + std::to_string(m["seeds"].size()) + " seeds)\n";
    for (const char* key : {"AA", "LA", "FM", "RF", "ensemble_AA"}) {
      if (!m.contains(key)) continue;
      std::snprintf(buf, sizeof buf, "  %-12s", key);
      out += buf;
      out += pct(m[key]) + "\n";
    }
  }
  return out;
}

}  // namespace ccldc
