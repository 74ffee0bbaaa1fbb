#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Online class-incremental learning with peer distillation chains"};
  app.require_subcommand(1);

  ccldc::cli::RunOptions run_opt;
  std::string seeds, modes, out;
  auto* run = app.add_subcommand("run", "Train every configured mode and seed, write artifacts");
  run->add_option("--config", run_opt.config, "RunConfig JSON (defaults when omitted)");
  auto* seeds_opt = run->add_option("--seeds", seeds, "Comma-separated seeds, e.g. 1,2,3");
  auto* modes_opt = run->add_option("--mode", modes, "Training mode, or a comma-separated list");
  auto* out_opt = run->add_option("--out", out, "Artifact directory");
  run->add_option("--set", run_opt.overrides, "Config override key.path=value (repeatable)");
  run->add_flag("--quiet", run_opt.quiet, "Only report errors");

  std::string csv;
  auto* metrics = app.add_subcommand("metrics", "Metric report JSON for an accuracy-matrix CSV");
  metrics->add_option("csv", csv, "Accuracy-matrix CSV")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");

  ccldc::cli::GenDataOptions gen_opt;
  auto* gen = app.add_subcommand("gen-data", "Write the synthetic train/test sets as IDX files");
  gen->add_option("--config", gen_opt.config, "RunConfig JSON supplying data.synthetic");
  gen->add_option("--out", gen_opt.out, "Output directory")->capture_default_str();
  gen->add_option("--set", gen_opt.overrides, "Config override key.path=value (repeatable)");

  CLI11_PARSE(app, argc, argv);

  if (*run) {
    if (*seeds_opt) run_opt.seeds = seeds;
    if (*modes_opt) run_opt.modes = modes;
    if (*out_opt) run_opt.out = out;
    return ccldc::cli::run(run_opt, std::cout, std::cerr);
  }
  if (*metrics) return ccldc::cli::metrics(csv, std::cout, std::cerr);
  if (*gradcheck) return ccldc::cli::gradcheck(std::cout, std::cerr);
  if (*gen) return ccldc::cli::gen_data(gen_opt, std::cout, std::cerr);
  return ccldc::cli::kUsage;
}
