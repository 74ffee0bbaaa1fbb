#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ccldc::cli {

// Exit codes shared by all subcommands.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // run aborted, gradient check failed
inline constexpr int kUsage = 2;    // bad config, bad input file

struct RunOptions {
  std::string config;                    // empty: built-in defaults
  std::optional<std::string> seeds;      // "1,2,3"
  std::optional<std::string> modes;      // "ccl_dc,er_baseline"
  std::optional<std::string> out;        // artifact root; default see artifact_root()
  std::vector<std::string> overrides;    // "key.path=value"
  bool quiet = false;
};

struct GenDataOptions {
  std::string config;
  std::string out = ".";
  std::vector<std::string> overrides;
};

/// Artifact root: `out` when given, else $CCLDC_RUNS_DIR (default ./runs)
/// joined with <timestamp>-<modes>.
std::string artifact_root(const std::optional<std::string>& out, const std::string& modes);

int run(const RunOptions& opt, std::ostream& out, std::ostream& err);
int metrics(const std::string& csv_path, std::ostream& out, std::ostream& err);
int gradcheck(std::ostream& out, std::ostream& err);
int gen_data(const GenDataOptions& opt, std::ostream& out, std::ostream& err);

/// "1,2,3" -> {1, 2, 3}; throws ConfigError on malformed input.
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace ccldc::cli
