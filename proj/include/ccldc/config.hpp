#pragma once

// Full experiment description and its JSON form.
//
// Schema (every key optional, defaults shown):
//   {
//     "data": {"source": "synthetic",
//              "synthetic": {"classes": 10, "train_per_class": 500, "test_per_class": 100,
//                            "channels": 1, "height": 12, "width": 12, "noise": 0.15,
//                            "grid": 4, "seed": 0},
//              "idx": {"train_images": "", "train_labels": "",
//                      "test_images": "", "test_labels": ""}},
//     "tasks": 5, "classes_per_task": 2,
//     "memory_size": 200, "stream_batch": 10, "memory_batch": 64,
//     "mode": "ccl_dc", "scheme": "hard_to_easy", "kl_direction": "teacher_student",
//     "loss": {"lambda1": 0.5, "lambda2": 2.0, "tau": 1.0},
//     "chain": {"stages": 3, "n_ops": 3, "magnitude": 15, "ops": [...all...],
//               "crop_prob": 0.5, "pad": 4, "flip_prob": 0.5},
//     "augmentation": "partial",
//     "model": {"hidden": [128, 64], "input_offset": 0.5, "input_gain": 2.0},
//     "optimizer": {"kind": "sgd", "lr": 0.05, "momentum": 0, "weight_decay": 0,
//                   "beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
//     "seeds": [0],
//     "model_seeds": null,
//     "eval_mode": "both",
//     "diagnostics": {"loss_probe": false, "probe_every": 10, "entropy": true,
//                     "ncm": true, "ncm_reference": "buffer", "step_records": false}
//   }
//
// model_seeds, when given as [s1, s2], fixes the two learners' initialization
// seeds instead of deriving them from the run seed.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ccldc/augment.hpp"
#include "ccldc/data.hpp"
#include "ccldc/losses.hpp"
#include "ccldc/nn.hpp"

namespace ccldc {

enum class TrainMode { er_baseline, er_untrained_distill, er_multiview, ccl_only, ccl_dc, sdc };
enum class EvalMode { independent, ensemble, both };
enum class NcmReference { buffer, train };

std::string_view to_string(TrainMode m);
TrainMode train_mode_from_string(std::string_view name);
std::vector<TrainMode> all_train_modes();
std::string_view to_string(EvalMode m);
EvalMode eval_mode_from_string(std::string_view name);

struct IdxPaths {
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
};

struct Diagnostics {
  bool loss_probe = false;
  std::size_t probe_every = 10;
  bool entropy = true;
  bool ncm = true;
  NcmReference ncm_reference = NcmReference::buffer;
  bool step_records = false;
};

struct RunConfig {
  std::string source = "synthetic";
  SyntheticSpec synthetic;
  IdxPaths idx;

  std::size_t tasks = 5;
  std::size_t classes_per_task = 2;
  std::size_t memory_size = 200;
  std::size_t stream_batch = 10;
  std::size_t memory_batch = 64;

  TrainMode mode = TrainMode::ccl_dc;
  SchemeVariant scheme = SchemeVariant::hard_to_easy;
  KlDirection kl_direction = KlDirection::teacher_student;
  LossWeights loss;
  ChainConfig chain;
  AugStrategy augmentation = AugStrategy::partial;
  std::vector<std::size_t> hidden = {128, 64};
  double input_offset = 0.5;
  double input_gain = 2.0;
  OptimizerConfig optimizer;

  std::vector<std::uint64_t> seeds = {0};
  std::optional<std::array<std::uint64_t, 2>> model_seeds;
  EvalMode eval_mode = EvalMode::both;
  Diagnostics diagnostics;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Parses a config object. Unknown keys and wrong types raise ConfigError
/// with the dotted field path.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" to a JSON config object. The value is parsed as
/// JSON when possible and otherwise taken as a string.
void apply_override(nlohmann::json& j, std::string_view assignment);

}  // namespace ccldc
