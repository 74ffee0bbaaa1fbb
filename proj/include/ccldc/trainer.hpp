#pragma once

// Online class-incremental training: one pass over each task's stream in
// batches, a reservoir replay buffer, and the per-step peer update for every
// training mode. After each task the test sets of all tasks seen so far are
// evaluated into the accuracy matrices.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccldc/config.hpp"
#include "ccldc/data.hpp"
#include "ccldc/errors.hpp"
#include "ccldc/metrics.hpp"
#include "ccldc/nn.hpp"
#include "ccldc/replay.hpp"

namespace ccldc {

struct TaskSchedule {
  /// groups[t] are the classes of the t-th task in training order.
  std::vector<std::vector<int>> groups;
};

/// Seeded class permutation, split into `tasks` equal groups, then a seeded
/// permutation of the group order. Throws ConfigError when the class count is
/// not divisible by `tasks`.
TaskSchedule schedule_tasks(std::vector<int> classes, std::size_t tasks, std::uint64_t seed);

struct StepRecord {
  std::size_t step = 0;  // global step index, from 0
  std::size_t task = 0;  // training-order task index, from 0
  std::size_t stream_size = 0;
  std::size_t memory_size = 0;
  /// Loss terms per learner ("model1", "model2"), e.g. total, baseline, ccl.
  std::map<std::string, std::map<std::string, double>> losses;
  double wall_seconds = 0.0;
};

/// Raised when a loss value is NaN or infinite; carries the offending step.
class NonFiniteLossError : public StateError {
 public:
  NonFiniteLossError(const std::string& what, StepRecord record)
      : StateError(what), record_(std::move(record)) {}
  const StepRecord& record() const { return record_; }

 private:
  StepRecord record_;
};

struct ProbePoint {
  std::size_t task = 0;
  std::size_t step_in_task = 0;  // probes fire after steps probe_every, 2*probe_every, ...
  double model1 = 0.0;
  double model2 = 0.0;
};

/// Full-pass mean cross-entropy of net over the examples. Reads no Rng and
/// records no graph.
double loss_curve_probe(const Network& net, std::span<const Example> examples);

/// Mutable state shared across the tasks of one run.
struct TrainState {
  PeerPair pair;  // model2 stays at its initialization under er_untrained_distill
  ReplayBuffer buffer;
  Rng memory_rng;   // memory-batch sampling
  Rng chain_rng;    // difficulty-chain draws, shared by both learners
  Rng aug_rng1;     // baseline augmentation for model1
  Rng aug_rng2;     // baseline augmentation for model2
  Rng order_rng;    // within-task stream order
  std::size_t global_step = 0;
  std::size_t consumed = 0;
};

struct TaskResult {
  std::vector<StepRecord> steps;
  std::vector<ProbePoint> probe;
};

/// Seeds of the two learners for a run seed (or the configured override).
std::array<std::uint64_t, 2> learner_seeds(const RunConfig& cfg, std::uint64_t seed);

/// Fresh state for one run: networks, optimizers, buffer and Rng streams.
TrainState make_train_state(const RunConfig& cfg, std::size_t num_classes, std::size_t input_dim,
                            std::uint64_t seed);

/// One optimizer step per learner on a stream batch. The memory batch is
/// drawn from the buffer before the step; the stream examples are inserted
/// after it. Returns the step record.
StepRecord train_step(const RunConfig& cfg, TrainState& state, std::span<const Example> stream,
                      std::size_t task);

/// Streams `task_data` once, in a seeded order, in batches of
/// cfg.stream_batch. An empty task is a no-op.
TaskResult train_task(const RunConfig& cfg, TrainState& state, const Dataset& task_data,
                      std::size_t task);

struct ExperimentResult {
  std::uint64_t seed = 0;
  TaskSchedule schedule;
  AccuracyMatrix model1;
  AccuracyMatrix model2;
  AccuracyMatrix ensemble;
  std::vector<StepRecord> steps;  // kept when diagnostics.step_records is set
  std::vector<ProbePoint> probe;
  std::vector<double> entropy_model1;  // per chain stage, stage 0 = raw images
  std::vector<double> entropy_model2;
  std::vector<double> entropy_ensemble_raw;  // single value, empty if disabled
  std::optional<double> ncm_model1;
  std::optional<double> ncm_model2;
  std::string ncm_error;
  std::size_t consumed = 0;
  std::size_t train_size = 0;
  std::size_t buffer_seen = 0;
  std::optional<PeerPair> final_pair;

  /// Matrix selected by the evaluation mode (model1 unless ensemble).
  const AccuracyMatrix& primary(EvalMode mode) const {
    return mode == EvalMode::ensemble ? ensemble : model1;
  }
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Loads or generates the data named by cfg.
LabeledSplit load_data(const RunConfig& cfg);

/// Runs every task of the schedule for one seed. Validates cfg before any
/// training. on_step, when set, sees every step record as it is produced.
ExperimentResult run_experiment(const RunConfig& cfg, const LabeledSplit& data, std::uint64_t seed,
                                const StepCallback& on_step = {});

enum class Learner { model1, model2, ensemble };

/// Accuracy of one learner, or of the logit ensemble, on the examples.
double evaluate(const PeerPair& pair, std::span<const Example> examples, Learner who);

}  // namespace ccldc
