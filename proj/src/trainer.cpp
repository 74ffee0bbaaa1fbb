#include "ccldc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "ccldc/errors.hpp"
#include "ccldc/losses.hpp"

namespace ccldc {

namespace {

// Sub-stream ids. Each consumer of randomness owns one so that enabling a
// feature never shifts the draws of another.
constexpr std::uint64_t kScheduleStream = 1;
constexpr std::uint64_t kMemoryStream = 2;
constexpr std::uint64_t kChainStream = 3;
constexpr std::uint64_t kOrderStream = 4;
constexpr std::uint64_t kBufferStream = 5;
constexpr std::uint64_t kEntropyStream = 6;
constexpr std::uint64_t kLearner1Stream = 101;
constexpr std::uint64_t kLearner2Stream = 102;
constexpr std::uint64_t kAugStream = 7;

constexpr std::size_t kEvalChunk = 256;

bool uses_chain(TrainMode m) {
  return m == TrainMode::er_multiview || m == TrainMode::ccl_dc || m == TrainMode::sdc;
}

}  // namespace

TaskSchedule schedule_tasks(std::vector<int> classes, std::size_t tasks, std::uint64_t seed) {
  if (tasks == 0) throw ConfigError("schedule_tasks: task count must be >= 1");
  if (classes.empty() || classes.size() % tasks != 0) {
    throw ConfigError("schedule_tasks: " + std::to_string(classes.size()) +
                      " classes cannot be split into " + std::to_string(tasks) + " equal tasks");
  }
  Rng rng(derive_seed(seed, kScheduleStream));
  std::shuffle(classes.begin(), classes.end(), rng.engine());
  const std::size_t per = classes.size() / tasks;
  TaskSchedule s;
  for (std::size_t t = 0; t < tasks; ++t) {
    std::vector<int> g(classes.begin() + static_cast<std::ptrdiff_t>(t * per),
                       classes.begin() + static_cast<std::ptrdiff_t>((t + 1) * per));
    s.groups.push_back(std::move(g));
  }
  std::shuffle(s.groups.begin(), s.groups.end(), rng.engine());
  return s;
}

double loss_curve_probe(const Network& net, std::span<const Example> examples) {
  if (examples.empty()) throw ContractError("loss_curve_probe: no examples");
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t b = 0; b < examples.size(); b += kEvalChunk) {
    const auto part = examples.subspan(b, std::min(kEvalChunk, examples.size() - b));
    const auto labels = labels_of(part);
    total += cross_entropy(net.forward(stack_examples(part)), labels).item() *
             static_cast<double>(part.size());
  }
  return total / static_cast<double>(examples.size());
}

std::array<std::uint64_t, 2> learner_seeds(const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.model_seeds) return *cfg.model_seeds;
  return {derive_seed(seed, kLearner1Stream), derive_seed(seed, kLearner2Stream)};
}

TrainState make_train_state(const RunConfig& cfg, std::size_t num_classes, std::size_t input_dim,
                            std::uint64_t seed) {
  Architecture arch;
  arch.input_dim = input_dim;
  arch.hidden = cfg.hidden;
  arch.input_offset = cfg.input_offset;
  arch.input_gain = cfg.input_gain;
  arch.num_classes = num_classes;
  const auto seeds = learner_seeds(cfg, seed);
  return TrainState{PeerPair::create(arch, cfg.optimizer, seeds[0], seeds[1]),
                    ReplayBuffer(cfg.memory_size, derive_seed(seed, kBufferStream)),
                    Rng(seed, kMemoryStream),
                    Rng(seed, kChainStream),
                    Rng(seeds[0], kAugStream),
                    Rng(seeds[1], kAugStream),
                    Rng(seed, kOrderStream)};
}

namespace {

struct LearnerLoss {
  Tensor total;
  std::map<std::string, double> terms;
};

Tensor baseline_batch(const std::vector<Example>& batch, const RunConfig& cfg, Rng& rng) {
  std::vector<Image> images;
  images.reserve(batch.size());
  for (const Example& e : batch) {
    images.push_back(baseline_augment(e.image, cfg.augmentation, cfg.chain.geometric, rng));
  }
  return stack_images(images);
}

std::vector<Tensor> chain_batches(const std::vector<Example>& batch, const ChainConfig& chain,
                                  Rng& rng) {
  std::vector<std::vector<Image>> stages(chain.stages + 1);
  for (const Example& e : batch) {
    auto views = build_chain(e.image, chain, rng);
    for (std::size_t s = 0; s < views.size(); ++s) stages[s].push_back(std::move(views[s]));
  }
  std::vector<Tensor> out;
  for (const auto& s : stages) out.push_back(stack_images(s));
  return out;
}

std::vector<Tensor> forward_all(const Network& net, const std::vector<Tensor>& inputs) {
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  for (const Tensor& x : inputs) out.push_back(net.forward(x));
  return out;
}

// Loss of one learner; `own` and `peer` are the two learners' logits on the
// shared chain views (peer values only ever enter through detached copies).
LearnerLoss learner_loss(const RunConfig& cfg, const Tensor& baseline,
                         const std::vector<Tensor>& own, const std::vector<Tensor>& peer,
                         std::span<const int> labels) {
  const LossWeights& w = cfg.loss;
  LearnerLoss out;
  out.terms["baseline"] = baseline.item();
  switch (cfg.mode) {
    case TrainMode::er_baseline:
      out.total = baseline;
      break;
    case TrainMode::er_multiview: {
      const Tensor mv = multiview_loss(own, labels, w.lambda1);
      out.terms["multiview"] = mv.item();
      out.total = add(baseline, mv);
      break;
    }
    case TrainMode::ccl_only: {
      const Tensor ccl = ccl_loss(own[0], peer[0], labels, w, cfg.kl_direction);
      out.terms["ccl"] = ccl.item();
      out.total = add(baseline, ccl);
      break;
    }
    case TrainMode::ccl_dc: {
      const CclDcTerms t =
          ccl_dc_loss(baseline, own, peer, labels, w, cfg.scheme, cfg.kl_direction);
      out.terms["classification"] = t.classification.item();
      out.terms["ccl_kl"] = t.ccl.item();
      out.terms["dc_kl"] = t.dc.item();
      out.total = t.total;
      break;
    }
    case TrainMode::sdc: {
      const Tensor first = scale(cross_entropy(own[0], labels), w.lambda1);
      const Tensor chain = sdc_loss(own, labels, w, cfg.scheme, cfg.kl_direction);
      out.terms["classification0"] = first.item();
      out.terms["sdc"] = chain.item();
      out.total = add(baseline, add(first, chain));
      break;
    }
    case TrainMode::er_untrained_distill:
      throw ContractError("learner_loss: er_untrained_distill is handled by train_step");
  }
  out.terms["total"] = out.total.item();
  return out;
}

void check_finite(const StepRecord& record) {
  for (const auto& [learner, terms] : record.losses) {
    for (const auto& [name, value] : terms) {
      if (!std::isfinite(value)) {
        throw NonFiniteLossError("non-finite loss at step " + std::to_string(record.step) +
                                     " (task " + std::to_string(record.task + 1) + "): " +
                                     learner + "." + name + " = " + std::to_string(value),
                                 record);
      }
    }
  }
}

}  // namespace

StepRecord train_step(const RunConfig& cfg, TrainState& state, std::span<const Example> stream,
                      std::size_t task) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Example> batch(stream.begin(), stream.end());
  const auto memory = state.buffer.sample(cfg.memory_batch, state.memory_rng);
  batch.insert(batch.end(), memory.begin(), memory.end());
  const auto labels = labels_of(batch);

  StepRecord record;
  record.step = state.global_step;
  record.task = task;
  record.stream_size = stream.size();
  record.memory_size = memory.size();

  Network& m1 = state.pair.model1;
  Network& m2 = state.pair.model2;
  LearnerLoss loss1, loss2;
  const bool train_second = cfg.mode != TrainMode::er_untrained_distill;

  if (cfg.mode == TrainMode::er_untrained_distill) {
    const Tensor x = baseline_batch(batch, cfg, state.aug_rng1);
    const Tensor logits = m1.forward(x);
    Tensor frozen;
    {
      NoGradGuard no_grad;
      frozen = m2.forward(x);
    }
    const Tensor ce = cross_entropy(logits, labels);
    loss1.total = untrained_distill_loss(logits, frozen, labels, cfg.loss, cfg.kl_direction);
    loss1.terms["baseline"] = ce.item();
    loss1.terms["kl"] = soft_kl(logits, frozen, cfg.loss.tau, cfg.kl_direction).item();
    loss1.terms["total"] = loss1.total.item();
  } else {
    const Tensor base1 = cross_entropy(m1.forward(baseline_batch(batch, cfg, state.aug_rng1)), labels);
    const Tensor base2 = cross_entropy(m2.forward(baseline_batch(batch, cfg, state.aug_rng2)), labels);
    std::vector<Tensor> views;
    if (uses_chain(cfg.mode)) {
      views = chain_batches(batch, cfg.chain, state.chain_rng);
    } else if (cfg.mode == TrainMode::ccl_only) {
      views.push_back(stack_examples(batch));
    }
    // Both learners' chain logits come from the pre-update parameters, so
    // each acts as the other's teacher within the same step.
    const auto s1 = forward_all(m1, views);
    const auto s2 = forward_all(m2, views);
    loss1 = learner_loss(cfg, base1, s1, s2, labels);
    loss2 = learner_loss(cfg, base2, s2, s1, labels);
  }

  record.losses["model1"] = loss1.terms;
  if (train_second) record.losses["model2"] = loss2.terms;
  check_finite(record);

  m1.zero_grad();
  loss1.total.backward();
  if (train_second) {
    m2.zero_grad();
    loss2.total.backward();
  }
  state.pair.opt1.step(m1);
  if (train_second) state.pair.opt2.step(m2);

  for (const Example& e : stream) state.buffer.insert(e);
  state.consumed += stream.size();
  ++state.global_step;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return record;
}

TaskResult train_task(const RunConfig& cfg, TrainState& state, const Dataset& task_data,
                      std::size_t task) {
  TaskResult result;
  if (task_data.empty()) return result;
  std::vector<std::size_t> order(task_data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[state.order_rng.index(i + 1)]);

  std::size_t steps_in_task = 0;
  std::vector<Example> stream;
  for (std::size_t begin = 0; begin < order.size(); begin += cfg.stream_batch) {
    const std::size_t end = std::min(order.size(), begin + cfg.stream_batch);
    stream.clear();
    for (std::size_t n = begin; n < end; ++n) stream.push_back(task_data.examples[order[n]]);
    result.steps.push_back(train_step(cfg, state, stream, task));
    ++steps_in_task;
    if (cfg.diagnostics.loss_probe && steps_in_task % cfg.diagnostics.probe_every == 0) {
      result.probe.push_back({task, steps_in_task,
                              loss_curve_probe(state.pair.model1, task_data.examples),
                              loss_curve_probe(state.pair.model2, task_data.examples)});
    }
  }
  return result;
}

double evaluate(const PeerPair& pair, std::span<const Example> examples, Learner who) {
  if (examples.empty()) throw ContractError("evaluate: no examples");
  NoGradGuard no_grad;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < examples.size(); b += kEvalChunk) {
    const auto part = examples.subspan(b, std::min(kEvalChunk, examples.size() - b));
    const Tensor x = stack_examples(part);
    std::vector<int> pred;
    switch (who) {
      case Learner::model1: pred = predict(pair.model1, x); break;
      case Learner::model2: pred = predict(pair.model2, x); break;
      case Learner::ensemble: pred = predict(pair, x, PredictMode::ensemble); break;
    }
    for (std::size_t n = 0; n < part.size(); ++n) correct += pred[n] == part[n].label;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

LabeledSplit load_data(const RunConfig& cfg) {
  if (cfg.source == "synthetic") return gen_synthetic(cfg.synthetic);
  return {load_idx(cfg.idx.train_images, cfg.idx.train_labels),
          load_idx(cfg.idx.test_images, cfg.idx.test_labels)};
}

ExperimentResult run_experiment(const RunConfig& cfg, const LabeledSplit& data, std::uint64_t seed,
                                const StepCallback& on_step) {
  cfg.validate();
  const auto classes = data.train.classes();
  if (classes.empty()) throw ConfigError("run: training set is empty");
  if (classes.front() < 0) throw ConfigError("run: negative class label in training set");
  if (classes.size() != cfg.tasks * cfg.classes_per_task) {
    throw ConfigError("config field 'tasks': " + std::to_string(cfg.tasks) + " tasks of " +
                      std::to_string(cfg.classes_per_task) + " classes do not cover the " +
                      std::to_string(classes.size()) + " classes in the data");
  }
  for (int c : data.test.classes()) {
    if (!std::binary_search(classes.begin(), classes.end(), c)) {
      throw ConfigError("run: test class " + std::to_string(c) + " never appears in training");
    }
  }

  ExperimentResult result;
  result.seed = seed;
  result.schedule = schedule_tasks(classes, cfg.tasks, seed);
  result.train_size = data.train.size();
  const std::size_t num_classes = static_cast<std::size_t>(classes.back()) + 1;
  TrainState state = make_train_state(cfg, num_classes, data.train.shape.size(), seed);

  std::vector<Dataset> train_parts, test_parts;
  for (const auto& g : result.schedule.groups) {
    train_parts.push_back(data.train.subset(g));
    test_parts.push_back(data.test.subset(g));
  }

  const std::size_t t = cfg.tasks;
  result.model1 = AccuracyMatrix(t);
  result.model2 = AccuracyMatrix(t);
  result.ensemble = AccuracyMatrix(t);
  for (std::size_t i = 0; i < t; ++i) {
    TaskResult tr = train_task(cfg, state, train_parts[i], i);
    if (on_step) {
      for (const StepRecord& r : tr.steps) on_step(r);
    }
    if (cfg.diagnostics.step_records) {
      result.steps.insert(result.steps.end(), tr.steps.begin(), tr.steps.end());
    }
    result.probe.insert(result.probe.end(), tr.probe.begin(), tr.probe.end());
    for (std::size_t j = 0; j <= i; ++j) {
      if (test_parts[j].empty()) {
        throw ConfigError("run: task " + std::to_string(j + 1) + " has no test examples");
      }
      const auto& ex = test_parts[j].examples;
      result.model1.set(j, i, evaluate(state.pair, ex, Learner::model1));
      result.model2.set(j, i, evaluate(state.pair, ex, Learner::model2));
      result.ensemble.set(j, i, evaluate(state.pair, ex, Learner::ensemble));
    }
  }

  result.consumed = state.consumed;
  result.buffer_seen = state.buffer.n_seen();

  if (cfg.diagnostics.entropy) {
    const auto& train = data.train.examples;
    const std::uint64_t es = derive_seed(seed, kEntropyStream);
    result.entropy_model1 = entropy_by_stage(state.pair.model1, train, cfg.chain, es);
    result.entropy_model2 = entropy_by_stage(state.pair.model2, train, cfg.chain, es);
    NoGradGuard no_grad;
    double total = 0.0;
    for (std::size_t b = 0; b < train.size(); b += kEvalChunk) {
      const auto part = std::span<const Example>(train).subspan(b, std::min(kEvalChunk, train.size() - b));
      for (double h : row_entropy(ensemble_logits(state.pair, stack_examples(part)))) total += h;
    }
    result.entropy_ensemble_raw = {total / static_cast<double>(train.size())};
  }

  if (cfg.diagnostics.ncm) {
    const auto& reference = cfg.diagnostics.ncm_reference == NcmReference::buffer
                                ? state.buffer.storage()
                                : data.train.examples;
    try {
      result.ncm_model1 = ncm_evaluate(state.pair.model1, reference, data.test.examples);
      result.ncm_model2 = ncm_evaluate(state.pair.model2, reference, data.test.examples);
    } catch (const ContractError& e) {
      result.ncm_error = e.what();
    }
  }

  result.final_pair.emplace(std::move(state.pair));
  return result;
}

}  // namespace ccldc
