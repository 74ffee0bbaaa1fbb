#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "ccldc/trainer.hpp"
#include "fixtures.hpp"

namespace ccldc {
namespace {

RunConfig tiny_config(TrainMode mode = TrainMode::ccl_dc) {
  RunConfig c;
  c.synthetic.classes = 4;
  c.synthetic.train_per_class = 20;
  c.synthetic.test_per_class = 10;
  c.synthetic.shape = ImageShape{1, 8, 8};
  c.synthetic.seed = 3;
  c.tasks = 2;
  c.classes_per_task = 2;
  c.memory_size = 20;
  c.stream_batch = 5;
  c.memory_batch = 8;
  c.hidden = {16};
  c.mode = mode;
  c.diagnostics.entropy = false;
  c.diagnostics.ncm = false;
  return c;
}

TEST(Schedule, PartitionsClassesDeterministically) {
  const std::vector<int> classes{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  const TaskSchedule s = schedule_tasks(classes, 5, 11);
  ASSERT_EQ(s.groups.size(), 5u);
  std::set<int> seen;
  for (const auto& g : s.groups) {
    EXPECT_EQ(g.size(), 2u);
    seen.insert(g.begin(), g.end());
  }
  EXPECT_EQ(seen.size(), 10u);
  EXPECT_EQ(schedule_tasks(classes, 5, 11).groups, s.groups);
  bool differs = false;
  for (std::uint64_t seed = 0; seed < 5 && !differs; ++seed) {
    differs = schedule_tasks(classes, 5, 100 + seed).groups != s.groups;
  }
  EXPECT_TRUE(differs);
  EXPECT_THROW(schedule_tasks(classes, 3, 1), ConfigError);
  EXPECT_THROW(schedule_tasks(classes, 0, 1), ConfigError);
}

TEST(Step, BatchSizesAndLossKeys) {
  RunConfig cfg = tiny_config();
  const LabeledSplit data = gen_synthetic(cfg.synthetic);
  TrainState st = make_train_state(cfg, 4, 64, 1);
  const std::span<const Example> all(data.train.examples);
  const StepRecord first = train_step(cfg, st, all.subspan(0, 5), 0);
  EXPECT_EQ(first.stream_size, 5u);
  EXPECT_EQ(first.memory_size, 0u);
  EXPECT_EQ(st.buffer.size(), 5u);
  const StepRecord second = train_step(cfg, st, all.subspan(5, 5), 0);
  EXPECT_EQ(second.memory_size, 8u);
  EXPECT_EQ(second.step, 1u);
  for (const char* learner : {"model1", "model2"}) {
    const auto& t = second.losses.at(learner);
    for (const char* key : {"baseline", "total", "classification", "ccl_kl", "dc_kl"}) {
      EXPECT_TRUE(t.count(key)) << learner << "." << key;
    }
    EXPECT_NEAR(t.at("total"),
                t.at("baseline") + cfg.loss.lambda1 * t.at("classification") +
                    cfg.loss.lambda2 * (t.at("ccl_kl") + t.at("dc_kl")),
                1e-12);
  }
}

TEST(Step, ErBaselineIsPlainSgdOnTheBatch) {
  RunConfig cfg = tiny_config(TrainMode::er_baseline);
  cfg.augmentation = AugStrategy::none;
  const LabeledSplit data = gen_synthetic(cfg.synthetic);
  TrainState st = make_train_state(cfg, 4, 64, 2);
  const std::vector<Example> batch(data.train.examples.begin() + 3, data.train.examples.begin() + 8);

  Architecture arch = testing::make_arch(64, cfg.hidden, 4);
  Network ref = Network::init(arch, learner_seeds(cfg, 2)[0]);
  cross_entropy(ref.forward(stack_examples(batch)), labels_of(batch)).backward();
  std::vector<double> expect;
  for (const Linear& l : ref.layers()) {
    for (const Tensor* p : {&l.weight, &l.bias}) {
      const auto v = p->values();
      const auto g = p->grad();
      for (std::size_t i = 0; i < v.size(); ++i) expect.push_back(v[i] - cfg.optimizer.lr * g[i]);
    }
  }
  train_step(cfg, st, batch, 0);
  const auto got = st.pair.model1.flat_parameters();
  ASSERT_EQ(got.size(), expect.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], expect[i], 1e-15) << i;
}

TEST(Step, UntrainedDistillLeavesModelTwoFrozen) {
  RunConfig cfg = tiny_config(TrainMode::er_untrained_distill);
  const LabeledSplit data = gen_synthetic(cfg.synthetic);
  TrainState st = make_train_state(cfg, 4, 64, 3);
  const auto before = st.pair.model2.flat_parameters();
  const std::span<const Example> all(data.train.examples);
  const StepRecord r = train_step(cfg, st, all.subspan(0, 5), 0);
  EXPECT_EQ(st.pair.model2.flat_parameters(), before);
  EXPECT_FALSE(r.losses.count("model2"));
  const auto& t = r.losses.at("model1");
  EXPECT_NEAR(t.at("total"), t.at("baseline") + cfg.loss.lambda2 * t.at("kl"), 1e-12);
}

TEST(Experiment, DeterministicForSeed) {
  const RunConfig cfg = tiny_config();
  const LabeledSplit data = gen_synthetic(cfg.synthetic);
  const ExperimentResult a = run_experiment(cfg, data, 5), b = run_experiment(cfg, data, 5);
  EXPECT_EQ(a.model1, b.model1);
  EXPECT_EQ(a.model2, b.model2);
  EXPECT_EQ(a.final_pair->model1.flat_parameters(), b.final_pair->model1.flat_parameters());
}

TEST(Experiment, ZeroWeightsReproduceErBaselineExactly) {
  RunConfig ccl = tiny_config(TrainMode::ccl_dc);
  ccl.loss.lambda1 = 0.0;
  ccl.loss.lambda2 = 0.0;
  const RunConfig er = tiny_config(TrainMode::er_baseline);
  const LabeledSplit data = gen_synthetic(er.synthetic);
  const ExperimentResult a = run_experiment(ccl, data, 8), b = run_experiment(er, data, 8);
  EXPECT_EQ(a.model1, b.model1);
  EXPECT_EQ(a.model2, b.model2);
  EXPECT_EQ(a.final_pair->model1.flat_parameters(), b.final_pair->model1.flat_parameters());
  EXPECT_EQ(a.final_pair->model2.flat_parameters(), b.final_pair->model2.flat_parameters());
}

TEST(Experiment, SwappingLearnerSeedsSwapsLearners) {
  RunConfig a_cfg = tiny_config();
  a_cfg.model_seeds = std::array<std::uint64_t, 2>{41, 42};
  RunConfig b_cfg = a_cfg;
  b_cfg.model_seeds = std::array<std::uint64_t, 2>{42, 41};
  const LabeledSplit data = gen_synthetic(a_cfg.synthetic);
  const ExperimentResult a = run_experiment(a_cfg, data, 1), b = run_experiment(b_cfg, data, 1);
  EXPECT_EQ(a.model1, b.model2);
  EXPECT_EQ(a.model2, b.model1);
  EXPECT_EQ(a.final_pair->model1.flat_parameters(), b.final_pair->model2.flat_parameters());
}

TEST(Experiment, SinglePassOverStream) {
  const RunConfig cfg = tiny_config();
  const LabeledSplit data = gen_synthetic(cfg.synthetic);
  std::size_t steps = 0, seen = 0;
  const ExperimentResult r = run_experiment(cfg, data, 2, [&](const StepRecord& s) {
    ++steps;
    seen += s.stream_size;
  });
  EXPECT_EQ(r.consumed, data.train.size());
  EXPECT_EQ(r.buffer_seen, data.train.size());
  EXPECT_EQ(seen, data.train.size());
  EXPECT_EQ(steps, data.train.size() / cfg.stream_batch);
  EXPECT_TRUE(r.model1.complete());
  EXPECT_TRUE(r.ensemble.complete());
}

TEST(Experiment, EveryModeRuns) {
  const LabeledSplit data = gen_synthetic(tiny_config().synthetic);
  for (TrainMode m : all_train_modes()) {
    const ExperimentResult r = run_experiment(tiny_config(m), data, 0);
    EXPECT_TRUE(r.model1.complete()) << to_string(m);
  }
}

TEST(Experiment, ProbeFiresEveryKSteps) {
  RunConfig cfg = tiny_config();
  cfg.diagnostics.loss_probe = true;
  cfg.diagnostics.probe_every = 3;
  const LabeledSplit data = gen_synthetic(cfg.synthetic);
  const ExperimentResult r = run_experiment(cfg, data, 4);
  // 40 examples per task in batches of 5: 8 steps, probes after 3 and 6.
  ASSERT_EQ(r.probe.size(), 4u);
  EXPECT_EQ(r.probe[0].step_in_task, 3u);
  EXPECT_EQ(r.probe[1].step_in_task, 6u);
  EXPECT_EQ(r.probe[2].task, 1u);
  for (const ProbePoint& p : r.probe) {
    EXPECT_TRUE(std::isfinite(p.model1));
    EXPECT_GT(p.model2, 0.0);
  }
}

TEST(Experiment, ProbeOfUntrainedNetIsNearLogK) {
  Network net = Network::init(testing::make_arch(64, {16}, 4), 1);
  for (double& v : Tensor(net.layers().back().weight).mutable_values()) v = 0.0;
  const LabeledSplit data = gen_synthetic(tiny_config().synthetic);
  EXPECT_NEAR(loss_curve_probe(net, data.train.examples), std::log(4.0), 1e-12);
}

TEST(Experiment, SingleTaskGivesOneCell) {
  RunConfig cfg = tiny_config();
  cfg.tasks = 1;
  cfg.classes_per_task = 4;
  const LabeledSplit data = gen_synthetic(cfg.synthetic);
  const ExperimentResult r = run_experiment(cfg, data, 0);
  EXPECT_EQ(r.model1.tasks(), 1u);
  EXPECT_FALSE(compute_metrics(r.model1).fm.has_value());
}

TEST(Experiment, DiagnosticsPopulated) {
  RunConfig cfg = tiny_config();
  cfg.diagnostics.entropy = true;
  cfg.diagnostics.ncm = true;
  const LabeledSplit data = gen_synthetic(cfg.synthetic);
  const ExperimentResult r = run_experiment(cfg, data, 0);
  EXPECT_EQ(r.entropy_model1.size(), cfg.chain.stages + 1);
  EXPECT_EQ(r.entropy_ensemble_raw.size(), 1u);
  ASSERT_TRUE(r.ncm_model1.has_value());
  EXPECT_GE(*r.ncm_model1, 0.0);
  EXPECT_LE(*r.ncm_model1, 1.0);
}

TEST(Experiment, RejectsMismatchedTaskSplit) {
  RunConfig cfg = tiny_config();
  const LabeledSplit data = gen_synthetic(cfg.synthetic);
  cfg.tasks = 3;
  EXPECT_THROW(run_experiment(cfg, data, 0), ConfigError);
}

TEST(Evaluate, MatchesManualArgmaxCount) {
  const RunConfig cfg = tiny_config();
  const LabeledSplit data = gen_synthetic(cfg.synthetic);
  const ExperimentResult r = run_experiment(cfg, data, 6);
  const PeerPair& pair = *r.final_pair;
  const auto& ex = data.test.examples;
  const Tensor l1 = pair.model1.forward(stack_examples(ex));
  const Tensor l2 = pair.model2.forward(stack_examples(ex));
  std::size_t c1 = 0, ce = 0;
  for (std::size_t i = 0; i < ex.size(); ++i) {
    std::size_t b1 = 0, be = 0;
    for (std::size_t k = 1; k < 4; ++k) {
      if (l1.at(i, k) > l1.at(i, b1)) b1 = k;
      if (l1.at(i, k) + l2.at(i, k) > l1.at(i, be) + l2.at(i, be)) be = k;
    }
    c1 += static_cast<int>(b1) == ex[i].label;
    ce += static_cast<int>(be) == ex[i].label;
  }
  EXPECT_DOUBLE_EQ(evaluate(pair, ex, Learner::model1), static_cast<double>(c1) / ex.size());
  EXPECT_DOUBLE_EQ(evaluate(pair, ex, Learner::ensemble), static_cast<double>(ce) / ex.size());
}

}  // namespace
}  // namespace ccldc
