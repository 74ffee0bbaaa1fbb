#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "ccldc/data.hpp"
#include "ccldc/errors.hpp"
#include "ccldc/metrics.hpp"
#include "fixtures.hpp"

namespace ccldc {
namespace {

using testing::halved_matrix;
using testing::make_arch;
using testing::random_matrix;
using testing::decaying_matrix;

// Independent relative-forgetting oracle on a plain row table.
double rf_oracle(const AccuracyMatrix& a, std::size_t j, std::size_t k) {
  double worst = -1e300;
  for (std::size_t i = j; i <= k; ++i) worst = std::max(worst, 1.0 - a.at(j, k) / a.at(j, i));
  return worst;
}

TEST(AccuracyMatrix, CellsAndCompleteness) {
  AccuracyMatrix a(3);
  EXPECT_FALSE(a.complete());
  a.set(0, 0, 0.5);
  EXPECT_TRUE(a.has(0, 0));
  EXPECT_FALSE(a.has(0, 1));
  EXPECT_THROW(a.set(1, 0, 0.5), ContractError);
  EXPECT_THROW(a.at(0, 1), StateError);
  EXPECT_THROW(learning_accuracy(a), StateError);
  const AccuracyMatrix t = decaying_matrix();
  EXPECT_TRUE(t.complete());
  EXPECT_EQ(t.prefix(2).tasks(), 2u);
  EXPECT_EQ(t.prefix(2).at(1, 1), 0.25);
  EXPECT_EQ(t.scaled(0.5).at(0, 4), 0.05);
}

TEST(ForgettingExample, DecayingLearner) {
  const AccuracyMatrix decay = decaying_matrix();
  const double fm[] = {0.05, 0.075, 0.10, 0.125};
  const double rf[] = {1.0 / 12.0, (1.0 / 3.0 + 0.2) / 3.0, 1.15 / 4.0, 2.1 / 5.0};
  for (std::size_t k = 2; k <= 5; ++k) {
    const AccuracyMatrix p = decay.prefix(k);
    EXPECT_NEAR(forgetting_measure(p).mean, fm[k - 2], 1e-9) << "k=" << k;
    EXPECT_NEAR(relative_forgetting(p).mean, rf[k - 2], 1e-9) << "k=" << k;
  }
  EXPECT_NEAR(relative_forgetting(decay.prefix(2)).mean * 100, 8.33, 5e-3);
  EXPECT_NEAR(relative_forgetting(decay.prefix(3)).mean * 100, 17.78, 5e-3);
  EXPECT_NEAR(relative_forgetting(decay.prefix(4)).mean * 100, 28.75, 5e-3);
  EXPECT_NEAR(relative_forgetting(decay.prefix(5)).mean * 100, 42.0, 5e-3);
}

TEST(ForgettingExample, HalvedLearnerHalvesForgettingKeepsRelative) {
  for (std::size_t k = 2; k <= 5; ++k) {
    const AccuracyMatrix t = decaying_matrix().prefix(k), b = halved_matrix().prefix(k);
    EXPECT_NEAR(forgetting_measure(b).mean, forgetting_measure(t).mean / 2, 1e-12);
    EXPECT_NEAR(relative_forgetting(b).mean, relative_forgetting(t).mean, 1e-12);
  }
}

TEST(Metrics, HandComputedExample) {
  const AccuracyMatrix a = AccuracyMatrix::from_rows({{0.9, 0.6, 0.3}, {0.8, 0.8}, {0.7}});
  EXPECT_NEAR(learning_accuracy(a).mean, 0.8, 1e-15);
  EXPECT_NEAR(average_accuracy(a), (0.3 + 0.8 + 0.7) / 3, 1e-15);
  const auto fm = forgetting_measure(a);
  ASSERT_EQ(fm.per_task.size(), 2u);
  EXPECT_NEAR(fm.per_task[0], 0.6, 1e-15);
  EXPECT_NEAR(fm.per_task[1], 0.0, 1e-15);
  const auto rf = relative_forgetting(a);
  ASSERT_EQ(rf.per_task.size(), 3u);
  EXPECT_NEAR(rf.per_task[0], 1 - 0.3 / 0.9, 1e-15);
  EXPECT_EQ(rf.per_task[2], 0.0);
}

TEST(Metrics, SingleTaskDomain) {
  const AccuracyMatrix a = AccuracyMatrix::from_rows({{0.4}});
  EXPECT_THROW(forgetting_measure(a), DomainError);
  EXPECT_EQ(relative_forgetting(a).mean, 0.0);
  const MetricReport r = compute_metrics(a);
  EXPECT_FALSE(r.fm.has_value());
  EXPECT_EQ(r.aa, 0.4);
}

TEST(Metrics, ZeroAccuracyMakesRelativeForgettingUndefined) {
  const AccuracyMatrix a = AccuracyMatrix::from_rows({{0.0, 0.2}, {0.5}});
  try {
    relative_forgetting(a);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("task 1"), std::string::npos);
  }
  const MetricReport r = compute_metrics(a);
  EXPECT_FALSE(r.rf.has_value());
  EXPECT_FALSE(r.bound.has_value());
  EXPECT_FALSE(r.rf_error.empty());
  EXPECT_TRUE(r.fm.has_value());
}

TEST(Metrics, ScalingInvariance) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const AccuracyMatrix a = random_matrix(rng, 8);
    const double c = rng.uniform(1e-3, 10.0);
    const AccuracyMatrix ca = a.scaled(c);
    EXPECT_NEAR(relative_forgetting(ca).mean, relative_forgetting(a).mean, 1e-12);
    if (a.tasks() >= 2) {
      EXPECT_NEAR(forgetting_measure(ca).mean, c * forgetting_measure(a).mean, 1e-12);
    }
  }
}

TEST(Bound, HoldsOnRandomMatricesAgainstOracle) {
  Rng rng(12);
  for (int t = 0; t < 300; ++t) {
    const AccuracyMatrix a = random_matrix(rng, 8);
    const BoundReport r = bound_check(a);
    EXPECT_TRUE(r.holds);
    for (const BoundCell& c : r.cells) {
      const double l = a.at(c.task, c.task);
      const double slack = a.at(c.task, c.after) - l * (1 - rf_oracle(a, c.task, c.after));
      EXPECT_NEAR(c.slack, slack, 1e-13);
      EXPECT_GE(slack, -1e-12);
      bool diag_max = true;
      for (std::size_t k = c.task; k <= c.after; ++k) diag_max &= a.at(c.task, k) <= l;
      EXPECT_EQ(c.equality_expected, diag_max);
      if (diag_max) {
        EXPECT_NEAR(slack, 0.0, 1e-12);
      }
    }
  }
}

TEST(Bound, StrictWhenAccuracyPeaksLater) {
  const AccuracyMatrix a = AccuracyMatrix::from_rows({{0.4, 0.8, 0.6}, {0.5, 0.5}, {0.5}});
  const BoundReport r = bound_check(a);
  EXPECT_TRUE(r.holds);
  const auto cell = std::find_if(r.cells.begin(), r.cells.end(),
                                 [](const BoundCell& c) { return c.task == 0 && c.after == 2; });
  ASSERT_NE(cell, r.cells.end());
  EXPECT_FALSE(cell->equality_expected);
  EXPECT_NEAR(cell->slack, 0.6 - 0.4 * 0.75, 1e-15);
}

TEST(Csv, RoundTrip) {
  const AccuracyMatrix decay = decaying_matrix();
  const std::string text = matrix_to_csv(decay);
  EXPECT_EQ(text.substr(0, text.find('\n')), "task,i1,i2,i3,i4,i5");
  EXPECT_NE(text.find("\n2,,0.250000,"), std::string::npos);
  EXPECT_EQ(matrix_from_csv(text), decay);

  const auto dir = testing::scratch_dir("csv");
  write_matrix_csv(decay, dir / "m.csv");
  EXPECT_EQ(read_matrix_csv(dir / "m.csv"), decay);
}

void expect_parse_error(const std::string& text, const std::string& fragment) {
  try {
    matrix_from_csv(text, "m.csv");
    FAIL() << "no error for:\n" << text;
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(Csv, ErrorsNameTheLine) {
  expect_parse_error("", "m.csv:1:");
  expect_parse_error("tsk,i1\n1,0.5\n", "m.csv:1:");
  expect_parse_error("task,i1,i2\n1,0.5,0.4\n2,0.3,0.4\n", "m.csv:3:");
  expect_parse_error("task,i1,i2\n1,0.5,x\n2,,0.4\n", "m.csv:2:");
  expect_parse_error("task,i1,i2\n1,0.5,1.4\n2,,0.4\n", "outside [0, 1]");
  expect_parse_error("task,i1,i2\n1,0.5\n2,,0.4\n", "m.csv:2:");
  expect_parse_error("task,i1,i2\n1,0.5,0.4\n", "task rows");
  EXPECT_THROW(read_matrix_csv("/nonexistent/ccldc.csv"), ParseError);
}

TEST(Entropy, RowEntropyMatchesHandValues) {
  const Tensor z = Tensor::from_values({2, 4}, {0, 0, 0, 0, 100, 0, 0, 0});
  const auto h = row_entropy(z);
  EXPECT_NEAR(h[0], std::log(4.0), 1e-15);
  EXPECT_NEAR(h[1], 0.0, 1e-30);
  const Tensor two = Tensor::from_values({1, 2}, {0, std::log(3.0)});
  EXPECT_NEAR(row_entropy(two)[0], -(0.25 * std::log(0.25) + 0.75 * std::log(0.75)), 1e-15);
}

std::vector<Example> flat_examples(std::size_t n, std::size_t side, std::uint64_t seed, int classes) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    Image img(ImageShape{1, side, side});
    for (double& p : img.pixels) p = rng.uniform(0.0, 1.0);
    out.push_back({img, static_cast<int>(i % static_cast<std::size_t>(classes))});
  }
  return out;
}

TEST(Entropy, ZeroHeadGivesLogK) {
  Network net = Network::init(make_arch(64, {8}, 5), 1);
  for (double& v : Tensor(net.layers().back().weight).mutable_values()) v = 0.0;
  const auto ex = flat_examples(20, 8, 2, 5);
  EXPECT_NEAR(prediction_entropy(net, ex), std::log(5.0), 1e-12);
}

TEST(Entropy, ByStageStartsAtRawEntropy) {
  const Network net = Network::init(make_arch(64, {8}, 5), 3);
  const auto ex = flat_examples(30, 8, 4, 5);
  ChainConfig chain;
  chain.stages = 3;
  const auto stages = entropy_by_stage(net, ex, chain, 9);
  ASSERT_EQ(stages.size(), 4u);
  EXPECT_NEAR(stages[0], prediction_entropy(net, ex), 1e-12);
  EXPECT_EQ(stages, entropy_by_stage(net, ex, chain, 9));
}

// Without hidden layers the features are an isotropic affine map of the
// pixels, so nearest-mean in pixel space gives the same answer.
double ncm_pixel_oracle(const std::vector<Example>& ref, const std::vector<Example>& test) {
  std::map<int, std::pair<std::vector<double>, int>> sums;
  for (const Example& e : ref) {
    auto& [acc, n] = sums[e.label];
    acc.resize(e.image.pixels.size(), 0.0);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += e.image.pixels[i];
    ++n;
  }
  int correct = 0;
  for (const Example& e : test) {
    int best = -1;
    double best_d = 1e300;
    for (const auto& [label, s] : sums) {
      double d = 0;
      for (std::size_t i = 0; i < s.first.size(); ++i) {
        const double diff = e.image.pixels[i] - s.first[i] / s.second;
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = label;
      }
    }
    correct += best == e.label;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

TEST(Ncm, MatchesPixelSpaceOracle) {
  const Network net = Network::init(make_arch(16, {}, 3), 5);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ref = flat_examples(30, 4, 10 + seed, 3);
    const auto test = flat_examples(40, 4, 20 + seed, 3);
    EXPECT_NEAR(ncm_evaluate(net, ref, test), ncm_pixel_oracle(ref, test), 1e-15);
  }
}

TEST(Ncm, SeparatedClassesClassifyPerfectly) {
  const Network net = Network::init(make_arch(16, {12}, 2), 6);
  std::vector<Example> ref, test;
  for (int i = 0; i < 10; ++i) {
    ref.push_back({Image(ImageShape{1, 4, 4}, 0.1 + 0.001 * i), 0});
    ref.push_back({Image(ImageShape{1, 4, 4}, 0.9 - 0.001 * i), 1});
  }
  test.push_back({Image(ImageShape{1, 4, 4}, 0.12), 0});
  test.push_back({Image(ImageShape{1, 4, 4}, 0.88), 1});
  EXPECT_EQ(ncm_evaluate(net, ref, test), 1.0);
}

TEST(Ncm, MissingReferenceClassIsNamed) {
  const Network net = Network::init(make_arch(16, {}, 3), 5);
  const auto ref = flat_examples(6, 4, 1, 2);
  std::vector<Example> test{{Image(ImageShape{1, 4, 4}, 0.5), 2}};
  try {
    ncm_evaluate(net, ref, test);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("class 2"), std::string::npos);
  }
}

TEST(Accuracy, FractionCorrect) {
  const std::vector<int> p{0, 1, 2, 2}, y{0, 1, 1, 2};
  EXPECT_EQ(accuracy(p, y), 0.75);
  EXPECT_THROW(accuracy(p, std::vector<int>{0}), DimensionError);
}

}  // namespace
}  // namespace ccldc
