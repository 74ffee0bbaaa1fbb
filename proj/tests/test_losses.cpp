#include <gtest/gtest.h>

#include <cmath>

#include "ccldc/errors.hpp"
#include "ccldc/losses.hpp"
#include "fixtures.hpp"

namespace ccldc {
namespace {

using testing::random_tensor;

// ---- plain-double oracle ---------------------------------------------------

using Rows = std::vector<std::vector<double>>;

Rows rows_of(const Tensor& t) {
  Rows r(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) r[i][j] = t.at(i, j);
  }
  return r;
}

std::vector<double> log_probs(const std::vector<double>& z, double tau) {
  double mx = z[0];
  for (double v : z) mx = std::max(mx, v / tau);
  double s = 0;
  for (double v : z) s += std::exp(v / tau - mx);
  std::vector<double> out;
  for (double v : z) out.push_back(v / tau - mx - std::log(s));
  return out;
}

double ce_oracle(const Tensor& logits, const std::vector<int>& y) {
  const Rows r = rows_of(logits);
  double s = 0;
  for (std::size_t i = 0; i < r.size(); ++i) s -= log_probs(r[i], 1.0)[y[i]];
  return s / static_cast<double>(r.size());
}

double kl_oracle(const Tensor& student, const Tensor& teacher, double tau, bool teacher_first = true) {
  const Rows s = rows_of(student), t = rows_of(teacher);
  double total = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto ls = log_probs(s[i], tau), lt = log_probs(t[i], tau);
    if (!teacher_first) std::swap(ls, lt);
    for (std::size_t k = 0; k < ls.size(); ++k) total += std::exp(lt[k]) * (lt[k] - ls[k]);
  }
  return total / static_cast<double>(s.size());
}

struct Chains {
  std::vector<Tensor> student, teacher;
  std::vector<int> labels;
};

Chains random_chains(std::uint64_t seed, std::size_t stages = 3, std::size_t batch = 6,
                     std::size_t k = 5, bool grad = true) {
  Rng rng(seed);
  Chains c;
  for (std::size_t i = 0; i <= stages; ++i) {
    c.student.push_back(random_tensor(rng, {batch, k}, 2.0, grad));
    c.teacher.push_back(random_tensor(rng, {batch, k}, 2.0, grad));
  }
  for (std::size_t b = 0; b < batch; ++b) c.labels.push_back(static_cast<int>(rng.index(k)));
  return c;
}

LossWeights weights(double l1, double l2, double tau = 1.0) {
  LossWeights w;
  w.lambda1 = l1;
  w.lambda2 = l2;
  w.tau = tau;
  return w;
}

// Hand sum of the chain part for a scheme variant, from the oracle.
double dc_oracle(const Chains& c, const LossWeights& w, SchemeVariant v) {
  double ce = 0, kl = 0;
  for (std::size_t i = 1; i < c.student.size(); ++i) {
    ce += ce_oracle(c.student[i], c.labels);
    switch (v) {
      case SchemeVariant::hard_to_easy: kl += kl_oracle(c.student[i - 1], c.teacher[i], w.tau); break;
      case SchemeVariant::easy_to_hard: kl += kl_oracle(c.student[i], c.teacher[i - 1], w.tau); break;
      case SchemeVariant::same_difficulty: kl += kl_oracle(c.student[i], c.teacher[i], w.tau); break;
    }
  }
  return w.lambda1 * ce + w.lambda2 * kl;
}

// ---- cross entropy ---------------------------------------------------------

TEST(CrossEntropy, ReferenceValues) {
  const std::vector<int> y0{0};
  EXPECT_NEAR(cross_entropy(Tensor::from_values({1, 4}, {2, 2, 2, 2}), y0).item(), std::log(4.0), 1e-15);
  EXPECT_NEAR(cross_entropy(Tensor::from_values({1, 3}, {50, 0, 0}), y0).item(), 0.0, 1e-20);
  EXPECT_NEAR(cross_entropy(Tensor::from_values({1, 2}, {1, 0}), y0).item(),
              -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-15);
}

TEST(CrossEntropy, MatchesOracleOnRandomLogits) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Tensor z = random_tensor(rng, {7, 4}, 3.0);
    std::vector<int> y;
    for (int i = 0; i < 7; ++i) y.push_back(static_cast<int>(rng.index(4)));
    EXPECT_NEAR(cross_entropy(z, y).item(), ce_oracle(z, y), 1e-13);
  }
}

TEST(CrossEntropy, RejectsBadLabels) {
  const Tensor z = Tensor::zeros({2, 3});
  EXPECT_THROW(cross_entropy(z, std::vector<int>{0}), DimensionError);
  EXPECT_THROW(cross_entropy(z, std::vector<int>{0, 3}), ContractError);
  EXPECT_THROW(cross_entropy(z, std::vector<int>{-1, 0}), ContractError);
}

// ---- soft KL ---------------------------------------------------------------

TEST(SoftKl, IdenticalLogitsGiveZero) {
  Rng rng(1);
  const Tensor z = random_tensor(rng, {5, 6}, 4.0);
  EXPECT_NEAR(soft_kl(z, z, 1.0).item(), 0.0, 1e-12);
  EXPECT_NEAR(soft_kl(z, z, 2.5, KlDirection::student_teacher).item(), 0.0, 1e-12);
}

TEST(SoftKl, ReferenceValue) {
  const Tensor teacher = Tensor::from_values({1, 2}, {0, 0});            // (0.5, 0.5)
  const Tensor student = Tensor::from_values({1, 2}, {0, std::log(3.0)});  // (0.25, 0.75)
  const double expect = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  EXPECT_NEAR(soft_kl(student, teacher, 1.0).item(), expect, 1e-15);
  EXPECT_NEAR(expect, 0.1438, 5e-5);
}

TEST(SoftKl, NonNegativeAndMatchesOracleBothDirections) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const Tensor s = random_tensor(rng, {4, 5}, 3.0), te = random_tensor(rng, {4, 5}, 3.0);
    const double tau = rng.uniform(0.3, 4.0);
    const double fwd = soft_kl(s, te, tau).item();
    const double rev = soft_kl(s, te, tau, KlDirection::student_teacher).item();
    EXPECT_GE(fwd, 0.0);
    EXPECT_GE(rev, 0.0);
    EXPECT_NEAR(fwd, kl_oracle(s, te, tau), 1e-12);
    EXPECT_NEAR(rev, kl_oracle(s, te, tau, false), 1e-12);
  }
}

TEST(SoftKl, TemperatureEqualsPrescaledLogits) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const Tensor s = random_tensor(rng, {3, 6}, 3.0), te = random_tensor(rng, {3, 6}, 3.0);
    const double tau = rng.uniform(0.5, 5.0);
    EXPECT_EQ(soft_kl(s, te, tau).item(),
              soft_kl(div_scalar(s, tau), div_scalar(te, tau), 1.0).item());
  }
}

TEST(SoftKl, TeacherGetsNoGradient) {
  Rng rng(5);
  Tensor s = random_tensor(rng, {3, 4}, 1.0, true), t = random_tensor(rng, {3, 4}, 1.0, true);
  soft_kl(s, t, 2.0).backward();
  EXPECT_TRUE(s.has_grad());
  for (double g : t.grad_or_zero()) EXPECT_EQ(g, 0.0);
}

TEST(SoftKl, Validation) {
  const Tensor a = Tensor::zeros({2, 3});
  EXPECT_THROW(soft_kl(a, a, 0.0), ParameterError);
  EXPECT_THROW(soft_kl(a, Tensor::zeros({2, 4}), 1.0), DimensionError);
  EXPECT_THROW(weights(0.5, 2.0, -1.0).validate(), ParameterError);
}

TEST(SoftKl, FiniteForExtremeLogits) {
  const Tensor s = Tensor::from_values({1, 3}, {800, -800, 0});
  const Tensor t = Tensor::from_values({1, 3}, {-800, 800, 0});
  EXPECT_TRUE(std::isfinite(soft_kl(s, t, 1.0).item()));
  EXPECT_TRUE(std::isfinite(cross_entropy(s, std::vector<int>{1}).item()));
}

// ---- CCL --------------------------------------------------------------------

TEST(CclLoss, LinearCombination) {
  Rng rng(6);
  const Tensor s = random_tensor(rng, {4, 3}), t = random_tensor(rng, {4, 3});
  const std::vector<int> y{0, 1, 2, 1};
  const LossWeights w = weights(0.5, 2.0);
  EXPECT_NEAR(ccl_loss(s, t, y, w).item(), 0.5 * ce_oracle(s, y) + 2.0 * kl_oracle(s, t, 1.0), 1e-13);
  EXPECT_EQ(ccl_loss(s, t, y, weights(0.5, 0.0)).item(), 0.5 * cross_entropy(s, y).item());
  EXPECT_NEAR(ccl_loss(s, s, y, w).item(), 0.5 * cross_entropy(s, y).item(), 1e-12);
  // CE = 1.0 and KL = 0.1 at lambda1 = 0.5, lambda2 = 2 combine to 0.7.
  EXPECT_NEAR(0.5 * 1.0 + 2.0 * 0.1, 0.7, 1e-15);
}

// ---- distillation chain ----------------------------------------------------

TEST(DcLoss, EmptyChainIsZero) {
  const Chains c = random_chains(1, 0);
  for (SchemeVariant v : {SchemeVariant::hard_to_easy, SchemeVariant::easy_to_hard, SchemeVariant::same_difficulty}) {
    EXPECT_EQ(dc_loss(c.student, c.teacher, c.labels, LossWeights{}, v).item(), 0.0);
  }
}

TEST(DcLoss, SameDifficultyVanishesForIdenticalPeers) {
  Chains c = random_chains(2);
  c.teacher = c.student;
  EXPECT_NEAR(chain_distillation(c.student, c.teacher, 1.0, SchemeVariant::same_difficulty,
                                 KlDirection::teacher_student).item(), 0.0, 1e-12);
  EXPECT_GT(chain_distillation(c.student, c.teacher, 1.0, SchemeVariant::hard_to_easy,
                               KlDirection::teacher_student).item(), 1e-3);
}

TEST(DcLoss, EachVariantMatchesHandSum) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Chains c = random_chains(seed);
    const LossWeights w = weights(0.5, 2.0, 1.0 + 0.25 * static_cast<double>(seed));
    for (SchemeVariant v : {SchemeVariant::hard_to_easy, SchemeVariant::easy_to_hard, SchemeVariant::same_difficulty}) {
      EXPECT_NEAR(dc_loss(c.student, c.teacher, c.labels, w, v).item(), dc_oracle(c, w, v), 1e-12)
          << to_string(v);
    }
  }
}

TEST(DcLoss, VariantsDiffer) {
  const Chains c = random_chains(3);
  const double a = dc_loss(c.student, c.teacher, c.labels, LossWeights{}, SchemeVariant::hard_to_easy).item();
  const double b = dc_loss(c.student, c.teacher, c.labels, LossWeights{}, SchemeVariant::easy_to_hard).item();
  const double d = dc_loss(c.student, c.teacher, c.labels, LossWeights{}, SchemeVariant::same_difficulty).item();
  EXPECT_NE(a, b);
  EXPECT_NE(a, d);
  EXPECT_NE(b, d);
}

TEST(DcLoss, MismatchedChainsRejected) {
  Chains c = random_chains(4);
  c.teacher.pop_back();
  EXPECT_THROW(dc_loss(c.student, c.teacher, c.labels, LossWeights{}, SchemeVariant::hard_to_easy),
               ContractError);
}

TEST(DcLoss, TeacherChainReceivesNoGradient) {
  const Chains c = random_chains(5);
  for (SchemeVariant v : {SchemeVariant::hard_to_easy, SchemeVariant::easy_to_hard, SchemeVariant::same_difficulty}) {
    dc_loss(c.student, c.teacher, c.labels, LossWeights{}, v).backward();
    for (const Tensor& t : c.teacher) {
      for (double g : t.grad_or_zero()) EXPECT_EQ(g, 0.0);
    }
  }
}

// ---- full composition --------------------------------------------------------

TEST(CclDcLoss, ZeroWeightsReturnBaselineExactly) {
  const Chains c = random_chains(6);
  Rng rng(1);
  const Tensor base = cross_entropy(random_tensor(rng, {6, 5}), c.labels);
  const auto terms = ccl_dc_loss(base, c.student, c.teacher, c.labels, weights(0, 0), SchemeVariant::hard_to_easy);
  EXPECT_EQ(terms.total.item(), base.item());
}

TEST(CclDcLoss, EqualsIndependentlySummedParts) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Chains c = random_chains(100 + seed);
    Rng rng(seed);
    const Tensor base = cross_entropy(random_tensor(rng, {6, 5}), c.labels);
    const LossWeights w = weights(0.5, 2.0, 1.5);
    for (SchemeVariant v : {SchemeVariant::hard_to_easy, SchemeVariant::easy_to_hard, SchemeVariant::same_difficulty}) {
      const auto terms = ccl_dc_loss(base, c.student, c.teacher, c.labels, w, v);
      double cls = 0;
      for (const Tensor& s : c.student) cls += ce_oracle(s, c.labels);
      const double ccl = kl_oracle(c.student[0], c.teacher[0], w.tau);
      const double dc_kl = (dc_oracle(c, w, v) - w.lambda1 * (cls - ce_oracle(c.student[0], c.labels))) / w.lambda2;
      EXPECT_NEAR(terms.classification.item(), cls, 1e-12);
      EXPECT_NEAR(terms.ccl.item(), ccl, 1e-12);
      EXPECT_NEAR(terms.dc.item(), dc_kl, 1e-12);
      EXPECT_NEAR(terms.total.item(), base.item() + w.lambda1 * cls + w.lambda2 * (ccl + dc_kl), 1e-12);
    }
  }
}

TEST(CclDcLoss, LinearInLambdaOne) {
  const Chains c = random_chains(7);
  const Tensor base = Tensor::scalar(0.3);
  const auto a = ccl_dc_loss(base, c.student, c.teacher, c.labels, weights(0.5, 2.0), SchemeVariant::hard_to_easy);
  const auto b = ccl_dc_loss(base, c.student, c.teacher, c.labels, weights(1.0, 2.0), SchemeVariant::hard_to_easy);
  EXPECT_NEAR(b.total.item() - a.total.item(), 0.5 * a.classification.item(), 1e-12);
}

TEST(CclDcLoss, IdenticalPeersHaveZeroCclTerm) {
  Chains c = random_chains(8);
  c.teacher = c.student;
  const auto t = ccl_dc_loss(Tensor::scalar(0.0), c.student, c.teacher, c.labels, LossWeights{},
                             SchemeVariant::hard_to_easy);
  EXPECT_NEAR(t.ccl.item(), 0.0, 1e-12);
}

// ---- single-model variants -------------------------------------------------

TEST(SdcLoss, EmptyChainIsZero) {
  const Chains c = random_chains(9, 0);
  EXPECT_EQ(sdc_loss(c.student, c.labels, LossWeights{}, SchemeVariant::hard_to_easy).item(), 0.0);
}

TEST(SdcLoss, EqualsDcLossAgainstFrozenCopyOfItself) {
  const Chains c = random_chains(10);
  std::vector<Tensor> frozen;
  for (const Tensor& s : c.student) frozen.push_back(Tensor::from_values(s.shape(), testing::to_vec(s)));
  const double sdc = sdc_loss(c.student, c.labels, LossWeights{}, SchemeVariant::hard_to_easy).item();
  const double dc = dc_loss(c.student, frozen, c.labels, LossWeights{}, SchemeVariant::hard_to_easy).item();
  EXPECT_EQ(sdc, dc);
}

TEST(SdcLoss, GradientOnlyThroughStudentSide) {
  const Chains a = random_chains(11);
  const Chains b = random_chains(11);
  std::vector<Tensor> frozen;
  for (const Tensor& s : b.student) frozen.push_back(s.detach());
  sdc_loss(a.student, a.labels, LossWeights{}, SchemeVariant::hard_to_easy).backward();
  dc_loss(b.student, frozen, b.labels, LossWeights{}, SchemeVariant::hard_to_easy).backward();
  for (std::size_t i = 0; i < a.student.size(); ++i) {
    EXPECT_EQ(a.student[i].grad_or_zero(), b.student[i].grad_or_zero()) << "stage " << i;
  }
}

TEST(UntrainedDistill, ComposesCeAndKl) {
  Rng rng(12);
  const Tensor s = random_tensor(rng, {5, 4}, 2.0);
  const Tensor flat = Tensor::zeros({5, 4});
  const std::vector<int> y{0, 1, 2, 3, 0};
  EXPECT_EQ(untrained_distill_loss(s, flat, y, weights(0.5, 0.0)).item(), cross_entropy(s, y).item());
  const double full = untrained_distill_loss(s, flat, y, weights(0.5, 2.0)).item();
  EXPECT_GT(full, cross_entropy(s, y).item());
  EXPECT_NEAR(full, ce_oracle(s, y) + 2.0 * kl_oracle(s, flat, 1.0), 1e-12);
}

TEST(Multiview, SumsWeightedCrossEntropy) {
  const Chains c = random_chains(13);
  double hand = 0;
  for (const Tensor& s : c.student) hand += ce_oracle(s, c.labels);
  EXPECT_NEAR(multiview_loss(c.student, c.labels, 0.5).item(), 0.5 * hand, 1e-12);
  const Chains one = random_chains(14, 0);
  EXPECT_EQ(multiview_loss(one.student, one.labels, 0.5).item(),
            0.5 * cross_entropy(one.student[0], one.labels).item());
}

TEST(Multiview, MatchesCclDcWithoutDistillation) {
  const Chains c = random_chains(15);
  const Tensor base = Tensor::scalar(0.25);
  const auto t = ccl_dc_loss(base, c.student, c.teacher, c.labels, weights(0.5, 0.0), SchemeVariant::hard_to_easy);
  EXPECT_NEAR(t.total.item(), 0.25 + multiview_loss(c.student, c.labels, 0.5).item(), 1e-14);
}

TEST(LossNames, RoundTrip) {
  for (SchemeVariant v : {SchemeVariant::hard_to_easy, SchemeVariant::easy_to_hard, SchemeVariant::same_difficulty}) {
    EXPECT_EQ(scheme_from_string(to_string(v)), v);
  }
  for (KlDirection d : {KlDirection::teacher_student, KlDirection::student_teacher}) {
    EXPECT_EQ(kl_direction_from_string(to_string(d)), d);
  }
  EXPECT_THROW(scheme_from_string("random"), ConfigError);
}

}  // namespace
}  // namespace ccldc
