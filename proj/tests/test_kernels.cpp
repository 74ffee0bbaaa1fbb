#include <gtest/gtest.h>

#include <cstring>
#include <string>

#include "ccldc/errors.hpp"
#include "ccldc/kernels.hpp"
#include "ccldc/nn.hpp"
#include "ccldc/rng.hpp"
#include "fixtures.hpp"

namespace ccldc {
namespace {

using kernels::KernelTable;

std::vector<double> randvec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * 3.0;
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Restores the active kernel table after a test that switches it.
struct KernelScope {
  std::string saved{kernels::active().name};
  ~KernelScope() { kernels::select(saved); }
};

TEST(Kernels, ScalarIsAlwaysAvailableFirst) {
  const auto tables = kernels::available();
  ASSERT_FALSE(tables.empty());
  EXPECT_EQ(tables.front()->name, "scalar");
}

TEST(Kernels, SelectUnknownVariantThrows) {
  EXPECT_THROW(kernels::select("sse9"), ConfigError);
}

TEST(Kernels, ScalarGemmMatchesNaiveTripleLoop) {
  Rng rng(1);
  const std::size_t m = 5, n = 7, k = 3;
  auto a = randvec(rng, m * k), b = randvec(rng, k * n);
  std::vector<double> c(m * n);
  kernels::scalar_table().gemm(m, n, k, a.data(), b.data(), c.data());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      EXPECT_EQ(c[i * n + j], s);
    }
  }
}

TEST(Kernels, ScalarSumUsesFourWayStripes) {
  std::vector<double> x{1e16, 1.0, -1e16, 1.0, 3.0, 5.0, 1e16, 1.0, 0.5};
  // stripes over the two full blocks, then the 0.5 tail.
  const double s0 = 1e16 + 3.0, s1 = 1.0 + 5.0, s2 = -1e16 + 1e16, s3 = 1.0 + 1.0;
  const double expect = ((s0 + s1) + (s2 + s3)) + 0.5;
  EXPECT_EQ(kernels::scalar_table().sum(x.size(), x.data()), expect);
}

class KernelEquivalence : public ::testing::TestWithParam<std::size_t> {};

TEST_P(KernelEquivalence, EveryVariantBitIdenticalToScalar) {
  const std::size_t n = GetParam();
  const KernelTable& ref = kernels::scalar_table();
  for (const KernelTable* t : kernels::available()) {
    SCOPED_TRACE(std::string(t->name));
    Rng rng(100 + n);
    auto a = randvec(rng, n), b = randvec(rng, n);
    for (std::size_t i = 0; i < n; i += 3) a[i] = -std::abs(a[i]);  // relu has work to do
    std::vector<double> r1(n), r2(n);

    ref.add(n, a.data(), b.data(), r1.data());
    t->add(n, a.data(), b.data(), r2.data());
    EXPECT_TRUE(bit_equal(r1, r2)) << "add";
    ref.sub(n, a.data(), b.data(), r1.data());
    t->sub(n, a.data(), b.data(), r2.data());
    EXPECT_TRUE(bit_equal(r1, r2)) << "sub";
    ref.mul(n, a.data(), b.data(), r1.data());
    t->mul(n, a.data(), b.data(), r2.data());
    EXPECT_TRUE(bit_equal(r1, r2)) << "mul";
    ref.scale(n, 0.37, a.data(), r1.data());
    t->scale(n, 0.37, a.data(), r2.data());
    EXPECT_TRUE(bit_equal(r1, r2)) << "scale";
    ref.relu(n, a.data(), r1.data());
    t->relu(n, a.data(), r2.data());
    EXPECT_TRUE(bit_equal(r1, r2)) << "relu";
    ref.relu_backward(n, a.data(), b.data(), r1.data());
    t->relu_backward(n, a.data(), b.data(), r2.data());
    EXPECT_TRUE(bit_equal(r1, r2)) << "relu_backward";

    r1 = b;
    r2 = b;
    ref.axpy(n, -1.3, a.data(), r1.data());
    t->axpy(n, -1.3, a.data(), r2.data());
    EXPECT_TRUE(bit_equal(r1, r2)) << "axpy";

    const double s1 = ref.sum(n, a.data()), s2 = t->sum(n, a.data());
    EXPECT_EQ(std::memcmp(&s1, &s2, sizeof(double)), 0) << "sum";
  }
}

TEST_P(KernelEquivalence, GemmBitIdenticalAcrossShapes) {
  const std::size_t n = GetParam();
  for (const KernelTable* t : kernels::available()) {
    SCOPED_TRACE(std::string(t->name));
    for (std::size_t m : {std::size_t{1}, std::size_t{3}, std::size_t{8}}) {
      for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{17}}) {
        Rng rng(m * 1000 + k * 10 + n);
        auto a = randvec(rng, m * k), b = randvec(rng, k * n);
        std::vector<double> c1(m * n), c2(m * n);
        kernels::scalar_table().gemm(m, n, k, a.data(), b.data(), c1.data());
        t->gemm(m, n, k, a.data(), b.data(), c2.data());
        EXPECT_TRUE(bit_equal(c1, c2)) << "gemm m=" << m << " k=" << k << " n=" << n;
      }
    }
  }
}

// Lengths straddle every vector width and remainder.
INSTANTIATE_TEST_SUITE_P(Lengths, KernelEquivalence,
                         ::testing::Values(0, 1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 129));

TEST(Kernels, NetworkForwardAndTrainingIdenticalUnderEveryVariant) {
  KernelScope scope;
  const Architecture arch = testing::make_arch(20, {16, 8}, 4);
  std::vector<std::vector<double>> logits, params;
  for (const KernelTable* t : kernels::available()) {
    kernels::select(t->name);
    Network net = Network::init(arch, 9);
    Optimizer opt(testing::sgd(0.1, 0.9));
    Rng rng(3);
    const Tensor x = testing::random_tensor(rng, {6, 20});
    for (int step = 0; step < 3; ++step) {
      net.zero_grad();
      sum(net.forward(x)).backward();
      opt.step(net);
    }
    logits.push_back(testing::to_vec(net.forward(x)));
    params.push_back(net.flat_parameters());
  }
  for (std::size_t i = 1; i < logits.size(); ++i) {
    EXPECT_TRUE(bit_equal(logits[0], logits[i]));
    EXPECT_TRUE(bit_equal(params[0], params[i]));
  }
}

TEST(Kernels, SpanWrappersRejectLengthMismatch) {
  std::vector<double> a(3), b(4), c(3);
  EXPECT_THROW(kernels::add(a, b, c), DimensionError);
  EXPECT_THROW(kernels::gemm(2, 2, 2, a, b, c), DimensionError);
}

TEST(Kernels, TransposeSwapsIndices) {
  std::vector<double> in{1, 2, 3, 4, 5, 6}, out(6);
  kernels::transpose(2, 3, in, out);
  EXPECT_EQ(out, (std::vector<double>{1, 4, 2, 5, 3, 6}));
}

}  // namespace
}  // namespace ccldc
