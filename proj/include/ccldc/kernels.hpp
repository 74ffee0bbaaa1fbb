#pragma once

// Dense double-precision inner loops used by the tensor core.
//
// Every variant in a KernelTable produces results bit-identical to the scalar
// reference: elementwise kernels trivially, gemm by vectorizing only across
// output columns (each output keeps its sequential k-order accumulation), and
// sum by fixing a four-way striped reduction order that the scalar reference
// reproduces.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace ccldc::kernels {

struct KernelTable {
  std::string_view name;

  /// c[m x n] = a[m x k] * b[k x n], all row-major.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c);
  void (*add)(std::size_t n, const double* a, const double* b, double* out);
  void (*sub)(std::size_t n, const double* a, const double* b, double* out);
  void (*mul)(std::size_t n, const double* a, const double* b, double* out);
  void (*scale)(std::size_t n, double s, const double* a, double* out);
  /// y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  void (*relu)(std::size_t n, const double* x, double* out);
  /// out = x > 0 ? g : 0
  void (*relu_backward)(std::size_t n, const double* x, const double* g, double* out);
  /// ((s0 + s1) + (s2 + s3)) + tail, where s_l sums x[4t + l] in order.
  double (*sum)(std::size_t n, const double* x);
};

const KernelTable& scalar_table();
/// nullptr when not compiled in or not supported by the running CPU.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// Every table usable on this machine, scalar first.
std::vector<const KernelTable*> available();

/// Table used by the tensor core. Picks the widest supported variant at first
/// use unless CCLDC_KERNELS=<name> is set in the environment.
const KernelTable& active();

/// Force a variant by name ("scalar", "avx2", "neon"). Throws ConfigError when
/// the variant is unavailable.
void select(std::string_view name);

// Span conveniences over the active table.
void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c);
void add(std::span<const double> a, std::span<const double> b, std::span<double> out);
void sub(std::span<const double> a, std::span<const double> b, std::span<double> out);
void mul(std::span<const double> a, std::span<const double> b, std::span<double> out);
void scale(double s, std::span<const double> a, std::span<double> out);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double sum(std::span<const double> x);

/// out[c x r] = in[r x c]^T
void transpose(std::size_t rows, std::size_t cols, std::span<const double> in,
               std::span<double> out);

}  // namespace ccldc::kernels
