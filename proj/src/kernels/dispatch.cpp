#include <cstdlib>
#include <string>

#include "ccldc/errors.hpp"
#include "internal.hpp"

namespace ccldc::kernels {

namespace {

const KernelTable* find_table(std::string_view name) {
  for (const KernelTable* t : available()) {
    if (t->name == name) return t;
  }
  return nullptr;
}

const KernelTable* initial_table() {
  if (const char* forced = std::getenv("CCLDC_KERNELS"); forced != nullptr && *forced != '\0') {
    if (const KernelTable* t = find_table(forced)) return t;
    throw ConfigError(std::string("CCLDC_KERNELS: kernel variant '") + forced +
                      "' is not available on this machine");
  }
  return available().back();
}

const KernelTable*& current() {
  static const KernelTable* table = initial_table();
  return table;
}

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string("kernels::") + what + ": length mismatch " +
                         std::to_string(a) + " vs " + std::to_string(b));
  }
}

}  // namespace

const KernelTable* avx2_table() {
#if defined(CCLDC_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2") != 0;
  return supported ? &detail::avx2_table_impl() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(CCLDC_HAVE_NEON)
  return &detail::neon_table_impl();
#else
  return nullptr;
#endif
}

std::vector<const KernelTable*> available() {
  std::vector<const KernelTable*> tables{&scalar_table()};
  if (const KernelTable* t = avx2_table()) tables.push_back(t);
  if (const KernelTable* t = neon_table()) tables.push_back(t);
  return tables;
}

const KernelTable& active() { return *current(); }

void select(std::string_view name) {
  const KernelTable* t = find_table(name);
  if (t == nullptr) {
    throw ConfigError("kernel variant '" + std::string(name) + "' is not available");
  }
  current() = t;
}

void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c) {
  check_same(a.size(), m * k, "gemm(a)");
  check_same(b.size(), k * n, "gemm(b)");
  check_same(c.size(), m * n, "gemm(c)");
  active().gemm(m, n, k, a.data(), b.data(), c.data());
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  check_same(a.size(), b.size(), "add");
  check_same(a.size(), out.size(), "add");
  active().add(a.size(), a.data(), b.data(), out.data());
}

void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  check_same(a.size(), b.size(), "sub");
  check_same(a.size(), out.size(), "sub");
  active().sub(a.size(), a.data(), b.data(), out.data());
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  check_same(a.size(), b.size(), "mul");
  check_same(a.size(), out.size(), "mul");
  active().mul(a.size(), a.data(), b.data(), out.data());
}

void scale(double s, std::span<const double> a, std::span<double> out) {
  check_same(a.size(), out.size(), "scale");
  active().scale(a.size(), s, a.data(), out.data());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_same(x.size(), y.size(), "axpy");
  active().axpy(x.size(), alpha, x.data(), y.data());
}

double sum(std::span<const double> x) { return active().sum(x.size(), x.data()); }

void transpose(std::size_t rows, std::size_t cols, std::span<const double> in,
               std::span<double> out) {
  check_same(in.size(), rows * cols, "transpose");
  check_same(out.size(), rows * cols, "transpose");
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = in[r * cols + c];
  }
}

}  // namespace ccldc::kernels
