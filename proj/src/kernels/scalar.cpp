#include <algorithm>

#include "internal.hpp"

namespace ccldc::kernels {

namespace {

void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                 double* c) {
  std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] = crow[j] + av * brow[j];
    }
  }
}

void add_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(std::size_t n, const double* a, const double* b, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar(std::size_t n, double s, const double* a, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = s * a[i];
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + alpha * x[i];
}

void relu_scalar(std::size_t n, const double* x, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_scalar(std::size_t n, const double* x, const double* g, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

double sum_scalar(std::size_t n, const double* x) {
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s[0] = s[0] + x[i];
    s[1] = s[1] + x[i + 1];
    s[2] = s[2] + x[i + 2];
    s[3] = s[3] + x[i + 3];
  }
  double total = (s[0] + s[1]) + (s[2] + s[3]);
  for (; i < n; ++i) total = total + x[i];
  return total;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",    gemm_scalar, add_scalar,          sub_scalar, mul_scalar,
      scale_scalar, axpy_scalar, relu_scalar, relu_backward_scalar, sum_scalar,
  };
  return table;
}

}  // namespace ccldc::kernels
