#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ccldc/metrics.hpp"
#include "ccldc/nn.hpp"
#include "ccldc/rng.hpp"
#include "ccldc/tensor.hpp"

namespace ccldc::testing {

// Two example learners: one loses 5 points per task, the other is the first halved.
inline AccuracyMatrix decaying_matrix() {
  return AccuracyMatrix::from_rows({{0.30, 0.25, 0.20, 0.15, 0.10},
                                    {0.25, 0.20, 0.15, 0.10},
                                    {0.20, 0.15, 0.10},
                                    {0.15, 0.10},
                                    {0.10}});
}

inline AccuracyMatrix halved_matrix() {
  return AccuracyMatrix::from_rows({{0.15, 0.125, 0.10, 0.075, 0.05},
                                    {0.125, 0.10, 0.075, 0.05},
                                    {0.10, 0.075, 0.05},
                                    {0.075, 0.05},
                                    {0.05}});
}

/// Random complete matrix with T in [1, max_tasks] and entries in [lo, 1].
inline AccuracyMatrix random_matrix(Rng& rng, std::size_t max_tasks, double lo = 0.01) {
  const std::size_t t = 1 + rng.index(max_tasks);
  AccuracyMatrix a(t);
  for (std::size_t j = 0; j < t; ++j) {
    for (std::size_t i = j; i < t; ++i) a.set(j, i, rng.uniform(lo, 1.0));
  }
  return a;
}

inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0, bool grad = false) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return Tensor::from_values(std::move(shape), std::move(v), grad);
}

inline std::vector<double> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }
inline std::vector<double> to_vec_grad(const Tensor& t) { return t.grad_or_zero(); }

inline Architecture make_arch(std::size_t in, std::vector<std::size_t> hidden, std::size_t k) {
  Architecture a;
  a.input_dim = in;
  a.hidden = std::move(hidden);
  a.num_classes = k;
  return a;
}

inline OptimizerConfig sgd(double lr, double momentum = 0.0, double wd = 0.0) {
  OptimizerConfig c;
  c.lr = lr;
  c.momentum = momentum;
  c.weight_decay = wd;
  return c;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ccldc_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ccldc::testing
