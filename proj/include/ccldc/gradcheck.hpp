#pragma once

// Central finite-difference checks of analytic gradients.
//
// A case builds a fresh instance from an Rng: leaf inputs plus a function
// mapping them to a scalar. Inputs listed in `teacher` must end up with an
// exactly zero (or absent) gradient; all others are compared against
//   (f(x + h e_i) - f(x - h e_i)) / 2h
// with the norm-wise relative error ||g - g_fd|| / max(||g||, ||g_fd||),
// falling back to the absolute error when both norms are below 1e-8.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ccldc/rng.hpp"
#include "ccldc/tensor.hpp"

namespace ccldc {

struct GradInstance {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> teacher;  // indices into inputs
  std::function<Tensor(const std::vector<Tensor>&)> loss;
  /// Differenced instead of `loss` when set. Losses that stop gradients
  /// through their own inputs (self-distillation) supply the same function
  /// with the stopped values frozen at the unperturbed point; both must agree
  /// in value there.
  std::function<Tensor(const std::vector<Tensor>&)> fd_loss;
};

struct GradCase {
  std::string name;
  std::function<GradInstance(Rng&)> make;
};

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-6;
  std::size_t instances = 20;
  std::uint64_t seed = 2024;
};

struct GradCaseResult {
  std::string name;
  std::size_t instances = 0;
  bool passed = true;
  double max_error = 0.0;
  double max_teacher_grad = 0.0;
  std::string message;  // first failure
};

struct GradCheckReport {
  std::vector<GradCaseResult> cases;
  bool all_passed() const;
};

/// Every built-in differentiable op (one case per name in differentiable_ops())
/// followed by every loss composition.
std::vector<GradCase> builtin_grad_cases();

GradCaseResult check_case(const GradCase& c, const GradCheckOptions& opt = {});
GradCheckReport run_gradcheck(const std::vector<GradCase>& cases, const GradCheckOptions& opt = {});

}  // namespace ccldc
