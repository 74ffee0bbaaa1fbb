#pragma once

// Plasticity/stability metrics over a lower-triangular accuracy matrix, plus
// entropy and nearest-class-mean diagnostics.
//
// Indices are 0-based: at(j, i) is the accuracy on task j after training
// through task i, defined for j <= i. Values are fractions in [0, 1].

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccldc/augment.hpp"
#include "ccldc/nn.hpp"
#include "ccldc/replay.hpp"

namespace ccldc {

class AccuracyMatrix {
 public:
  AccuracyMatrix() = default;
  explicit AccuracyMatrix(std::size_t tasks);
  /// rows[j] lists a_j^i for i = j..T-1, so row j has T - j entries.
  static AccuracyMatrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t tasks() const { return tasks_; }
  bool has(std::size_t j, std::size_t i) const;
  double at(std::size_t j, std::size_t i) const;
  void set(std::size_t j, std::size_t i, double value);
  /// True once every lower-triangular cell is set.
  bool complete() const;

  /// Leading k x k block: the matrix as it stood after task k.
  AccuracyMatrix prefix(std::size_t k) const;
  /// Every entry multiplied by c (no range check, for algebraic tests).
  AccuracyMatrix scaled(double c) const;

  bool operator==(const AccuracyMatrix&) const = default;

 private:
  std::size_t index(std::size_t j, std::size_t i) const;
  void check_cell(std::size_t j, std::size_t i) const;
  void require_complete(const char* what) const;

  std::size_t tasks_ = 0;
  std::vector<double> values_;
  std::vector<bool> set_;

};

struct LearningAccuracy {
  std::vector<double> per_task;  // l_j = a_j^j
  double mean = 0.0;
};
struct ForgettingMeasure {
  std::vector<double> per_task;  // fm_j^T for j < T-1 (0-based)
  double mean = 0.0;
};
struct RelativeForgetting {
  std::vector<double> per_task;  // f_j^T for every j, f_{T-1}^T = 0
  double mean = 0.0;
};

LearningAccuracy learning_accuracy(const AccuracyMatrix& a);
/// Throws DomainError for a single-task matrix.
ForgettingMeasure forgetting_measure(const AccuracyMatrix& a);
/// Throws DomainError when a zero accuracy appears among the candidates.
RelativeForgetting relative_forgetting(const AccuracyMatrix& a);
double average_accuracy(const AccuracyMatrix& a);

/// f_j^k over the first k+1 tasks (0-based k).
double relative_forgetting_cell(const AccuracyMatrix& a, std::size_t j, std::size_t k);

struct BoundCell {
  std::size_t task = 0;   // j
  std::size_t after = 0;  // i
  double slack = 0.0;     // a_j^i - l_j (1 - f_j^i)
  bool equality_expected = false;
};

struct BoundReport {
  std::vector<BoundCell> cells;
  bool holds = true;       // every slack >= -tolerance
  double min_slack = 0.0;
  double aggregate = 0.0;  // AA - LA (1 - RF), reported only
};

inline constexpr double kBoundTolerance = 1e-12;

/// Needs strictly positive entries.
BoundReport bound_check(const AccuracyMatrix& a);

struct MetricReport {
  std::size_t tasks = 0;
  LearningAccuracy la;
  std::optional<ForgettingMeasure> fm;   // absent for T = 1
  std::optional<RelativeForgetting> rf;  // absent when undefined
  double aa = 0.0;
  std::optional<BoundReport> bound;      // absent when any entry is zero
  std::string rf_error;
};

MetricReport compute_metrics(const AccuracyMatrix& a);

// ---- CSV -------------------------------------------------------------------
//
//   task,i1,i2,...,iT
//   1,a_1^1,a_1^2,...,a_1^T
//   2,,a_2^2,...,a_2^T
//
// Six fractional digits; cells above the diagonal are empty.

std::string matrix_to_csv(const AccuracyMatrix& a);
AccuracyMatrix matrix_from_csv(const std::string& text, const std::string& source = "<csv>");
void write_matrix_csv(const AccuracyMatrix& a, const std::filesystem::path& path);
AccuracyMatrix read_matrix_csv(const std::filesystem::path& path);

// ---- diagnostics -----------------------------------------------------------

/// -sum_c p_c ln p_c per row, p = softmax(logits).
std::vector<double> row_entropy(const Tensor& logits);

/// Mean predictive entropy over the examples.
double prediction_entropy(const Network& net, std::span<const Example> examples);

/// Mean entropy at every chain stage X0..Xn. Chains are rebuilt from a fresh
/// Rng(seed) so the table is reproducible; stage 0 equals the raw entropy.
std::vector<double> entropy_by_stage(const Network& net, std::span<const Example> examples,
                                     const ChainConfig& chain, std::uint64_t seed);

/// Nearest-class-mean accuracy in the penultimate feature space. Throws
/// ContractError naming the first test class absent from the reference set.
double ncm_evaluate(const Network& net, std::span<const Example> reference,
                    std::span<const Example> test);

/// Fraction of examples whose prediction matches the label.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

}  // namespace ccldc
