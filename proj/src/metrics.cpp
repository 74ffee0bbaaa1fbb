#include "ccldc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "ccldc/data.hpp"
#include "ccldc/errors.hpp"

namespace ccldc {

AccuracyMatrix::AccuracyMatrix(std::size_t tasks)
    : tasks_(tasks), values_(tasks * tasks, 0.0), set_(tasks * tasks, false) {
  if (tasks == 0) throw ParameterError("accuracy matrix needs at least one task");
}

AccuracyMatrix AccuracyMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  AccuracyMatrix a(rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != rows.size() - j) {
      throw DimensionError("accuracy matrix row " + std::to_string(j + 1) + " has " +
                           std::to_string(rows[j].size()) + " entries, expected " +
                           std::to_string(rows.size() - j));
    }
    for (std::size_t n = 0; n < rows[j].size(); ++n) a.set(j, j + n, rows[j][n]);
  }
  return a;
}

std::size_t AccuracyMatrix::index(std::size_t j, std::size_t i) const { return j * tasks_ + i; }

void AccuracyMatrix::check_cell(std::size_t j, std::size_t i) const {
  if (i >= tasks_ || j > i) {
    throw ContractError("accuracy matrix: cell (task " + std::to_string(j + 1) + ", after " +
                        std::to_string(i + 1) + ") outside the lower triangle of a " +
                        std::to_string(tasks_) + "-task matrix");
  }
}

bool AccuracyMatrix::has(std::size_t j, std::size_t i) const {
  return i < tasks_ && j <= i && set_[index(j, i)];
}

double AccuracyMatrix::at(std::size_t j, std::size_t i) const {
  check_cell(j, i);
  if (!set_[index(j, i)]) {
    throw StateError("accuracy matrix: cell (task " + std::to_string(j + 1) + ", after " +
                     std::to_string(i + 1) + ") not filled");
  }
  return values_[index(j, i)];
}

void AccuracyMatrix::set(std::size_t j, std::size_t i, double value) {
  check_cell(j, i);
  values_[index(j, i)] = value;
  set_[index(j, i)] = true;
}

bool AccuracyMatrix::complete() const {
  for (std::size_t i = 0; i < tasks_; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      if (!set_[index(j, i)]) return false;
    }
  }
  return tasks_ > 0;
}

void AccuracyMatrix::require_complete(const char* what) const {
  if (!complete()) throw StateError(std::string(what) + ": accuracy matrix is incomplete");
}

AccuracyMatrix AccuracyMatrix::prefix(std::size_t k) const {
  if (k == 0 || k > tasks_) {
    throw ParameterError("accuracy matrix prefix " + std::to_string(k) + " outside [1, " +
                         std::to_string(tasks_) + "]");
  }
  AccuracyMatrix out(k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      if (has(j, i)) out.set(j, i, at(j, i));
    }
  }
  return out;
}

AccuracyMatrix AccuracyMatrix::scaled(double c) const {
  AccuracyMatrix out = *this;
  for (double& v : out.values_) v *= c;
  return out;
}

// ---- metrics ---------------------------------------------------------------

LearningAccuracy learning_accuracy(const AccuracyMatrix& a) {
  if (!a.complete()) throw StateError("learning_accuracy: accuracy matrix is incomplete");
  LearningAccuracy out;
  double total = 0.0;
  for (std::size_t j = 0; j < a.tasks(); ++j) {
    out.per_task.push_back(a.at(j, j));
    total += a.at(j, j);
  }
  out.mean = total / static_cast<double>(a.tasks());
  return out;
}

ForgettingMeasure forgetting_measure(const AccuracyMatrix& a) {
  if (!a.complete()) throw StateError("forgetting_measure: accuracy matrix is incomplete");
  const std::size_t t = a.tasks();
  if (t < 2) throw DomainError("forgetting_measure: undefined for a single task");
  const std::size_t last = t - 1;
  ForgettingMeasure out;
  double total = 0.0;
  for (std::size_t j = 0; j < last; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = j; i < last; ++i) best = std::max(best, a.at(j, i) - a.at(j, last));
    out.per_task.push_back(best);
    total += best;
  }
  out.mean = total / static_cast<double>(last);
  return out;
}

double relative_forgetting_cell(const AccuracyMatrix& a, std::size_t j, std::size_t k) {
  const double final_acc = a.at(j, k);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = j; i <= k; ++i) {
    const double past = a.at(j, i);
    if (past == 0.0) {
      throw DomainError("relative_forgetting: accuracy of task " + std::to_string(j + 1) +
                        " after task " + std::to_string(i + 1) +
                        " is zero, so the ratio is undefined");
    }
    best = std::max(best, 1.0 - final_acc / past);
  }
  return best;
}

RelativeForgetting relative_forgetting(const AccuracyMatrix& a) {
  if (!a.complete()) throw StateError("relative_forgetting: accuracy matrix is incomplete");
  const std::size_t last = a.tasks() - 1;
  RelativeForgetting out;
  double total = 0.0;
  for (std::size_t j = 0; j <= last; ++j) {
    const double f = relative_forgetting_cell(a, j, last);
    out.per_task.push_back(f);
    total += f;
  }
  out.mean = total / static_cast<double>(a.tasks());
  return out;
}

double average_accuracy(const AccuracyMatrix& a) {
  if (!a.complete()) throw StateError("average_accuracy: accuracy matrix is incomplete");
  const std::size_t last = a.tasks() - 1;
  double total = 0.0;
  for (std::size_t j = 0; j <= last; ++j) total += a.at(j, last);
  return total / static_cast<double>(a.tasks());
}

BoundReport bound_check(const AccuracyMatrix& a) {
  if (!a.complete()) throw StateError("bound_check: accuracy matrix is incomplete");
  BoundReport report;
  report.min_slack = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.tasks(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double l = a.at(j, j);
      const double f = relative_forgetting_cell(a, j, i);
      BoundCell cell{j, i, a.at(j, i) - l * (1.0 - f), true};
      for (std::size_t k = j; k <= i; ++k) {
        if (a.at(j, k) > l) cell.equality_expected = false;
      }
      report.min_slack = std::min(report.min_slack, cell.slack);
      if (cell.slack < -kBoundTolerance) report.holds = false;
      report.cells.push_back(cell);
    }
  }
  report.aggregate = average_accuracy(a) -
                     learning_accuracy(a).mean * (1.0 - relative_forgetting(a).mean);
  return report;
}

MetricReport compute_metrics(const AccuracyMatrix& a) {
  MetricReport r;
  r.tasks = a.tasks();
  r.la = learning_accuracy(a);
  r.aa = average_accuracy(a);
  if (a.tasks() >= 2) r.fm = forgetting_measure(a);
  try {
    r.rf = relative_forgetting(a);
    r.bound = bound_check(a);
  } catch (const DomainError& e) {
    r.rf.reset();
    r.rf_error = e.what();
  }
  return r;
}

// ---- CSV -------------------------------------------------------------------

std::string matrix_to_csv(const AccuracyMatrix& a) {
  std::string out = "task";
  for (std::size_t i = 0; i < a.tasks(); ++i) out += ",i" + std::to_string(i + 1);
  out += '\n';
  char buf[32];
  for (std::size_t j = 0; j < a.tasks(); ++j) {
    out += std::to_string(j + 1);
    for (std::size_t i = 0; i < a.tasks(); ++i) {
      out += ',';
      if (i >= j && a.has(j, i)) {
        std::snprintf(buf, sizeof buf, "%.6f", a.at(j, i));
        out += buf;
      }
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

[[noreturn]] void csv_error(const std::string& source, std::size_t line, const std::string& msg) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + msg);
}

}  // namespace

AccuracyMatrix matrix_from_csv(const std::string& text, const std::string& source) {
  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) csv_error(source, 1, "empty file, expected header 'task,i1,...'");

  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header[0] != "task") {
    csv_error(source, 1, "header must be 'task,i1,...,iT'");
  }
  const std::size_t t = header.size() - 1;
  for (std::size_t i = 0; i < t; ++i) {
    if (header[i + 1] != "i" + std::to_string(i + 1)) {
      csv_error(source, 1, "header column " + std::to_string(i + 2) + " is '" + header[i + 1] +
                               "', expected 'i" + std::to_string(i + 1) + "'");
    }
  }
  if (lines.size() - 1 != t) {
    csv_error(source, lines.size(), "expected " + std::to_string(t) + " task rows, found " +
                                        std::to_string(lines.size() - 1));
  }

  AccuracyMatrix a(t);
  for (std::size_t j = 0; j < t; ++j) {
    const std::size_t lineno = j + 2;
    const auto fields = split_fields(lines[j + 1]);
    if (fields.size() != t + 1) {
      csv_error(source, lineno, "expected " + std::to_string(t + 1) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    if (fields[0] != std::to_string(j + 1)) {
      csv_error(source, lineno, "task column is '" + fields[0] + "', expected " +
                                    std::to_string(j + 1));
    }
    for (std::size_t i = 0; i < t; ++i) {
      const std::string& cell = fields[i + 1];
      if (i < j) {
        if (!cell.empty()) {
          csv_error(source, lineno, "column i" + std::to_string(i + 1) +
                                        " must be empty above the diagonal");
        }
        continue;
      }
      if (cell.empty()) csv_error(source, lineno, "missing value in column i" + std::to_string(i + 1));
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        csv_error(source, lineno, "'" + cell + "' in column i" + std::to_string(i + 1) +
                                      " is not a number");
      }
      if (v < 0.0 || v > 1.0) {
        csv_error(source, lineno, "value " + cell + " in column i" + std::to_string(i + 1) +
                                      " outside [0, 1]");
      }
      a.set(j, i, v);
    }
  }
  return a;
}

void write_matrix_csv(const AccuracyMatrix& a, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << matrix_to_csv(a);
  if (!out) throw Error("failed writing " + path.string());
}

AccuracyMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open");
  std::ostringstream text;
  text << in.rdbuf();
  return matrix_from_csv(text.str(), path.string());
}

// ---- diagnostics -----------------------------------------------------------

namespace {

constexpr std::size_t kEvalChunk = 256;

template <typename Fn>
void for_chunks(std::size_t n, Fn&& fn) {
  for (std::size_t begin = 0; begin < n; begin += kEvalChunk) fn(begin, std::min(n, begin + kEvalChunk));
}

}  // namespace

std::vector<double> row_entropy(const Tensor& logits) {
  NoGradGuard no_grad;
  const Tensor p = softmax(logits);
  const std::size_t rows = p.rows(), cols = p.cols();
  const auto v = p.values();
  std::vector<double> out(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double h = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double pc = v[r * cols + c];
      if (pc > 0.0) h -= pc * std::log(pc);
    }
    out[r] = h;
  }
  return out;
}

double prediction_entropy(const Network& net, std::span<const Example> examples) {
  if (examples.empty()) throw ContractError("prediction_entropy: no examples");
  NoGradGuard no_grad;
  double total = 0.0;
  for_chunks(examples.size(), [&](std::size_t b, std::size_t e) {
    for (double h : row_entropy(net.forward(stack_examples(examples.subspan(b, e - b))))) total += h;
  });
  return total / static_cast<double>(examples.size());
}

std::vector<double> entropy_by_stage(const Network& net, std::span<const Example> examples,
                                     const ChainConfig& chain, std::uint64_t seed) {
  if (examples.empty()) throw ContractError("entropy_by_stage: no examples");
  chain.validate();
  NoGradGuard no_grad;
  Rng rng(seed);
  std::vector<double> totals(chain.stages + 1, 0.0);
  for_chunks(examples.size(), [&](std::size_t b, std::size_t e) {
    std::vector<std::vector<Image>> stages(chain.stages + 1);
    for (std::size_t n = b; n < e; ++n) {
      auto views = build_chain(examples[n].image, chain, rng);
      for (std::size_t s = 0; s < views.size(); ++s) stages[s].push_back(std::move(views[s]));
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
      for (double h : row_entropy(net.forward(stack_images(stages[s])))) totals[s] += h;
    }
  });
  for (double& t : totals) t /= static_cast<double>(examples.size());
  return totals;
}

double ncm_evaluate(const Network& net, std::span<const Example> reference,
                    std::span<const Example> test) {
  if (test.empty()) throw ContractError("ncm_evaluate: empty test set");
  if (reference.empty()) throw ContractError("ncm_evaluate: empty reference set");
  NoGradGuard no_grad;
  const std::size_t d = net.arch().feature_dim();

  std::map<int, std::pair<std::vector<double>, std::size_t>> sums;
  for_chunks(reference.size(), [&](std::size_t b, std::size_t e) {
    const Tensor f = net.features(stack_examples(reference.subspan(b, e - b)));
    const auto v = f.values();
    for (std::size_t r = 0; r < e - b; ++r) {
      auto& [acc, count] = sums[reference[b + r].label];
      acc.resize(d, 0.0);
      for (std::size_t c = 0; c < d; ++c) acc[c] += v[r * d + c];
      ++count;
    }
  });
  for (const Example& e : test) {
    if (!sums.count(e.label)) {
      throw ContractError("ncm_evaluate: class " + std::to_string(e.label) +
                          " has no reference examples");
    }
  }
  // std::map iterates in ascending label order, so strict < keeps the lowest
  // class on ties.
  std::vector<std::pair<int, std::vector<double>>> means;
  for (auto& [label, entry] : sums) {
    std::vector<double> m = entry.first;
    for (double& x : m) x /= static_cast<double>(entry.second);
    means.emplace_back(label, std::move(m));
  }

  std::size_t correct = 0;
  for_chunks(test.size(), [&](std::size_t b, std::size_t e) {
    const Tensor f = net.features(stack_examples(test.subspan(b, e - b)));
    const auto v = f.values();
    for (std::size_t r = 0; r < e - b; ++r) {
      int best = means.front().first;
      double best_dist = std::numeric_limits<double>::infinity();
      for (const auto& [label, m] : means) {
        double dist = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = v[r * d + c] - m[c];
          dist += diff * diff;
        }
        if (dist < best_dist) {
          best_dist = dist;
          best = label;
        }
      }
      if (best == test[b + r].label) ++correct;
    }
  });
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw ContractError("accuracy: empty label set");
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) correct += predictions[n] == labels[n];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace ccldc
