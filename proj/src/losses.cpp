#include "ccldc/losses.hpp"

#include <cmath>
#include <string>

#include "ccldc/errors.hpp"

namespace ccldc {

void LossWeights::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ParameterError("loss.tau must be positive");
  if (!(lambda1 >= 0.0)) throw ParameterError("loss.lambda1 must be >= 0");
  if (!(lambda2 >= 0.0)) throw ParameterError("loss.lambda2 must be >= 0");
}

std::string_view to_string(SchemeVariant v) {
  switch (v) {
    case SchemeVariant::hard_to_easy: return "hard_to_easy";
    case SchemeVariant::easy_to_hard: return "easy_to_hard";
    case SchemeVariant::same_difficulty: return "same_difficulty";
  }
  return "unknown";
}

SchemeVariant scheme_from_string(std::string_view name) {
  if (name == "hard_to_easy") return SchemeVariant::hard_to_easy;
  if (name == "easy_to_hard") return SchemeVariant::easy_to_hard;
  if (name == "same_difficulty") return SchemeVariant::same_difficulty;
  throw ConfigError("unknown scheme '" + std::string(name) +
                    "' (expected hard_to_easy, easy_to_hard or same_difficulty)");
}

std::string_view to_string(KlDirection d) {
  return d == KlDirection::teacher_student ? "teacher_student" : "student_teacher";
}

KlDirection kl_direction_from_string(std::string_view name) {
  if (name == "teacher_student") return KlDirection::teacher_student;
  if (name == "student_teacher") return KlDirection::student_teacher;
  throw ConfigError("unknown kl_direction '" + std::string(name) +
                    "' (expected teacher_student or student_teacher)");
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.dim() != 2) throw DimensionError("cross_entropy: logits must be 2-D");
  if (labels.size() != logits.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
  }
  const auto classes = static_cast<int>(logits.cols());
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(classes) + ")");
    }
  }
  return scale(mean(gather_rows(log_softmax(logits), labels)), -1.0);
}

Tensor soft_kl(const Tensor& student, const Tensor& teacher, double tau, KlDirection direction) {
  if (!(tau > 0.0)) throw ParameterError("soft_kl: temperature must be positive");
  if (student.shape() != teacher.shape()) {
    throw DimensionError("soft_kl: student " + shape_str(student.shape()) + " vs teacher " +
                         shape_str(teacher.shape()));
  }
  const auto batch = static_cast<double>(student.rows());
  const Tensor fixed = teacher.detach();
  const Tensor log_pt = log_softmax(fixed, tau);
  const Tensor log_ps = log_softmax(student, tau);
  Tensor terms;
  if (direction == KlDirection::teacher_student) {
    terms = mul(softmax(fixed, tau), sub(log_pt, log_ps));
  } else {
    terms = mul(softmax(student, tau), sub(log_ps, log_pt));
  }
  return div_scalar(sum(terms), batch);
}

Tensor ccl_loss(const Tensor& student, const Tensor& teacher, std::span<const int> labels,
                const LossWeights& w, KlDirection direction) {
  w.validate();
  return add(scale(cross_entropy(student, labels), w.lambda1),
             scale(soft_kl(student, teacher, w.tau, direction), w.lambda2));
}

namespace {

void check_chains(std::span<const Tensor> student, std::span<const Tensor> teacher) {
  if (student.size() != teacher.size()) {
    throw ContractError("chain loss: student chain has " + std::to_string(student.size()) +
                        " stages, teacher chain " + std::to_string(teacher.size()));
  }
  if (student.empty()) throw ContractError("chain loss: chains must contain at least X0");
}

}  // namespace

Tensor chain_distillation(std::span<const Tensor> student, std::span<const Tensor> teacher,
                          double tau, SchemeVariant variant, KlDirection direction) {
  check_chains(student, teacher);
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 1; i < student.size(); ++i) {
    Tensor term;
    switch (variant) {
      case SchemeVariant::hard_to_easy:
        term = soft_kl(student[i - 1], teacher[i], tau, direction);
        break;
      case SchemeVariant::easy_to_hard:
        term = soft_kl(student[i], teacher[i - 1], tau, direction);
        break;
      case SchemeVariant::same_difficulty:
        term = soft_kl(student[i], teacher[i], tau, direction);
        break;
    }
    total = i == 1 ? term : add(total, term);
  }
  return total;
}

Tensor chain_classification(std::span<const Tensor> chain, std::span<const int> labels) {
  if (chain.empty()) throw ContractError("chain loss: chains must contain at least X0");
  Tensor total = cross_entropy(chain[0], labels);
  for (std::size_t i = 1; i < chain.size(); ++i) total = add(total, cross_entropy(chain[i], labels));
  return total;
}

Tensor dc_loss(std::span<const Tensor> student, std::span<const Tensor> teacher,
               std::span<const int> labels, const LossWeights& w, SchemeVariant variant,
               KlDirection direction) {
  w.validate();
  check_chains(student, teacher);
  if (student.size() == 1) return Tensor::scalar(0.0);
  Tensor cls = cross_entropy(student[1], labels);
  for (std::size_t i = 2; i < student.size(); ++i) cls = add(cls, cross_entropy(student[i], labels));
  return add(scale(cls, w.lambda1),
             scale(chain_distillation(student, teacher, w.tau, variant, direction), w.lambda2));
}

CclDcTerms ccl_dc_loss(const Tensor& baseline, std::span<const Tensor> student,
                       std::span<const Tensor> teacher, std::span<const int> labels,
                       const LossWeights& w, SchemeVariant variant, KlDirection direction) {
  w.validate();
  check_chains(student, teacher);
  CclDcTerms t;
  t.baseline = baseline;
  t.classification = chain_classification(student, labels);
  t.ccl = soft_kl(student[0], teacher[0], w.tau, direction);
  t.dc = student.size() > 1 ? chain_distillation(student, teacher, w.tau, variant, direction)
                            : Tensor::scalar(0.0);
  const Tensor ours = add(scale(t.classification, w.lambda1), scale(add(t.ccl, t.dc), w.lambda2));
  t.total = add(baseline, ours);
  return t;
}

Tensor sdc_loss(std::span<const Tensor> chain, std::span<const int> labels, const LossWeights& w,
                SchemeVariant variant, KlDirection direction) {
  std::vector<Tensor> teacher;
  teacher.reserve(chain.size());
  for (const Tensor& t : chain) teacher.push_back(t.detach());
  return dc_loss(chain, teacher, labels, w, variant, direction);
}

Tensor untrained_distill_loss(const Tensor& student, const Tensor& frozen_teacher,
                              std::span<const int> labels, const LossWeights& w,
                              KlDirection direction) {
  w.validate();
  return add(cross_entropy(student, labels),
             scale(soft_kl(student, frozen_teacher, w.tau, direction), w.lambda2));
}

Tensor multiview_loss(std::span<const Tensor> chain, std::span<const int> labels, double lambda1) {
  if (!(lambda1 >= 0.0)) throw ParameterError("multiview_loss: lambda1 must be >= 0");
  return scale(chain_classification(chain, labels), lambda1);
}

}  // namespace ccldc
