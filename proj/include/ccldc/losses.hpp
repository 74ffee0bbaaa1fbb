#pragma once

// Loss terms for ER, peer distillation and the augmentation distillation
// chain. Every function returns a scalar tensor (shape [1]) that is a batch
// mean of its per-example terms. Teacher-side logits are always detached
// inside the distillation terms.

#include <span>
#include <string_view>
#include <vector>

#include "ccldc/tensor.hpp"

namespace ccldc {

struct LossWeights {
  double lambda1 = 0.5;  // classification weight
  double lambda2 = 2.0;  // distillation weight
  double tau = 1.0;      // temperature

  void validate() const;
};

/// Which chain stages are paired in the distillation part.
///   hard_to_easy:    student stage i-1 learns from teacher stage i
///   easy_to_hard:    student stage i learns from teacher stage i-1
///   same_difficulty: student stage i learns from teacher stage i
enum class SchemeVariant { hard_to_easy, easy_to_hard, same_difficulty };

/// teacher_student computes KL(p_teacher || p_student); student_teacher the reverse.
enum class KlDirection { teacher_student, student_teacher };

std::string_view to_string(SchemeVariant v);
SchemeVariant scheme_from_string(std::string_view name);
std::string_view to_string(KlDirection d);
KlDirection kl_direction_from_string(std::string_view name);

/// mean_r -log softmax(logits_r)[label_r]
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// mean_r KL(p_t || p_s) with p = softmax(logits / tau); gradient reaches the
/// student only.
Tensor soft_kl(const Tensor& student, const Tensor& teacher, double tau,
               KlDirection direction = KlDirection::teacher_student);

/// lambda1 * CE(student) + lambda2 * KL on the unaugmented view.
Tensor ccl_loss(const Tensor& student, const Tensor& teacher, std::span<const int> labels,
                const LossWeights& w, KlDirection direction = KlDirection::teacher_student);

/// Chain loss over stages 1..n:
///   lambda1 * sum_i CE(student_i) + lambda2 * sum_i KL(pair_i)
/// where pair_i is chosen by the scheme variant.
Tensor dc_loss(std::span<const Tensor> student_chain, std::span<const Tensor> teacher_chain,
               std::span<const int> labels, const LossWeights& w, SchemeVariant variant,
               KlDirection direction = KlDirection::teacher_student);

/// Distillation part of dc_loss without lambda2.
Tensor chain_distillation(std::span<const Tensor> student_chain,
                          std::span<const Tensor> teacher_chain, double tau,
                          SchemeVariant variant, KlDirection direction);

/// Sum over all stages 0..n of CE, unweighted.
Tensor chain_classification(std::span<const Tensor> chain, std::span<const int> labels);

struct CclDcTerms {
  Tensor total;
  Tensor baseline;
  Tensor classification;  // sum_{i=0..n} CE(student_i)
  Tensor ccl;             // KL(student_0, teacher_0)
  Tensor dc;              // chain distillation sum
};

/// baseline + lambda1 * classification + lambda2 * (ccl + dc), associated as
/// written so that lambda1 = lambda2 = 0 returns the baseline value exactly.
CclDcTerms ccl_dc_loss(const Tensor& baseline, std::span<const Tensor> student_chain,
                       std::span<const Tensor> teacher_chain, std::span<const int> labels,
                       const LossWeights& w, SchemeVariant variant,
                       KlDirection direction = KlDirection::teacher_student);

/// dc_loss with the teacher replaced by detached copies of the same chain.
Tensor sdc_loss(std::span<const Tensor> chain, std::span<const int> labels, const LossWeights& w,
                SchemeVariant variant, KlDirection direction = KlDirection::teacher_student);

/// CE + lambda2 * KL(student, frozen teacher).
Tensor untrained_distill_loss(const Tensor& student, const Tensor& frozen_teacher,
                              std::span<const int> labels, const LossWeights& w,
                              KlDirection direction = KlDirection::teacher_student);

/// lambda1 * sum_{i=0..n} CE(chain_i); added on top of the baseline loss by
/// the trainer.
Tensor multiview_loss(std::span<const Tensor> chain, std::span<const int> labels, double lambda1);

}  // namespace ccldc
