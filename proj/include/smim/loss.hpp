#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smim/matrix.hpp"

namespace smim {

/// Training objectives. CrossEntropyHard consumes integer class labels; the
/// three mimic losses consume a soft target matrix of teacher logits.
enum class LossKind : std::uint8_t { CrossEntropyHard, L2Logit, KLMimic, L2Prob };

LossKind loss_kind_from_string(const std::string& name);
std::string to_string(LossKind kind);
bool loss_needs_soft_targets(LossKind kind);

/// Scalar loss plus its gradient w.r.t. the first (prediction) argument.
/// Every loss averages over the batch, so gradient magnitudes do not scale
/// with batch size.
struct LossResult {
    double loss = 0.0;
    Matrix dlogits;
};

/// Mean softmax cross-entropy against hard labels, stabilized by max
/// subtraction. dlogits = (softmax - onehot) / B.
LossResult xent_softmax(const Matrix& logits, const std::vector<std::size_t>& labels);

/// Mimic regression on raw logits: (1/2B) * sum of squared row differences.
/// dpred = (pred - target) / B.
LossResult l2_logit(const Matrix& pred, const Matrix& target);

/// KL(p_teacher || p_student) with p = softmax(logits), averaged over rows.
/// dstudent = (p_student - p_teacher) / B.
LossResult kl_mimic(const Matrix& student_logits, const Matrix& teacher_logits);

/// (1/2B) * sum of squared probability differences; gradient through the
/// softmax Jacobian.
LossResult l2_prob(const Matrix& student_logits, const Matrix& teacher_logits);

/// Dispatch on kind; labels used for CrossEntropyHard, soft for the rest.
LossResult compute_loss(LossKind kind, const Matrix& logits,
                        const std::vector<std::size_t>& labels, const Matrix& soft);

}  // namespace smim
