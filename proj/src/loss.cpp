#include "smim/loss.hpp"

#include <cmath>

#include "smim/nn.hpp"

namespace smim {

namespace {

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                         " differ");
    }
}

// Row-wise log-softmax: z - max - log(sum exp(z - max)).
Matrix log_softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* z = logits.row_ptr(i);
        double mx = z[0];
        for (std::size_t j = 1; j < logits.cols(); ++j) mx = std::max(mx, z[j]);
        double total = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) total += std::exp(z[j] - mx);
        const double lse = mx + std::log(total);
        for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) = z[j] - lse;
    }
    return out;
}

}  // namespace

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "xent") return LossKind::CrossEntropyHard;
    if (name == "l2_logit") return LossKind::L2Logit;
    if (name == "kl") return LossKind::KLMimic;
    if (name == "l2_prob") return LossKind::L2Prob;
    throw ConfigError("unknown loss '" + name + "' (expected xent, l2_logit, kl or l2_prob)");
}

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::CrossEntropyHard: return "xent";
        case LossKind::L2Logit: return "l2_logit";
        case LossKind::KLMimic: return "kl";
        case LossKind::L2Prob: return "l2_prob";
    }
    return "?";
}

bool loss_needs_soft_targets(LossKind kind) {
    return kind != LossKind::CrossEntropyHard;
}

LossResult xent_softmax(const Matrix& logits, const std::vector<std::size_t>& labels) {
    if (labels.size() != logits.rows()) {
        throw ShapeError("xent_softmax: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.rows()) + " rows");
    }
    const std::size_t batch = logits.rows(), classes = logits.cols();
    const double inv_b = 1.0 / static_cast<double>(batch);
    const Matrix logp = log_softmax_rows(logits);
    LossResult res;
    res.dlogits = Matrix(batch, classes);
    for (std::size_t i = 0; i < batch; ++i) {
        if (labels[i] >= classes) {
            throw DomainError("xent_softmax: label " + std::to_string(labels[i]) +
                              " out of range [0," + std::to_string(classes) + ") at row " +
                              std::to_string(i));
        }
        res.loss -= logp(i, labels[i]) * inv_b;
        for (std::size_t j = 0; j < classes; ++j) {
            res.dlogits(i, j) = (std::exp(logp(i, j)) - (j == labels[i] ? 1.0 : 0.0)) * inv_b;
        }
    }
    return res;
}

LossResult l2_logit(const Matrix& pred, const Matrix& target) {
    require_same_shape("l2_logit", pred, target);
    const double inv_b = 1.0 / static_cast<double>(pred.rows());
    LossResult res;
    res.dlogits = Matrix(pred.rows(), pred.cols());
    double total = 0.0;
    for (std::size_t n = 0; n < pred.size(); ++n) {
        const double d = pred.flat()[n] - target.flat()[n];
        total += d * d;
        res.dlogits.flat()[n] = d * inv_b;
    }
    res.loss = 0.5 * total * inv_b;
    return res;
}

LossResult kl_mimic(const Matrix& student_logits, const Matrix& teacher_logits) {
    require_same_shape("kl_mimic", student_logits, teacher_logits);
    const std::size_t batch = student_logits.rows(), classes = student_logits.cols();
    const double inv_b = 1.0 / static_cast<double>(batch);
    const Matrix ls_s = log_softmax_rows(student_logits);
    const Matrix ls_t = log_softmax_rows(teacher_logits);
    LossResult res;
    res.dlogits = Matrix(batch, classes);
    for (std::size_t i = 0; i < batch; ++i) {
        for (std::size_t j = 0; j < classes; ++j) {
            const double pt = std::exp(ls_t(i, j));
            const double ps = std::exp(ls_s(i, j));
            res.loss += pt * (ls_t(i, j) - ls_s(i, j)) * inv_b;
            res.dlogits(i, j) = (ps - pt) * inv_b;
        }
    }
    return res;
}

LossResult l2_prob(const Matrix& student_logits, const Matrix& teacher_logits) {
    require_same_shape("l2_prob", student_logits, teacher_logits);
    const std::size_t batch = student_logits.rows(), classes = student_logits.cols();
    const double inv_b = 1.0 / static_cast<double>(batch);
    const Matrix ps = softmax_rows(student_logits);
    const Matrix pt = softmax_rows(teacher_logits);
    LossResult res;
    res.dlogits = Matrix(batch, classes);
    for (std::size_t i = 0; i < batch; ++i) {
        double dot = 0.0;  // p . (p - q), for the softmax Jacobian p*(e - p.e)
        double row_loss = 0.0;
        for (std::size_t j = 0; j < classes; ++j) {
            const double e = ps(i, j) - pt(i, j);
            row_loss += e * e;
            dot += ps(i, j) * e;
        }
        res.loss += 0.5 * row_loss * inv_b;
        for (std::size_t j = 0; j < classes; ++j) {
            const double e = ps(i, j) - pt(i, j);
            res.dlogits(i, j) = ps(i, j) * (e - dot) * inv_b;
        }
    }
    return res;
}

LossResult compute_loss(LossKind kind, const Matrix& logits,
                        const std::vector<std::size_t>& labels, const Matrix& soft) {
    switch (kind) {
        case LossKind::CrossEntropyHard: return xent_softmax(logits, labels);
        case LossKind::L2Logit: return l2_logit(logits, soft);
        case LossKind::KLMimic: return kl_mimic(logits, soft);
        case LossKind::L2Prob: return l2_prob(logits, soft);
    }
    throw ContractError("compute_loss: unknown kind");
}

}  // namespace smim
