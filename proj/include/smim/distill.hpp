#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "smim/data.hpp"
#include "smim/nn.hpp"
#include "smim/optim.hpp"

namespace smim {

/// Teacher logits with the per-output normalization statistics needed to
/// map between raw and normalized target space.
struct LogitTargets {
    Matrix logits;              // N x C, raw or normalized per flag
    std::vector<double> mu;     // per-output mean over the originating set
    std::vector<double> sigma;  // per-output population std
    bool normalized = false;
};

/// One or more teachers sharing an output dimension; logits are averaged.
struct EnsembleModel {
    std::vector<Model> members;

    void validate() const;
    std::size_t output_dim() const { return members.front().spec.output_dim; }
    std::size_t input_dim() const { return members.front().spec.input_dim; }
};

/// Eval-mode teacher logits for every feature row, batched internally;
/// row order is preserved and results are batching-invariant.
Matrix extract_logits(const Model& teacher, const Matrix& features);

/// Elementwise arithmetic mean of member logits, in member order.
Matrix ensemble_logits(const EnsembleModel& ensemble, const Matrix& features);

/// Column-wise (x - mu) / max(sigma, 1e-8) across the given set, keeping the
/// statistics so targets can be denormalized later.
LogitTargets normalize_logits(const Matrix& raw);

/// Inverse of normalize_logits for the stored statistics.
Matrix denormalize_logits(const LogitTargets& targets);

/// Applies frozen normalization statistics to new logits (used to put dev
/// targets in the same space the transfer set was normalized into).
Matrix normalize_with(const std::vector<double>& mu, const std::vector<double>& sigma,
                      const Matrix& raw);

/// The mimic training set: labeled features (hard labels dropped) plus the
/// unlabeled pool, soft-labeled by the teacher.
struct TransferSet {
    Dataset data;  // soft targets only, no hard labels
    bool normalized = false;
    std::vector<double> mu;
    std::vector<double> sigma;
    std::uint64_t teacher_hash = 0;

    LogitDenorm denorm() const { return LogitDenorm{mu, sigma}; }
};

TransferSet build_transfer_set(const Dataset& labeled, const Matrix& unlabeled_features,
                               const EnsembleModel& teacher, bool normalize);

/// Folds the restore transform z = sigma*g + mu into the final Dense layer
/// so the saved student emits raw-space logits directly.
Model bake_output_denorm(const Model& model, const std::vector<double>& mu,
                         const std::vector<double>& sigma);

// On-disk transfer set: features CSV + targets CSV + key=value header file
// recording class count, normalized flag, mu, sigma and the teacher hash.
void save_transfer_set(const TransferSet& ts, const std::filesystem::path& dir);
TransferSet load_transfer_set(const std::filesystem::path& dir);

}  // namespace smim
