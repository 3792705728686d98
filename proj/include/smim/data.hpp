#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "smim/matrix.hpp"
#include "smim/nn.hpp"
#include "smim/rng.hpp"

namespace smim {

/// A feature matrix with optional hard class labels and/or soft logit
/// targets. Training requires at least one target kind.
struct Dataset {
    Matrix features;                        // N x D
    std::vector<std::size_t> hard_labels;   // empty when absent
    Matrix soft_targets;                    // empty when absent; N x C
    std::size_t class_count = 0;
    std::optional<ImageShape> input_shape;

    std::size_t size() const { return features.rows(); }
    std::size_t dim() const { return features.cols(); }
    bool has_hard_labels() const { return !hard_labels.empty(); }
    bool has_soft_targets() const { return !soft_targets.empty(); }

    /// Row-gather preserving whichever targets are present.
    Dataset subset(const std::vector<std::size_t>& indices) const;
};

enum class PreprocessKind : std::uint8_t { Standardize = 0, Gcn = 1, Zca = 2 };

/// Frozen preprocessing statistics, always fit on the training split and
/// re-applied to every other split.
struct PreprocessStats {
    PreprocessKind kind = PreprocessKind::Standardize;
    std::vector<double> mu;
    std::vector<double> sigma;      // empty for zca
    Matrix zca_matrix;              // present iff kind == Zca; symmetric
    double epsilon = 1e-8;
};

// ---- CSV ingestion -------------------------------------------------------
// Contract: optional header row (auto-detected: a first row with any
// non-numeric cell is a header), comma separators, '.' decimal point, LF or
// CRLF line endings. Values are written with up to 17 significant digits so
// 64-bit reals round-trip exactly.

/// label_column is a zero-based index or a header name.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 std::size_t class_count);

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path);

Matrix load_matrix_csv(const std::filesystem::path& path);
void save_matrix_csv(const Matrix& m, const std::filesystem::path& path,
                     const std::string& col_prefix = "c");

// ---- Preprocessing -------------------------------------------------------

/// Per-column (x - mean) / max(std, 1e-8) using this dataset's statistics.
std::pair<Dataset, PreprocessStats> standardize(const Dataset& train);

/// Re-applies frozen stats (any kind) to another dataset or matrix.
Dataset apply_stats(const PreprocessStats& stats, const Dataset& other);
Matrix apply_stats(const PreprocessStats& stats, const Matrix& features);

/// Global contrast normalization: per-row mean subtraction and division by
/// the per-row population std (1e-8 floor).
Matrix gcn(const Matrix& images);

/// Fits the symmetric whitening transform E (Lambda + eps I)^{-1/2} E^T of
/// the column-centered covariance X^T X / N. Negative numerical eigenvalues
/// are clamped to zero.
PreprocessStats zca_fit(const Matrix& images, double epsilon);
Matrix zca_apply(const PreprocessStats& stats, const Matrix& images);

/// Symmetric eigendecomposition by cyclic Jacobi rotations. Returns
/// eigenvalues (ascending) and the matrix whose columns are eigenvectors.
/// Throws NumericError if the off-diagonal mass fails to vanish.
struct EigenResult {
    std::vector<double> values;
    Matrix vectors;
};
EigenResult jacobi_eigensym(const Matrix& sym);

// ---- Synthetic benchmark data --------------------------------------------

/// Gaussian-mixture class-conditional generator: each class owns several
/// unit-variance clusters whose centers are drawn from N(0, separation^2 I),
/// giving non-linearly-separable structure. All splits are i.i.d. from the
/// same distribution and deterministic per seed.
struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t dims = 64;
    std::size_t clusters_per_class = 3;
    double separation = 1.0;
    std::size_t n_train = 0;
    std::size_t n_unlabeled = 0;
    std::size_t n_dev = 0;
    std::size_t n_test = 0;

    void validate() const;
};

struct SyntheticData {
    Dataset train;
    Matrix unlabeled;  // features only
    Dataset dev;
    Dataset test;
};

SyntheticData make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Seeded shuffle then contiguous slicing; fractions must be positive and
/// sum to at most 1.
std::vector<Dataset> split(const Dataset& dataset, const std::vector<double>& fractions,
                           std::uint64_t seed);

}  // namespace smim
