#include "smim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace smim {

namespace {

constexpr double kSigmaFloor = 1e-8;

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

bool parse_double(const std::string& text, double& out) {
    if (text.empty()) return false;
    const char* begin = text.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end == begin + text.size() && std::isfinite(out);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();  // CRLF
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

void write_csv_value(std::FILE* f, double v) {
    std::fprintf(f, "%.17g", v);
}

struct CsvFile {
    std::FILE* f = nullptr;
    explicit CsvFile(const std::filesystem::path& path) : f(std::fopen(path.c_str(), "wb")) {
        if (f == nullptr) throw DataError("cannot write " + path.string());
    }
    ~CsvFile() {
        if (f != nullptr) std::fclose(f);
    }
    CsvFile(const CsvFile&) = delete;
    CsvFile& operator=(const CsvFile&) = delete;
};

}  // namespace

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
    Dataset out;
    out.class_count = class_count;
    out.input_shape = input_shape;
    out.features = Matrix(indices.size(), features.cols());
    if (has_soft_targets()) out.soft_targets = Matrix(indices.size(), soft_targets.cols());
    if (has_hard_labels()) out.hard_labels.reserve(indices.size());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t src = indices[r];
        for (std::size_t j = 0; j < features.cols(); ++j) out.features(r, j) = features(src, j);
        if (has_soft_targets()) {
            for (std::size_t j = 0; j < soft_targets.cols(); ++j) {
                out.soft_targets(r, j) = soft_targets(src, j);
            }
        }
        if (has_hard_labels()) out.hard_labels.push_back(hard_labels[src]);
    }
    return out;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column,
                 std::size_t class_count) {
    if (class_count == 0) throw ConfigError("load_csv: class_count must be positive");
    const auto lines = read_lines(path);
    if (lines.empty()) throw DataError(path.string() + ": empty file");

    const auto first = split_fields(lines[0]);
    bool has_header = false;
    for (const auto& cell : first) {
        double unused;
        if (!parse_double(cell, unused)) {
            has_header = true;
            break;
        }
    }

    // Resolve the label column: a non-negative integer means an index,
    // anything else is a header name.
    std::size_t label_idx = 0;
    bool numeric_column = !label_column.empty() &&
                          label_column.find_first_not_of("0123456789") == std::string::npos;
    if (numeric_column) {
        label_idx = static_cast<std::size_t>(std::stoull(label_column));
        if (label_idx >= first.size()) {
            throw ConfigError("load_csv: label column index " + label_column +
                              " out of range for " + std::to_string(first.size()) + " columns");
        }
    } else {
        if (!has_header) {
            throw ConfigError("load_csv: label column '" + label_column +
                              "' named but file has no header row");
        }
        auto it = std::find(first.begin(), first.end(), label_column);
        if (it == first.end()) {
            throw ConfigError("load_csv: no header column named '" + label_column + "'");
        }
        label_idx = static_cast<std::size_t>(it - first.begin());
    }

    const std::size_t width = first.size();
    if (width < 2) throw DataError(path.string() + ": need at least one feature column");

    Dataset ds;
    ds.class_count = class_count;
    const std::size_t start = has_header ? 1 : 0;
    const std::size_t n = lines.size() - start;
    ds.features = Matrix(n, width - 1);
    ds.hard_labels.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t line_no = start + r + 1;  // 1-based for messages
        const auto fields = split_fields(lines[start + r]);
        if (fields.size() != width) {
            throw DataError(path.string() + ": row " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(width));
        }
        std::size_t out_col = 0;
        for (std::size_t c = 0; c < width; ++c) {
            if (c == label_idx) {
                double v;
                if (!parse_double(fields[c], v) || v != std::floor(v) || v < 0.0) {
                    throw DataError(path.string() + ": row " + std::to_string(line_no) +
                                    ": label '" + fields[c] + "' is not a non-negative integer");
                }
                const auto label = static_cast<std::size_t>(v);
                if (label >= class_count) {
                    throw DataError(path.string() + ": row " + std::to_string(line_no) +
                                    ": label " + std::to_string(label) + " outside [0," +
                                    std::to_string(class_count) + ")");
                }
                ds.hard_labels.push_back(label);
            } else {
                double v;
                if (!parse_double(fields[c], v)) {
                    throw DataError(path.string() + ": row " + std::to_string(line_no) +
                                    ": cell '" + fields[c] + "' is not a finite number");
                }
                ds.features(r, out_col++) = v;
            }
        }
    }
    return ds;
}

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
    if (!ds.has_hard_labels()) {
        throw ContractError("save_dataset_csv: dataset has no hard labels");
    }
    CsvFile file(path);
    for (std::size_t j = 0; j < ds.features.cols(); ++j) std::fprintf(file.f, "f%zu,", j);
    std::fprintf(file.f, "label\n");
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.features.cols(); ++j) {
            write_csv_value(file.f, ds.features(i, j));
            std::fputc(',', file.f);
        }
        std::fprintf(file.f, "%zu\n", ds.hard_labels[i]);
    }
}

Matrix load_matrix_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw DataError(path.string() + ": empty file");
    const auto first = split_fields(lines[0]);
    bool has_header = false;
    for (const auto& cell : first) {
        double unused;
        if (!parse_double(cell, unused)) {
            has_header = true;
            break;
        }
    }
    const std::size_t start = has_header ? 1 : 0;
    const std::size_t width = first.size();
    Matrix out(lines.size() - start, width);
    for (std::size_t r = start; r < lines.size(); ++r) {
        const auto fields = split_fields(lines[r]);
        if (fields.size() != width) {
            throw DataError(path.string() + ": row " + std::to_string(r + 1) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(width));
        }
        for (std::size_t c = 0; c < width; ++c) {
            double v;
            if (!parse_double(fields[c], v)) {
                throw DataError(path.string() + ": row " + std::to_string(r + 1) + ": cell '" +
                                fields[c] + "' is not a finite number");
            }
            out(r - start, c) = v;
        }
    }
    return out;
}

void save_matrix_csv(const Matrix& m, const std::filesystem::path& path,
                     const std::string& col_prefix) {
    CsvFile file(path);
    for (std::size_t j = 0; j < m.cols(); ++j) {
        std::fprintf(file.f, "%s%zu%s", col_prefix.c_str(), j,
                     j + 1 == m.cols() ? "\n" : ",");
    }
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            write_csv_value(file.f, m(i, j));
            std::fputc(j + 1 == m.cols() ? '\n' : ',', file.f);
        }
    }
}

std::pair<Dataset, PreprocessStats> standardize(const Dataset& train) {
    if (train.size() == 0) throw DomainError("standardize: empty dataset");
    const auto st = axis_stats(train.features, Axis::Rows);
    PreprocessStats stats;
    stats.kind = PreprocessKind::Standardize;
    stats.mu = st.mean;
    stats.sigma = st.std_dev;
    stats.epsilon = kSigmaFloor;
    Dataset out = train;
    out.features = apply_stats(stats, train.features);
    return {std::move(out), std::move(stats)};
}

Matrix apply_stats(const PreprocessStats& stats, const Matrix& features) {
    switch (stats.kind) {
        case PreprocessKind::Standardize: {
            if (features.cols() != stats.mu.size()) {
                throw ShapeError("apply_stats: " + std::to_string(features.cols()) +
                                 " columns vs stats for " + std::to_string(stats.mu.size()));
            }
            Matrix out = features;
            for (std::size_t j = 0; j < out.cols(); ++j) {
                const double denom = std::max(stats.sigma[j], stats.epsilon);
                for (std::size_t i = 0; i < out.rows(); ++i) {
                    out(i, j) = (out(i, j) - stats.mu[j]) / denom;
                }
            }
            return out;
        }
        case PreprocessKind::Gcn:
            return gcn(features);
        case PreprocessKind::Zca:
            return zca_apply(stats, features);
    }
    throw ContractError("apply_stats: unknown kind");
}

Dataset apply_stats(const PreprocessStats& stats, const Dataset& other) {
    Dataset out = other;
    out.features = apply_stats(stats, other.features);
    return out;
}

Matrix gcn(const Matrix& images) {
    if (images.cols() < 2) throw DomainError("gcn: need at least 2 feature dimensions");
    const auto st = axis_stats(images, Axis::Cols);
    Matrix out = images;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        const double denom = std::max(st.std_dev[i], kSigmaFloor);
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out(i, j) = (out(i, j) - st.mean[i]) / denom;
        }
    }
    return out;
}

EigenResult jacobi_eigensym(const Matrix& sym) {
    if (sym.rows() != sym.cols()) {
        throw ShapeError("jacobi_eigensym: matrix " + sym.shape_str() + " is not square");
    }
    const std::size_t n = sym.rows();
    Matrix a = sym;
    Matrix vectors(n, n);
    for (std::size_t i = 0; i < n; ++i) vectors(i, i) = 1.0;

    auto offdiag = [&a, n]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
        }
        return s;
    };

    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a(i, i)));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) scale = std::max(scale, std::abs(a(i, j)));
    }
    const double tol = std::max(scale, 1.0) * 1e-14;

    constexpr int kMaxSweeps = 100;
    int sweep = 0;
    while (offdiag() > tol * tol * static_cast<double>(n * n)) {
        if (++sweep > kMaxSweeps) {
            throw NumericError("jacobi_eigensym: no convergence after " +
                               std::to_string(kMaxSweeps) + " sweeps");
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) <= tol * 1e-3) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = vectors(k, p), vkq = vectors(k, q);
                    vectors(k, p) = c * vkp - s * vkq;
                    vectors(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&a](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    EigenResult res;
    res.values.resize(n);
    res.vectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        res.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) res.vectors(i, j) = vectors(i, order[j]);
    }
    return res;
}

PreprocessStats zca_fit(const Matrix& images, double epsilon) {
    if (images.rows() < 2) throw DomainError("zca_fit: need at least 2 rows");
    if (!(epsilon > 0.0)) throw DomainError("zca_fit: epsilon must be positive");
    const std::size_t n = images.rows(), d = images.cols();
    const auto st = axis_stats(images, Axis::Rows);

    Matrix centered = images;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) centered(i, j) -= st.mean[j];
    }
    Matrix cov = matmul(transpose(centered), centered);
    for (double& v : cov.flat()) v /= static_cast<double>(n);

    const EigenResult eig = jacobi_eigensym(cov);
    PreprocessStats stats;
    stats.kind = PreprocessKind::Zca;
    stats.mu = st.mean;
    stats.epsilon = epsilon;

    // E diag((lambda + eps)^-1/2) E^T, with negative numerical eigenvalues
    // clamped at zero; symmetrized exactly afterwards.
    Matrix scaled = eig.vectors;  // columns scaled by (lambda+eps)^-1/2
    for (std::size_t j = 0; j < d; ++j) {
        const double lam = std::max(eig.values[j], 0.0);
        const double w = 1.0 / std::sqrt(lam + epsilon);
        for (std::size_t i = 0; i < d; ++i) scaled(i, j) *= w;
    }
    Matrix zca = matmul(scaled, transpose(eig.vectors));
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            const double v = 0.5 * (zca(i, j) + zca(j, i));
            zca(i, j) = v;
            zca(j, i) = v;
        }
    }
    stats.zca_matrix = std::move(zca);
    return stats;
}

Matrix zca_apply(const PreprocessStats& stats, const Matrix& images) {
    if (stats.kind != PreprocessKind::Zca || stats.zca_matrix.empty()) {
        throw ContractError("zca_apply: stats were not fit by zca_fit");
    }
    if (images.cols() != stats.mu.size()) {
        throw ShapeError("zca_apply: " + std::to_string(images.cols()) + " columns vs stats for " +
                         std::to_string(stats.mu.size()));
    }
    Matrix centered = images;
    for (std::size_t i = 0; i < centered.rows(); ++i) {
        for (std::size_t j = 0; j < centered.cols(); ++j) centered(i, j) -= stats.mu[j];
    }
    return matmul(centered, stats.zca_matrix);  // zca matrix is symmetric
}

void SyntheticSpec::validate() const {
    if (classes < 2) throw ConfigError("make_synthetic: need at least 2 classes");
    if (dims == 0) throw ConfigError("make_synthetic: dims must be positive");
    if (clusters_per_class == 0) throw ConfigError("make_synthetic: clusters must be positive");
    if (!(separation >= 0.0)) throw ConfigError("make_synthetic: separation must be >= 0");
}

SyntheticData make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    RngStream root(seed);

    RngStream center_rng = root.child(0);
    const std::size_t total_clusters = spec.classes * spec.clusters_per_class;
    Matrix centers = sample_gaussian(center_rng, total_clusters, spec.dims, 0.0, spec.separation);

    auto draw_split = [&](RngStream rng, std::size_t n, bool keep_labels) {
        Dataset ds;
        ds.class_count = spec.classes;
        ds.features = Matrix(n, spec.dims);
        if (keep_labels) ds.hard_labels.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t cls = rng.below(spec.classes);
            const std::size_t cluster = rng.below(spec.clusters_per_class);
            const std::size_t c_row = cls * spec.clusters_per_class + cluster;
            for (std::size_t j = 0; j < spec.dims; ++j) {
                ds.features(i, j) = centers(c_row, j) + rng.gaussian();
            }
            if (keep_labels) ds.hard_labels.push_back(cls);
        }
        return ds;
    };

    SyntheticData data;
    data.train = draw_split(root.child(1), spec.n_train, true);
    data.unlabeled = draw_split(root.child(2), spec.n_unlabeled, false).features;
    data.dev = draw_split(root.child(3), spec.n_dev, true);
    data.test = draw_split(root.child(4), spec.n_test, true);
    return data;
}

std::vector<Dataset> split(const Dataset& dataset, const std::vector<double>& fractions,
                           std::uint64_t seed) {
    if (fractions.empty()) throw ConfigError("split: no fractions given");
    double total = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw ConfigError("split: fractions must be positive");
        total += f;
    }
    if (total > 1.0 + 1e-9) throw ConfigError("split: fractions sum to more than 1");

    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }

    std::vector<Dataset> parts;
    parts.reserve(fractions.size());
    std::size_t pos = 0;
    for (double f : fractions) {
        const auto want = static_cast<std::size_t>(
            std::llround(f * static_cast<double>(dataset.size())));
        const std::size_t take = std::min(want, dataset.size() - pos);
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                     order.begin() + static_cast<std::ptrdiff_t>(pos + take));
        parts.push_back(dataset.subset(idx));
        pos += take;
    }
    return parts;
}

}  // namespace smim
