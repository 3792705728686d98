#include "smim/distill.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "smim/serialize.hpp"

namespace smim {

namespace {

constexpr double kSigmaFloor = 1e-8;

}  // namespace

void EnsembleModel::validate() const {
    if (members.empty()) throw ContractError("EnsembleModel: no members");
    for (const auto& m : members) {
        if (m.spec.output_dim != members.front().spec.output_dim) {
            throw ContractError("EnsembleModel: members disagree on output dimension");
        }
        if (m.spec.input_dim != members.front().spec.input_dim) {
            throw ContractError("EnsembleModel: members disagree on input dimension");
        }
    }
}

Matrix extract_logits(const Model& teacher, const Matrix& features) {
    if (features.cols() != teacher.spec.input_dim) {
        throw ShapeError("extract_logits: feature width " + std::to_string(features.cols()) +
                         " does not match teacher input " +
                         std::to_string(teacher.spec.input_dim));
    }
    constexpr std::size_t kBatch = 256;
    Matrix out(features.rows(), teacher.spec.output_dim);
    for (std::size_t begin = 0; begin < features.rows(); begin += kBatch) {
        const std::size_t end = std::min(begin + kBatch, features.rows());
        Matrix batch(end - begin, features.cols());
        for (std::size_t r = begin; r < end; ++r) {
            for (std::size_t j = 0; j < features.cols(); ++j) {
                batch(r - begin, j) = features(r, j);
            }
        }
        const Matrix logits = forward_eval(teacher, batch);
        for (std::size_t r = begin; r < end; ++r) {
            for (std::size_t j = 0; j < out.cols(); ++j) out(r, j) = logits(r - begin, j);
        }
    }
    return out;
}

Matrix ensemble_logits(const EnsembleModel& ensemble, const Matrix& features) {
    ensemble.validate();
    Matrix sum = extract_logits(ensemble.members[0], features);
    for (std::size_t k = 1; k < ensemble.members.size(); ++k) {
        const Matrix next = extract_logits(ensemble.members[k], features);
        for (std::size_t n = 0; n < sum.size(); ++n) sum.flat()[n] += next.flat()[n];
    }
    const double inv = 1.0 / static_cast<double>(ensemble.members.size());
    for (double& v : sum.flat()) v *= inv;
    return sum;
}

LogitTargets normalize_logits(const Matrix& raw) {
    if (raw.rows() == 0) throw DomainError("normalize_logits: empty logit matrix");
    const auto st = axis_stats(raw, Axis::Rows);
    LogitTargets t;
    t.mu = st.mean;
    t.sigma = st.std_dev;
    t.normalized = true;
    t.logits = raw;
    for (std::size_t j = 0; j < raw.cols(); ++j) {
        const double denom = std::max(t.sigma[j], kSigmaFloor);
        for (std::size_t i = 0; i < raw.rows(); ++i) {
            t.logits(i, j) = (t.logits(i, j) - t.mu[j]) / denom;
        }
    }
    return t;
}

Matrix denormalize_logits(const LogitTargets& targets) {
    if (!targets.normalized) return targets.logits;
    Matrix out = targets.logits;
    for (std::size_t j = 0; j < out.cols(); ++j) {
        const double s = std::max(targets.sigma[j], kSigmaFloor);
        for (std::size_t i = 0; i < out.rows(); ++i) {
            out(i, j) = out(i, j) * s + targets.mu[j];
        }
    }
    return out;
}

Matrix normalize_with(const std::vector<double>& mu, const std::vector<double>& sigma,
                      const Matrix& raw) {
    if (raw.cols() != mu.size() || raw.cols() != sigma.size()) {
        throw ShapeError("normalize_with: " + std::to_string(raw.cols()) +
                         " columns vs stats for " + std::to_string(mu.size()));
    }
    Matrix out = raw;
    for (std::size_t j = 0; j < out.cols(); ++j) {
        const double denom = std::max(sigma[j], kSigmaFloor);
        for (std::size_t i = 0; i < out.rows(); ++i) {
            out(i, j) = (out(i, j) - mu[j]) / denom;
        }
    }
    return out;
}

TransferSet build_transfer_set(const Dataset& labeled, const Matrix& unlabeled_features,
                               const EnsembleModel& teacher, bool normalize) {
    teacher.validate();
    if (unlabeled_features.rows() > 0 && unlabeled_features.cols() != labeled.dim()) {
        throw ShapeError("build_transfer_set: labeled width " + std::to_string(labeled.dim()) +
                         " vs unlabeled width " + std::to_string(unlabeled_features.cols()));
    }
    if (labeled.dim() != teacher.input_dim()) {
        throw ShapeError("build_transfer_set: feature width " + std::to_string(labeled.dim()) +
                         " does not match teacher input " + std::to_string(teacher.input_dim()));
    }

    Matrix features(labeled.size() + unlabeled_features.rows(), labeled.dim());
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        for (std::size_t j = 0; j < labeled.dim(); ++j) features(i, j) = labeled.features(i, j);
    }
    for (std::size_t i = 0; i < unlabeled_features.rows(); ++i) {
        for (std::size_t j = 0; j < labeled.dim(); ++j) {
            features(labeled.size() + i, j) = unlabeled_features(i, j);
        }
    }

    const Matrix raw = ensemble_logits(teacher, features);

    TransferSet ts;
    ts.normalized = normalize;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& m : teacher.members) h ^= model_hash(m);
    ts.teacher_hash = h;
    ts.data.class_count = teacher.output_dim();
    ts.data.input_shape = labeled.input_shape;
    ts.data.features = std::move(features);
    if (normalize) {
        LogitTargets t = normalize_logits(raw);
        ts.data.soft_targets = std::move(t.logits);
        ts.mu = std::move(t.mu);
        ts.sigma = std::move(t.sigma);
    } else {
        ts.data.soft_targets = raw;
        ts.mu.assign(raw.cols(), 0.0);
        ts.sigma.assign(raw.cols(), 1.0);
    }
    return ts;
}

Model bake_output_denorm(const Model& model, const std::vector<double>& mu,
                         const std::vector<double>& sigma) {
    const auto* last = std::get_if<DenseSpec>(&model.spec.layers.back());
    if (last == nullptr || last->activation != Activation::Identity) {
        throw ContractError("bake_output_denorm: final layer must be an identity Dense");
    }
    if (mu.size() != last->out || sigma.size() != last->out) {
        throw ShapeError("bake_output_denorm: stats length does not match output dimension");
    }
    Model out = model;
    LayerParams& lp = out.params.back();
    for (std::size_t o = 0; o < last->out; ++o) {
        const double s = std::max(sigma[o], kSigmaFloor);
        for (std::size_t i = 0; i < lp.weight.cols(); ++i) lp.weight(o, i) *= s;
        lp.bias[o] = lp.bias[o] * s + mu[o];
    }
    return out;
}

void save_transfer_set(const TransferSet& ts, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_matrix_csv(ts.data.features, dir / "features.csv", "f");
    save_matrix_csv(ts.data.soft_targets, dir / "targets.csv", "z");

    std::FILE* f = std::fopen((dir / "transfer.meta").c_str(), "wb");
    if (f == nullptr) throw DataError("cannot write " + (dir / "transfer.meta").string());
    std::fprintf(f, "classes = %zu\n", ts.data.class_count);
    std::fprintf(f, "normalized = %s\n", ts.normalized ? "true" : "false");
    std::fprintf(f, "mu = ");
    for (std::size_t j = 0; j < ts.mu.size(); ++j) {
        std::fprintf(f, "%.17g%s", ts.mu[j], j + 1 == ts.mu.size() ? "\n" : ",");
    }
    std::fprintf(f, "sigma = ");
    for (std::size_t j = 0; j < ts.sigma.size(); ++j) {
        std::fprintf(f, "%.17g%s", ts.sigma[j], j + 1 == ts.sigma.size() ? "\n" : ",");
    }
    std::fprintf(f, "teacher_hash = %016llx\n", static_cast<unsigned long long>(ts.teacher_hash));
    std::fclose(f);
}

TransferSet load_transfer_set(const std::filesystem::path& dir) {
    TransferSet ts;
    ts.data.features = load_matrix_csv(dir / "features.csv");
    ts.data.soft_targets = load_matrix_csv(dir / "targets.csv");

    std::ifstream meta(dir / "transfer.meta");
    if (!meta) throw DataError("cannot open " + (dir / "transfer.meta").string());
    std::string line;
    while (std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key == "classes") {
            ts.data.class_count = std::stoull(value);
        } else if (key == "normalized") {
            ts.normalized = value == "true";
        } else if (key == "mu" || key == "sigma") {
            std::vector<double> vals;
            std::stringstream ss(value);
            std::string cell;
            while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
            (key == "mu" ? ts.mu : ts.sigma) = std::move(vals);
        } else if (key == "teacher_hash") {
            ts.teacher_hash = std::stoull(value, nullptr, 16);
        } else {
            throw DataError("transfer.meta: unknown key '" + key + "'");
        }
    }
    if (ts.data.class_count == 0 || ts.data.soft_targets.cols() != ts.data.class_count) {
        throw DataError("transfer.meta: class count does not match targets.csv");
    }
    return ts;
}

}  // namespace smim
