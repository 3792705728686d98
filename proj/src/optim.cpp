#include "smim/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace smim {

namespace {

// Offsets for deriving per-epoch child streams from the config seed, kept
// clear of the harness-level stream ids.
constexpr std::uint64_t kShuffleStreamBase = 0x100000000ULL;
constexpr std::uint64_t kDropoutStreamBase = 0x100000001ULL;

std::vector<std::size_t> batch_indices(const std::vector<std::size_t>& order, std::size_t begin,
                                       std::size_t end) {
    return {order.begin() + static_cast<std::ptrdiff_t>(begin),
            order.begin() + static_cast<std::ptrdiff_t>(end)};
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const double* src = m.row_ptr(idx[r]);
        double* dst = out.row_ptr(r);
        for (std::size_t j = 0; j < m.cols(); ++j) dst[j] = src[j];
    }
    return out;
}

std::size_t argmax_row(const double* row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j) {
        if (row[j] > row[best]) best = j;  // ties keep the lowest index
    }
    return best;
}

// Dev loss for the epoch record: the training objective when the dev split
// carries compatible targets, otherwise cross-entropy against hard labels
// (computed on denormalized logits when a restore transform is in play).
double dev_loss_for(const TrainConfig& config, const Dataset& dev, const Matrix& logits,
                    const LogitDenorm* denorm) {
    if (loss_needs_soft_targets(config.loss) && dev.has_soft_targets()) {
        return compute_loss(config.loss, logits, {}, dev.soft_targets).loss;
    }
    if (config.loss == LossKind::CrossEntropyHard && dev.has_hard_labels()) {
        return xent_softmax(logits, dev.hard_labels).loss;
    }
    const Matrix restored = denorm != nullptr ? apply_denorm(*denorm, logits) : logits;
    return xent_softmax(restored, dev.hard_labels).loss;
}

}  // namespace

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("TrainConfig: momentum must be in [0,1)");
    }
    if (batch_size == 0) throw ConfigError("TrainConfig: batch_size must be >= 1");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) {
        throw ConfigError("TrainConfig: lr_decay must be in (0,1]");
    }
}

Matrix apply_denorm(const LogitDenorm& denorm, const Matrix& logits) {
    if (logits.cols() != denorm.mu.size() || logits.cols() != denorm.sigma.size()) {
        throw ShapeError("apply_denorm: " + std::to_string(logits.cols()) +
                         " columns vs stats for " + std::to_string(denorm.mu.size()));
    }
    Matrix out = logits;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            out(i, j) = denorm.sigma[j] * out(i, j) + denorm.mu[j];
        }
    }
    return out;
}

void sgd_momentum_step(Matrix& params, const Matrix& grads, Matrix& velocity, double lr,
                       double momentum) {
    if (!params.same_shape(grads) || !params.same_shape(velocity)) {
        throw ShapeError("sgd_momentum_step: params " + params.shape_str() + ", grads " +
                         grads.shape_str() + ", velocity " + velocity.shape_str());
    }
    for (std::size_t n = 0; n < params.size(); ++n) {
        velocity.flat()[n] = momentum * velocity.flat()[n] - lr * grads.flat()[n];
        params.flat()[n] += velocity.flat()[n];
    }
}

void sgd_momentum_step(std::vector<double>& params, const std::vector<double>& grads,
                       std::vector<double>& velocity, double lr, double momentum) {
    if (params.size() != grads.size() || params.size() != velocity.size()) {
        throw ShapeError("sgd_momentum_step: vector lengths " + std::to_string(params.size()) +
                         ", " + std::to_string(grads.size()) + ", " +
                         std::to_string(velocity.size()));
    }
    for (std::size_t n = 0; n < params.size(); ++n) {
        velocity[n] = momentum * velocity[n] - lr * grads[n];
        params[n] += velocity[n];
    }
}

void sgd_momentum_step(Model& model, const Gradients& grads, std::vector<LayerParams>& velocity,
                       double lr, double momentum) {
    if (grads.layers.size() != model.params.size() || velocity.size() != model.params.size()) {
        throw ShapeError("sgd_momentum_step: layer count mismatch");
    }
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        if (model.params[i].weight.empty()) continue;
        sgd_momentum_step(model.params[i].weight, grads.layers[i].weight, velocity[i].weight, lr,
                          momentum);
        sgd_momentum_step(model.params[i].bias, grads.layers[i].bias, velocity[i].bias, lr,
                          momentum);
    }
}

std::vector<LayerParams> zero_like(const Model& model) {
    std::vector<LayerParams> out(model.params.size());
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        out[i].weight = Matrix(model.params[i].weight.rows(), model.params[i].weight.cols());
        out[i].bias.assign(model.params[i].bias.size(), 0.0);
    }
    return out;
}

TrainResult train(const Model& model, const Dataset& train_set, const Dataset& dev_set,
                  const TrainConfig& config, const LogitDenorm* denorm) {
    config.validate();
    if (train_set.size() == 0) throw ConfigError("train: empty training set");
    if (loss_needs_soft_targets(config.loss)) {
        if (!train_set.has_soft_targets()) {
            throw ConfigError("train: loss " + to_string(config.loss) +
                              " requires soft targets on the training set");
        }
        if (train_set.soft_targets.cols() != model.spec.output_dim) {
            throw ConfigError("train: soft target width " +
                              std::to_string(train_set.soft_targets.cols()) +
                              " does not match output dimension " +
                              std::to_string(model.spec.output_dim));
        }
    } else if (!train_set.has_hard_labels()) {
        throw ConfigError("train: cross-entropy requires hard labels on the training set");
    }
    if (!dev_set.has_hard_labels()) {
        throw ConfigError("train: dev set needs hard labels for error-rate reporting");
    }
    if (train_set.dim() != model.spec.input_dim || dev_set.dim() != model.spec.input_dim) {
        throw ConfigError("train: dataset width does not match model input dimension");
    }

    TrainResult result;
    result.model = model;
    if (config.max_epochs == 0) return result;

    const std::size_t n = train_set.size();
    auto velocity = zero_like(result.model);
    const RngStream base(config.seed);
    const std::uint64_t params = result.model.param_count();

    Model best_model = result.model;
    double best_dev_error = std::numeric_limits<double>::infinity();
    std::size_t epochs_since_best = 0;

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    double lr = config.learning_rate;
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        if (config.shuffle) {
            RngStream shuffle_rng = base.child(kShuffleStreamBase + 2 * epoch);
            for (std::size_t i = n; i > 1; --i) {
                std::swap(order[i - 1], order[shuffle_rng.below(i)]);
            }
        }
        RngStream dropout_rng = base.child(kDropoutStreamBase + 2 * epoch);

        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(begin + config.batch_size, n);
            const auto idx = batch_indices(order, begin, end);
            const Matrix batch = gather_rows(train_set.features, idx);

            auto fwd = forward(result.model, batch, Mode::Train, dropout_rng);
            LossResult lr_res;
            if (loss_needs_soft_targets(config.loss)) {
                lr_res = compute_loss(config.loss, fwd.logits, {},
                                      gather_rows(train_set.soft_targets, idx));
            } else {
                std::vector<std::size_t> labels(idx.size());
                for (std::size_t r = 0; r < idx.size(); ++r) {
                    labels[r] = train_set.hard_labels[idx[r]];
                }
                lr_res = xent_softmax(fwd.logits, labels);
            }
            const Gradients grads = backward(result.model, fwd.cache, lr_res.dlogits);
            sgd_momentum_step(result.model, grads, velocity, lr, config.momentum);
            epoch_loss += lr_res.loss * static_cast<double>(idx.size());
        }

        const Matrix dev_logits = forward_eval(result.model, dev_set.features);
        MetricsRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(n);
        rec.dev_loss = dev_loss_for(config, dev_set, dev_logits, denorm);
        rec.dev_error_rate = evaluate(result.model, dev_set, denorm);
        rec.param_count = params;
        rec.elapsed_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.metrics.push_back(rec);

        if (config.early_stop_patience) {
            if (rec.dev_error_rate < best_dev_error) {
                best_dev_error = rec.dev_error_rate;
                best_model = result.model;
                epochs_since_best = 0;
            } else if (++epochs_since_best > *config.early_stop_patience) {
                break;
            }
        }
        lr *= config.lr_decay;
    }

    if (config.early_stop_patience) result.model = std::move(best_model);
    return result;
}

double evaluate(const Model& model, const Dataset& dataset) {
    return evaluate(model, dataset, nullptr);
}

double evaluate(const Model& model, const Dataset& dataset, const LogitDenorm* denorm) {
    if (dataset.size() == 0) throw ContractError("evaluate: empty dataset");
    if (!dataset.has_hard_labels()) throw ContractError("evaluate: dataset has no hard labels");

    constexpr std::size_t kBatch = 512;
    std::size_t wrong = 0;
    for (std::size_t begin = 0; begin < dataset.size(); begin += kBatch) {
        const std::size_t end = std::min(begin + kBatch, dataset.size());
        std::vector<std::size_t> idx(end - begin);
        for (std::size_t r = 0; r < idx.size(); ++r) idx[r] = begin + r;
        Matrix logits = forward_eval(model, gather_rows(dataset.features, idx));
        if (denorm != nullptr) logits = apply_denorm(*denorm, logits);
        for (std::size_t r = 0; r < logits.rows(); ++r) {
            if (argmax_row(logits.row_ptr(r), logits.cols()) != dataset.hard_labels[begin + r]) {
                ++wrong;
            }
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(dataset.size());
}

void write_metrics_csv(const std::vector<MetricsRecord>& records,
                       const std::filesystem::path& path, bool record_timings) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw DataError("cannot write " + path.string());
    std::fprintf(f, "epoch,train_loss,dev_loss,dev_error,seconds,params\n");
    for (const auto& r : records) {
        std::fprintf(f, "%zu,%.9g,%.9g,%.6f,%.3f,%llu\n", r.epoch, r.train_loss, r.dev_loss,
                     r.dev_error_rate, record_timings ? r.elapsed_seconds : 0.0,
                     static_cast<unsigned long long>(r.param_count));
    }
    std::fclose(f);
}

}  // namespace smim
