#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "smim/data.hpp"
#include "smim/loss.hpp"
#include "smim/nn.hpp"

namespace smim {

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 0;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::CrossEntropyHard;
    std::optional<std::size_t> early_stop_patience;
    double lr_decay = 1.0;  // multiplied into the rate after every epoch
    bool shuffle = true;

    void validate() const;
};

struct MetricsRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_loss = 0.0;
    double dev_error_rate = 0.0;
    double elapsed_seconds = 0.0;
    std::uint64_t param_count = 0;
};

/// Per-column affine restore z = sigma * g + mu applied to model outputs
/// before probability or argmax evaluation. Used when regression targets
/// were normalized teacher logits.
struct LogitDenorm {
    std::vector<double> mu;
    std::vector<double> sigma;
};

Matrix apply_denorm(const LogitDenorm& denorm, const Matrix& logits);

/// Heavy-ball update: v <- momentum*v - lr*g; theta <- theta + v.
void sgd_momentum_step(Matrix& params, const Matrix& grads, Matrix& velocity, double lr,
                       double momentum);
void sgd_momentum_step(std::vector<double>& params, const std::vector<double>& grads,
                       std::vector<double>& velocity, double lr, double momentum);
void sgd_momentum_step(Model& model, const Gradients& grads, std::vector<LayerParams>& velocity,
                       double lr, double momentum);

std::vector<LayerParams> zero_like(const Model& model);

struct TrainResult {
    Model model;
    std::vector<MetricsRecord> metrics;
};

/// Minibatch SGD-with-momentum loop: seeded shuffle each epoch, one
/// MetricsRecord per epoch, last ragged minibatch kept with its true size.
/// When early stopping is configured the dev-best model is returned,
/// otherwise the final one. Bit-reproducible for a fixed config seed.
/// `denorm`, when given, is applied to dev logits before error (and
/// cross-entropy fallback) evaluation.
TrainResult train(const Model& model, const Dataset& train_set, const Dataset& dev_set,
                  const TrainConfig& config, const LogitDenorm* denorm = nullptr);

/// Fraction of rows whose eval-mode argmax (ties -> lowest index) differs
/// from the hard label.
double evaluate(const Model& model, const Dataset& dataset);
double evaluate(const Model& model, const Dataset& dataset, const LogitDenorm* denorm);

/// Metrics CSV: header epoch,train_loss,dev_loss,dev_error,seconds,params.
/// Wall-clock seconds are only emitted when record_timings is set; the
/// default writes 0.000 so identical reruns produce identical bytes.
void write_metrics_csv(const std::vector<MetricsRecord>& records,
                       const std::filesystem::path& path, bool record_timings = false);

}  // namespace smim
