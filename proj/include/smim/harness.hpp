#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "smim/config.hpp"
#include "smim/distill.hpp"
#include "smim/optim.hpp"

namespace smim {

/// Parses a dash-separated architecture string into a network spec and
/// appends the linear output layer. Tokens:
///   800r / 800     ReLU dense layer of 800 units
///   250L           identity (linear bottleneck) dense layer
///   drop0.5        dropout
///   conv8x3x3      conv, 8 output channels, 3x3 kernel (image input only)
///   pool2x2        max pooling
///   flat           flatten
/// An empty string yields just the output layer.
NetworkSpec parse_arch(const std::string& text, std::size_t input_dim,
                       const std::optional<ImageShape>& image, std::size_t classes);

/// Non-linear (ReLU dense) hidden units; linear bottleneck units and the
/// output layer are not counted.
std::size_t nonlinear_hidden_units(const NetworkSpec& spec);

/// The fixed desk-scale benchmark every run-based claim is measured on.
SyntheticSpec benchmark_spec();
std::uint64_t benchmark_data_seed();

struct ExperimentData {
    Dataset train;
    Dataset dev;
    Dataset test;
    Matrix unlabeled;
    std::optional<PreprocessStats> stats;
};

/// Synthetic (default) or CSV-backed splits per the data config keys, with
/// standardization fit on train and frozen onto dev/test/unlabeled.
ExperimentData load_experiment_data(const Config& cfg);

struct SweepRow {
    std::string model_id;
    std::uint64_t params = 0;
    std::size_t hidden_units = 0;
    std::string regime;  // direct | mimic
    double dev_error = 0.0;
    double test_error = 0.0;
    std::optional<double> teacher_error;
};

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

TrainConfig train_config_from(const Config& cfg, std::uint64_t seed, LossKind default_loss);

double ensemble_error(const EnsembleModel& ensemble, const Dataset& dataset);

// Sub-commands. Each validates its configuration before any compute and
// writes outputs under the `out` directory.
void cmd_train_teacher(const Config& cfg, std::ostream& out);
void cmd_train_baseline(const Config& cfg, std::ostream& out);
void cmd_distill(const Config& cfg, std::ostream& out);
void cmd_eval(const Config& cfg, std::ostream& out);
void cmd_sweep_params(const Config& cfg, std::ostream& out);
void cmd_sweep_teacher(const Config& cfg, std::ostream& out);
void cmd_absorb(const Config& cfg, std::ostream& out);

/// Full CLI: subcommand, optional --config file, then --key value overrides.
/// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error,
/// 1 anything else.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace smim
