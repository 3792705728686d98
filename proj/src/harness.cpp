#include "smim/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

#include "smim/serialize.hpp"

namespace smim {

namespace fs = std::filesystem;

namespace {

// Harness-level child-stream ids, disjoint from the training loop's range.
constexpr std::uint64_t kInitStream = 0x10;
constexpr std::uint64_t kBootstrapStream = 0x20;

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        // run control
        "kind", "out", "seeds", "record_timings",
        // data
        "benchmark", "synthetic", "classes", "dims", "clusters", "separation", "n_train",
        "n_unlabeled", "n_dev", "n_test", "data_seed", "standardize", "train_csv", "dev_csv",
        "test_csv", "unlabeled_csv", "label_column", "image_shape",
        // training
        "loss", "learning_rate", "momentum", "batch_size", "max_epochs", "lr_decay", "patience",
        "shuffle",
        // teacher side
        "teacher_arch", "teacher_models", "bootstrap", "teacher_seed", "teacher_epochs",
        "teacher_learning_rate", "ladder_early_epochs",
        // student side
        "student_arch", "student_widths", "student_small", "student_large", "normalize_logits",
        "transfer_out",
        // eval / absorb
        "model", "dataset", "confusion", "eval_split", "out_model"};
    return keys;
}

fs::path out_dir(const Config& cfg) {
    fs::path dir(cfg.get_string("out"));
    fs::create_directories(dir);
    return dir;
}

std::vector<std::uint64_t> seed_list(const Config& cfg) {
    if (!cfg.has("seeds")) return {1};
    auto seeds = cfg.get_u64_list("seeds");
    if (seeds.empty()) throw ConfigError("seeds: empty list");
    return seeds;
}

Dataset bootstrap_resample(const Dataset& ds, RngStream rng) {
    std::vector<std::size_t> idx(ds.size());
    for (auto& v : idx) v = rng.below(ds.size());
    return ds.subset(idx);
}

EnsembleModel load_teachers(const Config& cfg) {
    EnsembleModel ens;
    for (const auto& path : cfg.get_list("teacher_models")) {
        ens.members.push_back(load_model(path));
    }
    ens.validate();
    return ens;
}

void check_teacher_matches(const EnsembleModel& ens, const ExperimentData& data) {
    if (ens.input_dim() != data.train.dim()) {
        throw ConfigError("teacher expects input width " + std::to_string(ens.input_dim()) +
                          " but data has " + std::to_string(data.train.dim()));
    }
    if (ens.output_dim() != data.train.class_count) {
        throw ConfigError("teacher emits " + std::to_string(ens.output_dim()) +
                          " outputs but data has " + std::to_string(data.train.class_count) +
                          " classes");
    }
}

// Dev split with teacher soft targets attached, so mimic training can report
// a dev loss in the same target space it trains in.
Dataset attach_soft_targets(const Dataset& dev, const EnsembleModel& ens,
                            const TransferSet& transfer) {
    Dataset out = dev;
    Matrix logits = ensemble_logits(ens, dev.features);
    if (transfer.normalized) logits = normalize_with(transfer.mu, transfer.sigma, logits);
    out.soft_targets = std::move(logits);
    return out;
}

struct MimicRun {
    Model model;  // raw-logit space (denormalization baked in when needed)
    std::vector<MetricsRecord> metrics;
};

MimicRun train_mimic_student(const NetworkSpec& spec, const TransferSet& transfer,
                             const Dataset& dev_soft, const TrainConfig& tc) {
    RngStream init_rng = RngStream(tc.seed).child(kInitStream);
    Model student = init_params(spec, init_rng);
    const LogitDenorm denorm = transfer.denorm();
    const LogitDenorm* denorm_ptr = transfer.normalized ? &denorm : nullptr;
    TrainResult res = train(student, transfer.data, dev_soft, tc, denorm_ptr);
    MimicRun run;
    run.model = transfer.normalized
                    ? bake_output_denorm(res.model, transfer.mu, transfer.sigma)
                    : std::move(res.model);
    run.metrics = std::move(res.metrics);
    return run;
}

LossKind mimic_loss_from(const Config& cfg) {
    const LossKind loss = loss_kind_from_string(cfg.get_string("loss", "l2_logit"));
    if (!loss_needs_soft_targets(loss)) {
        throw ConfigError("distillation requires a mimic loss (l2_logit, kl or l2_prob)");
    }
    return loss;
}

bool normalize_flag(const Config& cfg, LossKind loss) {
    // Normalized targets default on for logit regression, off for the
    // probability-space losses.
    return cfg.get_bool("normalize_logits", loss == LossKind::L2Logit);
}

std::string format_error(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

NetworkSpec parse_arch(const std::string& text, std::size_t input_dim,
                       const std::optional<ImageShape>& image, std::size_t classes) {
    std::vector<LayerSpec> layers;
    bool in_image = image.has_value();
    ImageShape shape = image.value_or(ImageShape{});
    std::size_t flat = input_dim;

    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        if (ch == '-') {
            if (!cur.empty()) tokens.push_back(cur);
            cur.clear();
        } else if (ch != ' ') {
            cur += ch;
        }
    }
    if (!cur.empty()) tokens.push_back(cur);

    auto parse_count = [](const std::string& tok, const std::string& what) {
        try {
            std::size_t pos = 0;
            const auto v = std::stoull(tok, &pos);
            if (pos != tok.size() || v == 0) throw std::invalid_argument(tok);
            return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            throw ConfigError("arch: bad " + what + " '" + tok + "'");
        }
    };

    for (const auto& tok : tokens) {
        if (tok.rfind("conv", 0) == 0) {
            if (!in_image) throw ConfigError("arch: conv layer needs image input");
            std::stringstream ss(tok.substr(4));
            std::size_t oc = 0, kh = 0, kw = 0;
            char x1 = 0, x2 = 0;
            ss >> oc >> x1 >> kh >> x2 >> kw;
            if (ss.fail() || x1 != 'x' || x2 != 'x' || oc == 0 || kh == 0 || kw == 0) {
                throw ConfigError("arch: bad conv token '" + tok + "' (want convCxKHxKW)");
            }
            layers.push_back(Conv2DSpec{shape.channels, oc, kh, kw});
            shape = ImageShape{oc, shape.height - kh + 1, shape.width - kw + 1};
        } else if (tok.rfind("pool", 0) == 0) {
            if (!in_image) throw ConfigError("arch: pool layer needs image input");
            std::stringstream ss(tok.substr(4));
            std::size_t ph = 0, pw = 0;
            char x1 = 0;
            ss >> ph >> x1 >> pw;
            if (ss.fail() || x1 != 'x' || ph == 0 || pw == 0) {
                throw ConfigError("arch: bad pool token '" + tok + "' (want poolHxW)");
            }
            layers.push_back(MaxPool2DSpec{ph, pw});
            shape = ImageShape{shape.channels, shape.height / ph, shape.width / pw};
        } else if (tok == "flat") {
            if (!in_image) throw ConfigError("arch: flat without image input");
            layers.push_back(FlattenSpec{});
            flat = shape.flat();
            in_image = false;
        } else if (tok.rfind("drop", 0) == 0) {
            char* end = nullptr;
            const std::string rate_text = tok.substr(4);
            const double rate = std::strtod(rate_text.c_str(), &end);
            if (rate_text.empty() || end != rate_text.c_str() + rate_text.size() || rate < 0.0 ||
                rate >= 1.0) {
                throw ConfigError("arch: bad dropout token '" + tok + "'");
            }
            layers.push_back(DropoutSpec{rate});
        } else {
            // NNN, NNNr (ReLU) or NNNL (linear bottleneck)
            std::string digits = tok;
            Activation act = Activation::Relu;
            if (!tok.empty() && (tok.back() == 'r' || tok.back() == 'L')) {
                act = tok.back() == 'L' ? Activation::Identity : Activation::Relu;
                digits = tok.substr(0, tok.size() - 1);
            }
            const std::size_t width = parse_count(digits, "layer width");
            if (in_image) {  // dense over image input implies flattening
                layers.push_back(FlattenSpec{});
                flat = shape.flat();
                in_image = false;
            }
            layers.push_back(DenseSpec{flat, width, act});
            flat = width;
        }
    }
    if (in_image) {
        layers.push_back(FlattenSpec{});
        flat = shape.flat();
    }
    layers.push_back(DenseSpec{flat, classes, Activation::Identity});

    NetworkSpec spec = image.has_value()
                           ? NetworkSpec::image_input(*image, std::move(layers), classes)
                           : NetworkSpec::flat_input(input_dim, std::move(layers), classes);
    spec.validate();
    return spec;
}

std::size_t nonlinear_hidden_units(const NetworkSpec& spec) {
    std::size_t units = 0;
    for (std::size_t i = 0; i + 1 < spec.layers.size(); ++i) {
        if (const auto* d = std::get_if<DenseSpec>(&spec.layers[i])) {
            if (d->activation == Activation::Relu) units += d->out;
        }
    }
    return units;
}

SyntheticSpec benchmark_spec() {
    SyntheticSpec spec;
    spec.classes = 10;
    spec.dims = 64;
    spec.clusters_per_class = 3;
    spec.separation = 0.45;  // overlapping clusters; teachers sit near 17% error
    spec.n_train = 5000;
    spec.n_unlabeled = 20000;
    spec.n_dev = 2000;
    spec.n_test = 2000;
    return spec;
}

std::uint64_t benchmark_data_seed() {
    return 1729;
}

ExperimentData load_experiment_data(const Config& cfg) {
    ExperimentData data;
    const bool use_benchmark = cfg.get_bool("benchmark", false);
    const bool synthetic = use_benchmark || cfg.get_bool("synthetic", !cfg.has("train_csv"));
    if (synthetic) {
        SyntheticSpec spec = use_benchmark ? benchmark_spec() : SyntheticSpec{};
        spec.classes = cfg.get_size("classes", spec.classes);
        spec.dims = cfg.get_size("dims", spec.dims);
        spec.clusters_per_class = cfg.get_size("clusters", spec.clusters_per_class);
        spec.separation = cfg.get_double("separation", spec.separation);
        spec.n_train = cfg.get_size("n_train", use_benchmark ? spec.n_train : 1000);
        spec.n_unlabeled = cfg.get_size("n_unlabeled", use_benchmark ? spec.n_unlabeled : 0);
        spec.n_dev = cfg.get_size("n_dev", use_benchmark ? spec.n_dev : 500);
        spec.n_test = cfg.get_size("n_test", use_benchmark ? spec.n_test : 500);
        const std::uint64_t seed =
            cfg.get_u64("data_seed", use_benchmark ? benchmark_data_seed() : 7);
        SyntheticData syn = make_synthetic(spec, seed);
        data.train = std::move(syn.train);
        data.dev = std::move(syn.dev);
        data.test = std::move(syn.test);
        data.unlabeled = std::move(syn.unlabeled);
    } else {
        const std::size_t classes = cfg.get_size("classes");
        const std::string label = cfg.get_string("label_column", "label");
        data.train = load_csv(cfg.get_string("train_csv"), label, classes);
        data.dev = load_csv(cfg.get_string("dev_csv"), label, classes);
        data.test = load_csv(cfg.get_string("test_csv"), label, classes);
        if (cfg.has("unlabeled_csv")) {
            data.unlabeled = load_matrix_csv(cfg.get_string("unlabeled_csv"));
        }
    }

    if (cfg.has("image_shape")) {
        std::stringstream ss(cfg.get_string("image_shape"));
        std::size_t c = 0, h = 0, w = 0;
        char x1 = 0, x2 = 0;
        ss >> c >> x1 >> h >> x2 >> w;
        if (ss.fail() || x1 != 'x' || x2 != 'x' || c == 0 || h == 0 || w == 0) {
            throw ConfigError("image_shape: want CxHxW, got '" + cfg.get_string("image_shape") +
                              "'");
        }
        const ImageShape shape{c, h, w};
        if (shape.flat() != data.train.dim()) {
            throw ConfigError("image_shape " + cfg.get_string("image_shape") + " does not match " +
                              std::to_string(data.train.dim()) + " feature columns");
        }
        data.train.input_shape = shape;
        data.dev.input_shape = shape;
        data.test.input_shape = shape;
    }

    if (cfg.get_bool("standardize", true)) {
        auto [train_std, stats] = standardize(data.train);
        data.train = std::move(train_std);
        data.dev = apply_stats(stats, data.dev);
        data.test = apply_stats(stats, data.test);
        if (data.unlabeled.rows() > 0) data.unlabeled = apply_stats(stats, data.unlabeled);
        data.stats = std::move(stats);
    }
    return data;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const fs::path& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) throw DataError("cannot write " + path.string());
    std::fprintf(f, "model_id,params,hidden_units,regime,dev_error,test_error,teacher_error\n");
    for (const auto& r : rows) {
        std::fprintf(f, "%s,%llu,%zu,%s,%.6f,%.6f,", r.model_id.c_str(),
                     static_cast<unsigned long long>(r.params), r.hidden_units,
                     r.regime.c_str(), r.dev_error, r.test_error);
        if (r.teacher_error) std::fprintf(f, "%.6f", *r.teacher_error);
        std::fprintf(f, "\n");
    }
    std::fclose(f);
}

TrainConfig train_config_from(const Config& cfg, std::uint64_t seed, LossKind default_loss) {
    TrainConfig tc;
    tc.learning_rate = cfg.get_double("learning_rate", 0.05);
    tc.momentum = cfg.get_double("momentum", 0.9);
    tc.batch_size = cfg.get_size("batch_size", 64);
    tc.max_epochs = cfg.get_size("max_epochs", 20);
    tc.lr_decay = cfg.get_double("lr_decay", 1.0);
    tc.shuffle = cfg.get_bool("shuffle", true);
    tc.seed = seed;
    tc.loss = cfg.has("loss") ? loss_kind_from_string(cfg.get_string("loss")) : default_loss;
    const std::string patience = cfg.get_string("patience", "none");
    if (patience != "none") {
        try {
            tc.early_stop_patience = std::stoull(patience);
        } catch (const std::exception&) {
            throw ConfigError("patience: '" + patience + "' is not a count or 'none'");
        }
    }
    tc.validate();
    return tc;
}

double ensemble_error(const EnsembleModel& ensemble, const Dataset& dataset) {
    if (dataset.size() == 0) throw ContractError("ensemble_error: empty dataset");
    if (!dataset.has_hard_labels()) throw ContractError("ensemble_error: no hard labels");
    const Matrix logits = ensemble_logits(ensemble, dataset.features);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j) {
            if (logits(i, j) > logits(i, best)) best = j;
        }
        if (best != dataset.hard_labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(dataset.size());
}

namespace {

// Shared by train-teacher (bootstrap option, teacher_arch) and
// train-baseline (student_arch, no bootstrap).
void save_stats_sidecar(const ExperimentData& data, const fs::path& dir) {
    if (data.stats) save_preprocess(*data.stats, dir / "preprocess.smst");
}

void train_direct_models(const Config& cfg, std::ostream& out, const std::string& arch_key,
                         const std::string& prefix, bool allow_bootstrap) {
    const ExperimentData data = load_experiment_data(cfg);
    const fs::path dir = out_dir(cfg);
    save_stats_sidecar(data, dir);
    const bool timings = cfg.get_bool("record_timings", false);
    const bool bootstrap = allow_bootstrap && cfg.get_bool("bootstrap", false);
    const NetworkSpec spec =
        parse_arch(cfg.get_string(arch_key), data.train.dim(), data.train.input_shape,
                   data.train.class_count);
    if (cfg.has("loss") && cfg.get_string("loss") != "xent") {
        throw ConfigError(prefix + " training uses hard labels; loss must be xent");
    }

    for (const std::uint64_t seed : seed_list(cfg)) {
        const Dataset train_split =
            bootstrap ? bootstrap_resample(data.train, RngStream(seed).child(kBootstrapStream))
                      : data.train;
        Model model = [&] {
            RngStream init_rng = RngStream(seed).child(kInitStream);
            return init_params(spec, init_rng);
        }();
        const TrainConfig tc = train_config_from(cfg, seed, LossKind::CrossEntropyHard);
        TrainResult res = train(model, train_split, data.dev, tc);

        const std::string stem = prefix + "_s" + std::to_string(seed);
        save_model(res.model, dir / (stem + ".smim"));
        write_metrics_csv(res.metrics, dir / ("metrics_" + stem + ".csv"), timings);
        out << stem << ": dev_error=" << format_error(evaluate(res.model, data.dev))
            << " test_error=" << format_error(evaluate(res.model, data.test)) << "\n";
    }
}

}  // namespace

void cmd_train_teacher(const Config& cfg, std::ostream& out) {
    train_direct_models(cfg, out, "teacher_arch", "teacher", /*allow_bootstrap=*/true);
}

void cmd_train_baseline(const Config& cfg, std::ostream& out) {
    train_direct_models(cfg, out, "student_arch", "baseline", /*allow_bootstrap=*/false);
}

void cmd_distill(const Config& cfg, std::ostream& out) {
    const ExperimentData data = load_experiment_data(cfg);
    const fs::path dir = out_dir(cfg);
    save_stats_sidecar(data, dir);
    const bool timings = cfg.get_bool("record_timings", false);
    const EnsembleModel teacher = load_teachers(cfg);
    check_teacher_matches(teacher, data);

    const LossKind loss = mimic_loss_from(cfg);
    const bool normalize = normalize_flag(cfg, loss);
    const NetworkSpec spec =
        parse_arch(cfg.get_string("student_arch"), data.train.dim(), data.train.input_shape,
                   data.train.class_count);

    const TransferSet transfer =
        build_transfer_set(data.train, data.unlabeled, teacher, normalize);
    if (cfg.has("transfer_out")) save_transfer_set(transfer, cfg.get_string("transfer_out"));
    const Dataset dev_soft = attach_soft_targets(data.dev, teacher, transfer);

    const double teacher_dev = ensemble_error(teacher, data.dev);
    const double teacher_test = ensemble_error(teacher, data.test);
    out << "teacher: dev_error=" << format_error(teacher_dev)
        << " test_error=" << format_error(teacher_test)
        << " transfer_rows=" << transfer.data.size() << "\n";

    std::vector<SweepRow> rows;
    for (const std::uint64_t seed : seed_list(cfg)) {
        TrainConfig tc = train_config_from(cfg, seed, loss);
        tc.loss = loss;
        MimicRun run = train_mimic_student(spec, transfer, dev_soft, tc);

        const std::string stem = "student_s" + std::to_string(seed);
        save_model(run.model, dir / (stem + ".smim"));
        write_metrics_csv(run.metrics, dir / ("metrics_" + stem + ".csv"), timings);

        SweepRow row;
        row.model_id = stem;
        row.params = run.model.param_count();
        row.hidden_units = nonlinear_hidden_units(spec);
        row.regime = "mimic";
        row.dev_error = evaluate(run.model, data.dev);
        row.test_error = evaluate(run.model, data.test);
        row.teacher_error = teacher_test;
        rows.push_back(row);
        out << stem << ": dev_error=" << format_error(row.dev_error)
            << " test_error=" << format_error(row.test_error) << "\n";
    }
    write_sweep_csv(rows, dir / "distill_results.csv");
}

void cmd_sweep_params(const Config& cfg, std::ostream& out) {
    const ExperimentData data = load_experiment_data(cfg);
    const fs::path dir = out_dir(cfg);
    save_stats_sidecar(data, dir);
    const EnsembleModel teacher = load_teachers(cfg);
    check_teacher_matches(teacher, data);

    const LossKind mimic_loss = mimic_loss_from(cfg);
    const bool normalize = normalize_flag(cfg, mimic_loss);
    const TransferSet transfer =
        build_transfer_set(data.train, data.unlabeled, teacher, normalize);
    const Dataset dev_soft = attach_soft_targets(data.dev, teacher, transfer);
    const double teacher_test = ensemble_error(teacher, data.test);

    const auto widths = cfg.get_size_list("student_widths");
    if (widths.empty()) throw ConfigError("student_widths: empty list");
    const auto seeds = seed_list(cfg);

    std::vector<SweepRow> rows;
    for (const std::size_t width : widths) {
        const NetworkSpec spec = parse_arch(std::to_string(width) + "r", data.train.dim(),
                                            data.train.input_shape, data.train.class_count);
        for (const char* regime : {"direct", "mimic"}) {
            for (const std::uint64_t seed : seeds) {
                const std::string stem = std::string(regime) + "_w" + std::to_string(width) +
                                         "_s" + std::to_string(seed);
                Model trained = [&] {
                    if (std::string(regime) == "direct") {
                        RngStream init_rng = RngStream(seed).child(kInitStream);
                        Model m = init_params(spec, init_rng);
                        TrainConfig tc =
                            train_config_from(cfg, seed, LossKind::CrossEntropyHard);
                        tc.loss = LossKind::CrossEntropyHard;
                        return train(m, data.train, data.dev, tc).model;
                    }
                    TrainConfig tc = train_config_from(cfg, seed, mimic_loss);
                    tc.loss = mimic_loss;
                    return train_mimic_student(spec, transfer, dev_soft, tc).model;
                }();
                save_model(trained, dir / (stem + ".smim"));

                SweepRow row;
                row.model_id = stem;
                row.params = trained.param_count();
                row.hidden_units = nonlinear_hidden_units(spec);
                row.regime = regime;
                row.dev_error = evaluate(trained, data.dev);
                row.test_error = evaluate(trained, data.test);
                if (std::string(regime) == "mimic") row.teacher_error = teacher_test;
                rows.push_back(row);
                out << stem << ": dev_error=" << format_error(row.dev_error)
                    << " test_error=" << format_error(row.test_error) << "\n";
            }
        }
    }
    write_sweep_csv(rows, dir / "sweep_params.csv");
}

void cmd_sweep_teacher(const Config& cfg, std::ostream& out) {
    const ExperimentData data = load_experiment_data(cfg);
    const fs::path dir = out_dir(cfg);
    save_stats_sidecar(data, dir);
    const NetworkSpec teacher_spec =
        parse_arch(cfg.get_string("teacher_arch"), data.train.dim(), data.train.input_shape,
                   data.train.class_count);
    const std::uint64_t teacher_seed = cfg.get_u64("teacher_seed", 101);
    const std::size_t full_epochs = cfg.get_size("teacher_epochs", cfg.get_size("max_epochs", 20));
    const std::size_t early_epochs =
        cfg.get_size("ladder_early_epochs", std::max<std::size_t>(1, full_epochs / 8));
    const bool bootstrap = cfg.get_bool("bootstrap", true);

    // Teacher-quality ladder: one member stopped early, then single / 3-wide
    // / 5-wide ensembles at full training.
    auto train_member = [&](std::size_t member, std::size_t epochs) {
        const std::uint64_t seed = teacher_seed + member;
        const Dataset split =
            bootstrap ? bootstrap_resample(data.train, RngStream(seed).child(kBootstrapStream))
                      : data.train;
        RngStream init_rng = RngStream(seed).child(kInitStream);
        Model m = init_params(teacher_spec, init_rng);
        TrainConfig tc = train_config_from(cfg, seed, LossKind::CrossEntropyHard);
        tc.loss = LossKind::CrossEntropyHard;
        tc.max_epochs = epochs;
        tc.learning_rate = cfg.get_double("teacher_learning_rate", tc.learning_rate);
        return train(m, split, data.dev, tc).model;
    };

    std::vector<Model> members;
    for (std::size_t i = 0; i < 5; ++i) members.push_back(train_member(i, full_epochs));
    const Model early = train_member(0, early_epochs);

    std::vector<EnsembleModel> rungs(4);
    rungs[0].members = {early};
    rungs[1].members = {members[0]};
    rungs[2].members = {members[0], members[1], members[2]};
    rungs[3].members = {members[0], members[1], members[2], members[3], members[4]};

    const LossKind mimic_loss = mimic_loss_from(cfg);
    const bool normalize = normalize_flag(cfg, mimic_loss);
    const std::size_t small_w = cfg.get_size("student_small", 32);
    const std::size_t large_w = cfg.get_size("student_large", 256);
    std::vector<std::size_t> widths = {small_w};
    if (large_w != small_w) widths.push_back(large_w);  // single-spec ladders stay 1 row/rung
    const auto seeds = seed_list(cfg);

    std::vector<SweepRow> rows;
    for (std::size_t r = 0; r < rungs.size(); ++r) {
        for (std::size_t m = 0; m < rungs[r].members.size(); ++m) {
            save_model(rungs[r].members[m],
                       dir / ("rung" + std::to_string(r) + "_m" + std::to_string(m) + ".smim"));
        }
        const TransferSet transfer =
            build_transfer_set(data.train, data.unlabeled, rungs[r], normalize);
        const Dataset dev_soft = attach_soft_targets(data.dev, rungs[r], transfer);
        const double teacher_test = ensemble_error(rungs[r], data.test);
        out << "rung" << r << ": teacher_test_error=" << format_error(teacher_test) << "\n";

        for (const std::size_t width : widths) {
            const NetworkSpec spec = parse_arch(std::to_string(width) + "r", data.train.dim(),
                                                data.train.input_shape, data.train.class_count);
            for (const std::uint64_t seed : seeds) {
                TrainConfig tc = train_config_from(cfg, seed, mimic_loss);
                tc.loss = mimic_loss;
                MimicRun run = train_mimic_student(spec, transfer, dev_soft, tc);
                const std::string stem = "rung" + std::to_string(r) + "_w" +
                                         std::to_string(width) + "_s" + std::to_string(seed);
                save_model(run.model, dir / (stem + ".smim"));

                SweepRow row;
                row.model_id = stem;
                row.params = run.model.param_count();
                row.hidden_units = nonlinear_hidden_units(spec);
                row.regime = "mimic";
                row.dev_error = evaluate(run.model, data.dev);
                row.test_error = evaluate(run.model, data.test);
                row.teacher_error = teacher_test;
                rows.push_back(row);
                out << stem << ": dev_error=" << format_error(row.dev_error)
                    << " test_error=" << format_error(row.test_error) << "\n";
            }
        }
    }
    write_sweep_csv(rows, dir / "sweep_teacher.csv");
}

void cmd_eval(const Config& cfg, std::ostream& out) {
    const Model model = load_model(cfg.get_string("model"));
    Dataset ds;
    if (cfg.has("dataset")) {
        ds = load_csv(cfg.get_string("dataset"), cfg.get_string("label_column", "label"),
                      cfg.get_size("classes"));
    } else {
        const ExperimentData data = load_experiment_data(cfg);
        const std::string which = cfg.get_string("eval_split", "test");
        if (which == "train") {
            ds = data.train;
        } else if (which == "dev") {
            ds = data.dev;
        } else if (which == "test") {
            ds = data.test;
        } else {
            throw ConfigError("eval_split must be train, dev or test");
        }
    }
    if (ds.dim() != model.spec.input_dim) {
        throw ConfigError("model expects input width " + std::to_string(model.spec.input_dim) +
                          " but dataset has " + std::to_string(ds.dim()));
    }

    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", evaluate(model, ds));
    out << "error_rate," << buf << "\n";

    if (cfg.has("confusion")) {
        const std::size_t classes = ds.class_count;
        std::vector<std::size_t> counts(classes * classes, 0);
        constexpr std::size_t kBatch = 512;
        for (std::size_t begin = 0; begin < ds.size(); begin += kBatch) {
            const std::size_t end = std::min(begin + kBatch, ds.size());
            std::vector<std::size_t> idx(end - begin);
            for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
            const Matrix logits = forward_eval(model, ds.subset(idx).features);
            for (std::size_t i = 0; i < logits.rows(); ++i) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < logits.cols(); ++j) {
                    if (logits(i, j) > logits(i, best)) best = j;
                }
                counts[ds.hard_labels[begin + i] * classes + best]++;
            }
        }
        std::FILE* f = std::fopen(cfg.get_string("confusion").c_str(), "wb");
        if (f == nullptr) throw DataError("cannot write " + cfg.get_string("confusion"));
        std::fprintf(f, "true_class");
        for (std::size_t j = 0; j < classes; ++j) std::fprintf(f, ",pred_%zu", j);
        std::fprintf(f, "\n");
        for (std::size_t i = 0; i < classes; ++i) {
            std::fprintf(f, "%zu", i);
            for (std::size_t j = 0; j < classes; ++j) {
                std::fprintf(f, ",%zu", counts[i * classes + j]);
            }
            std::fprintf(f, "\n");
        }
        std::fclose(f);
    }
}

void cmd_absorb(const Config& cfg, std::ostream& out) {
    const Model model = load_model(cfg.get_string("model"));
    const Model merged = absorb_bottleneck(model);
    fs::path target;
    if (cfg.has("out_model")) {
        target = cfg.get_string("out_model");
    } else {
        target = out_dir(cfg) / "absorbed.smim";
    }
    save_model(merged, target);
    out << "param_count " << model.param_count() << " -> " << merged.param_count() << "\n";
    out << "wrote " << target.string() << "\n";
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    const std::string usage =
        "usage: smim <command> [--config file] [--key value ...]\n"
        "commands: train-teacher train-baseline distill eval sweep-params sweep-teacher absorb\n"
        "Every config-file key can be overridden with a --key value flag.\n";
    try {
        if (argc < 2) {
            err << usage;
            return 2;
        }
        const std::string command = argv[1];
        if (command == "--help" || command == "-h" || command == "help") {
            out << usage;
            return 0;
        }

        Config cfg;
        std::vector<std::pair<std::string, std::string>> overrides;
        for (int i = 2; i < argc; ++i) {
            std::string flag = argv[i];
            if (flag.rfind("--", 0) != 0) {
                throw ConfigError("expected --key value, got '" + flag + "'");
            }
            flag = flag.substr(2);
            if (i + 1 >= argc) throw ConfigError("flag --" + flag + " is missing its value");
            const std::string value = argv[++i];
            if (flag == "config") {
                cfg = Config::from_file(value);
            } else {
                overrides.emplace_back(flag, value);
            }
        }
        for (const auto& [key, value] : overrides) {
            if (known_keys().count(key) == 0) throw ConfigError("unknown flag --" + key);
            cfg.set(key, value);
        }
        cfg.require_known(known_keys());

        static const std::map<std::string, std::string> kind_names = {
            {"train-teacher", "train_teacher"}, {"train-baseline", "train_baseline"},
            {"distill", "distill"},             {"eval", "eval"},
            {"sweep-params", "sweep_params"},   {"sweep-teacher", "sweep_teacher"},
            {"absorb", "absorb"}};
        const auto kind_it = kind_names.find(command);
        if (kind_it == kind_names.end()) {
            throw ConfigError("unknown command '" + command + "'");
        }
        if (cfg.has("kind") && cfg.get_string("kind") != kind_it->second) {
            throw ConfigError("config kind '" + cfg.get_string("kind") +
                              "' does not match command '" + command + "'");
        }

        if (command == "train-teacher") {
            cmd_train_teacher(cfg, out);
        } else if (command == "train-baseline") {
            cmd_train_baseline(cfg, out);
        } else if (command == "distill") {
            cmd_distill(cfg, out);
        } else if (command == "eval") {
            cmd_eval(cfg, out);
        } else if (command == "sweep-params") {
            cmd_sweep_params(cfg, out);
        } else if (command == "sweep-teacher") {
            cmd_sweep_teacher(cfg, out);
        } else {
            cmd_absorb(cfg, out);
        }
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace smim
