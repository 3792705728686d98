// Training-run oracles for the distillation pipeline, at reduced scale so
// the whole suite stays in CI territory. The full-benchmark claims live in
// the acceptance suite.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "smim/harness.hpp"
#include "smim/serialize.hpp"

using namespace smim;
namespace fs = std::filesystem;

namespace {

// Small but non-trivial mixture task: 4 classes, 2 clusters each.
SyntheticSpec mini_spec() {
    SyntheticSpec spec;
    spec.classes = 4;
    spec.dims = 16;
    spec.clusters_per_class = 2;
    spec.separation = 1.2;
    spec.n_train = 1200;
    spec.n_unlabeled = 3000;
    spec.n_dev = 800;
    spec.n_test = 800;
    return spec;
}

struct MiniData {
    Dataset train, dev, test;
    Matrix unlabeled;
};

MiniData mini_data(std::uint64_t seed) {
    SyntheticData syn = make_synthetic(mini_spec(), seed);
    auto [train_std, stats] = standardize(syn.train);
    MiniData d;
    d.train = std::move(train_std);
    d.dev = apply_stats(stats, syn.dev);
    d.test = apply_stats(stats, syn.test);
    d.unlabeled = apply_stats(stats, syn.unlabeled);
    return d;
}

TrainConfig quick_config(std::uint64_t seed, LossKind loss, std::size_t epochs) {
    TrainConfig tc;
    tc.learning_rate = 0.05;
    tc.momentum = 0.9;
    tc.batch_size = 64;
    tc.max_epochs = epochs;
    tc.seed = seed;
    tc.loss = loss;
    return tc;
}

Model train_teacher_member(const MiniData& d, const NetworkSpec& spec, std::uint64_t seed,
                           bool bootstrap, std::size_t epochs) {
    Dataset split = d.train;
    if (bootstrap) {
        RngStream rng = RngStream(seed).child(0x20);
        std::vector<std::size_t> idx(d.train.size());
        for (auto& v : idx) v = rng.below(d.train.size());
        split = d.train.subset(idx);
    }
    RngStream init = RngStream(seed).child(0x10);
    Model m = init_params(spec, init);
    return train(m, split, d.dev, quick_config(seed, LossKind::CrossEntropyHard, epochs)).model;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

}  // namespace

TEST_CASE("self-distillation lands within two points of its teacher") {
    const MiniData d = mini_data(404);
    const NetworkSpec arch = parse_arch("48r-48r", 16, std::nullopt, 4);
    const Model teacher = train_teacher_member(d, arch, 11, false, 25);
    const double teacher_test = evaluate(teacher, d.test);

    EnsembleModel ens;
    ens.members = {teacher};
    const TransferSet transfer = build_transfer_set(d.train, d.unlabeled, ens, true);
    Dataset dev_soft = d.dev;
    dev_soft.soft_targets = normalize_with(transfer.mu, transfer.sigma,
                                           ensemble_logits(ens, d.dev.features));

    RngStream init = RngStream(21).child(0x10);
    Model student = init_params(arch, init);
    const LogitDenorm denorm = transfer.denorm();
    TrainResult res = train(student, transfer.data, dev_soft,
                            quick_config(21, LossKind::L2Logit, 25), &denorm);
    const Model baked = bake_output_denorm(res.model, transfer.mu, transfer.sigma);
    const double student_test = evaluate(baked, d.test);

    CHECK(student_test <= teacher_test + 0.02);
}

TEST_CASE("an ensemble is at least as good as its median member") {
    const NetworkSpec arch = parse_arch("32r-32r", 16, std::nullopt, 4);
    std::size_t wins = 0;
    const std::size_t meta_seeds = 5;
    for (std::uint64_t meta = 1; meta <= meta_seeds; ++meta) {
        const MiniData d = mini_data(500 + meta);
        EnsembleModel ens;
        std::vector<double> member_errors;
        for (std::uint64_t s = 0; s < 5; ++s) {
            ens.members.push_back(train_teacher_member(d, arch, meta * 100 + s, true, 12));
            member_errors.push_back(evaluate(ens.members.back(), d.dev));
        }
        if (ensemble_error(ens, d.dev) <= median(member_errors)) ++wins;
    }
    // Median claim over meta-seeds: the ensemble wins in the majority.
    CHECK(wins >= 3);
}

TEST_CASE("normalized and raw logit targets train equally good students") {
    const MiniData d = mini_data(606);
    const NetworkSpec teacher_arch = parse_arch("48r-48r", 16, std::nullopt, 4);
    const Model teacher = train_teacher_member(d, teacher_arch, 31, false, 20);
    EnsembleModel ens;
    ens.members = {teacher};

    const NetworkSpec student_arch = parse_arch("32r", 16, std::nullopt, 4);
    std::vector<double> err_norm, err_raw;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (const bool normalize : {true, false}) {
            const TransferSet transfer = build_transfer_set(d.train, d.unlabeled, ens, normalize);
            Dataset dev_soft = d.dev;
            Matrix dev_logits = ensemble_logits(ens, d.dev.features);
            if (normalize) dev_logits = normalize_with(transfer.mu, transfer.sigma, dev_logits);
            dev_soft.soft_targets = std::move(dev_logits);

            RngStream init = RngStream(seed).child(0x10);
            Model student = init_params(student_arch, init);
            const LogitDenorm denorm = transfer.denorm();
            TrainResult res = train(student, transfer.data, dev_soft,
                                    quick_config(seed, LossKind::L2Logit, 15),
                                    normalize ? &denorm : nullptr);
            Model final_model = normalize
                                    ? bake_output_denorm(res.model, transfer.mu, transfer.sigma)
                                    : res.model;
            (normalize ? err_norm : err_raw).push_back(evaluate(final_model, d.test));
        }
    }
    CHECK(std::abs(median(err_norm) - median(err_raw)) <= 0.03);
}

TEST_CASE("sweep-teacher ladder produces a coherent CSV at mini scale") {
    const fs::path dir = fs::temp_directory_path() / "smim_ladder_mini";
    fs::remove_all(dir);
    Config cfg;
    cfg.set("out", dir.string());
    cfg.set("synthetic", "true");
    cfg.set("classes", "4");
    cfg.set("dims", "16");
    cfg.set("clusters", "2");
    cfg.set("separation", "1.2");
    cfg.set("n_train", "600");
    cfg.set("n_unlabeled", "1200");
    cfg.set("n_dev", "400");
    cfg.set("n_test", "400");
    cfg.set("data_seed", "9");
    cfg.set("teacher_arch", "24r-24r");
    cfg.set("teacher_epochs", "10");
    cfg.set("ladder_early_epochs", "1");
    cfg.set("max_epochs", "8");
    cfg.set("student_small", "8");
    cfg.set("student_large", "32");
    cfg.set("seeds", "1");
    std::ostringstream out;
    cmd_sweep_teacher(cfg, out);

    std::ifstream csv(dir / "sweep_teacher.csv");
    REQUIRE(csv.good());
    std::string line;
    std::getline(csv, line);
    CHECK(line == "model_id,params,hidden_units,regime,dev_error,test_error,teacher_error");
    std::size_t rows = 0;
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 4 * 2);  // 4 rungs x {small, large} x 1 seed
    fs::remove_all(dir);
}
