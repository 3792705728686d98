#include <cmath>

#include "doctest.h"
#include "smim/loss.hpp"
#include "smim/nn.hpp"
#include "support/oracles.hpp"

using namespace smim;

namespace {

Model dense_model(std::vector<LayerSpec> layers, std::size_t in, std::size_t out) {
    NetworkSpec spec = NetworkSpec::flat_input(in, std::move(layers), out);
    RngStream rng(1);
    return init_params(spec, rng);
}

}  // namespace

TEST_CASE("init_params shapes, zero biases, determinism") {
    NetworkSpec spec = NetworkSpec::flat_input(2, {DenseSpec{2, 3, Activation::Relu}}, 3);
    RngStream a(4), b(4);
    const Model ma = init_params(spec, a);
    const Model mb = init_params(spec, b);
    CHECK(ma.params[0].weight.rows() == 3);
    CHECK(ma.params[0].weight.cols() == 2);
    CHECK(ma.params[0].bias.size() == 3);
    for (double v : ma.params[0].bias) CHECK(v == 0.0);
    CHECK(ma.params[0].weight.flat() == mb.params[0].weight.flat());
}

TEST_CASE("init_params empirical std matches the uniform-variance oracle") {
    NetworkSpec spec = NetworkSpec::flat_input(1000, {DenseSpec{1000, 1000, Activation::Relu}}, 1000);
    RngStream rng(7);
    const Model m = init_params(spec, rng);
    double mean = 0.0, var = 0.0;
    for (double v : m.params[0].weight.flat()) mean += v;
    mean /= static_cast<double>(m.params[0].weight.size());
    for (double v : m.params[0].weight.flat()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(m.params[0].weight.size());
    const double expected = std::sqrt(6.0 / 2000.0) / std::sqrt(3.0);
    CHECK(std::sqrt(var) == doctest::Approx(expected).epsilon(0.10));
}

TEST_CASE("param_count equals the model's tensor sizes") {
    NetworkSpec spec = NetworkSpec::flat_input(
        2, {DenseSpec{2, 3, Activation::Relu}, DenseSpec{3, 2, Activation::Identity}}, 2);
    CHECK(param_count(spec) == 9 + 8);
    RngStream rng(1);
    CHECK(init_params(spec, rng).param_count() == param_count(spec));
}

TEST_CASE("param_count matches full-scale layer arithmetic") {
    const NetworkSpec dnn = NetworkSpec::flat_input(1845,
                                                    {DenseSpec{1845, 2000, Activation::Relu},
                                                     DenseSpec{2000, 2000, Activation::Relu},
                                                     DenseSpec{2000, 2000, Activation::Relu},
                                                     DenseSpec{2000, 183, Activation::Identity}},
                                                    183);
    CHECK(param_count(dnn) == 12062183ULL);

    const NetworkSpec bottleneck = NetworkSpec::flat_input(
        1845,
        {DenseSpec{1845, 250, Activation::Identity}, DenseSpec{250, 400000, Activation::Relu},
         DenseSpec{400000, 183, Activation::Identity}},
        183);
    CHECK(param_count(bottleneck) == 174061683ULL);
}

TEST_CASE("forward identity network") {
    Model m = dense_model({DenseSpec{2, 2, Activation::Identity}}, 2, 2);
    m.params[0].weight = Matrix::from_rows({{1, 0}, {0, 1}});
    m.params[0].bias = {0.0, 0.0};
    const Matrix out = forward_eval(m, Matrix::from_rows({{3, 4}}));
    CHECK(out(0, 0) == 3.0);
    CHECK(out(0, 1) == 4.0);
}

TEST_CASE("forward relu clamps negatives") {
    Model m = dense_model({DenseSpec{2, 2, Activation::Relu}, DenseSpec{2, 2, Activation::Identity}},
                          2, 2);
    m.params[0].weight = Matrix::from_rows({{1, 0}, {0, 1}});
    m.params[0].bias = {0.0, 0.0};
    m.params[1].weight = Matrix::from_rows({{1, 0}, {0, 1}});
    m.params[1].bias = {0.0, 0.0};
    const Matrix out = forward_eval(m, Matrix::from_rows({{-1, 5}}));
    CHECK(out(0, 0) == 0.0);
    CHECK(out(0, 1) == 5.0);
}

TEST_CASE("forward through a hand-built bottleneck") {
    Model m = dense_model(
        {DenseSpec{2, 1, Activation::Identity}, DenseSpec{1, 2, Activation::Relu}}, 2, 2);
    m.params[0].weight = Matrix::from_rows({{1, 1}});  // V
    m.params[0].bias = {0.0};
    m.params[1].weight = Matrix::from_rows({{1}, {2}});  // U
    m.params[1].bias = {0.0, 0.0};
    const Matrix out = forward_eval(m, Matrix::from_rows({{1, 2}}));
    CHECK(out(0, 0) == 3.0);
    CHECK(out(0, 1) == 6.0);
}

TEST_CASE("forward rejects wrong batch width") {
    Model m = dense_model({DenseSpec{2, 2, Activation::Relu}}, 2, 2);
    CHECK_THROWS_AS(forward_eval(m, Matrix(1, 3)), ShapeError);
}

TEST_CASE("eval-mode forward is pure") {
    Model m = dense_model({DropoutSpec{0.5}, DenseSpec{3, 2, Activation::Relu}}, 3, 2);
    RngStream r1(1), r2(999);
    const Matrix batch = Matrix::from_rows({{1, 2, 3}});
    const Matrix a = forward(m, batch, Mode::Eval, r1).logits;
    const Matrix b = forward(m, batch, Mode::Eval, r2).logits;
    CHECK(a.flat() == b.flat());
    // No randomness consumed: the stream continues from its seed.
    CHECK(r1.next_u64() == RngStream(1).next_u64());
}

TEST_CASE("backward with zero upstream gradient") {
    Model m = dense_model({DenseSpec{2, 3, Activation::Relu}, DenseSpec{3, 2, Activation::Identity}},
                          2, 2);
    RngStream rng(3);
    const Matrix batch = sample_gaussian(rng, 4, 2, 0.0, 1.0);
    auto fwd = forward(m, batch, Mode::Train, rng);
    const Gradients g = backward(m, fwd.cache, Matrix(4, 2));
    for (const auto& layer : g.layers) {
        for (double v : layer.weight.flat()) CHECK(v == 0.0);
        for (double v : layer.bias) CHECK(v == 0.0);
    }
}

TEST_CASE("backward scalar chain rule") {
    Model m = dense_model({DenseSpec{1, 1, Activation::Identity}}, 1, 1);
    m.params[0].weight = Matrix::from_rows({{0.7}});
    m.params[0].bias = {0.1};
    const double x = 1.9, g = -2.3;
    RngStream rng(1);
    auto fwd = forward(m, Matrix::from_rows({{x}}), Mode::Train, rng);
    const Gradients grads = backward(m, fwd.cache, Matrix::from_rows({{g}}));
    CHECK(grads.layers[0].weight(0, 0) == doctest::Approx(g * x));
    CHECK(grads.layers[0].bias[0] == doctest::Approx(g));
}

TEST_CASE("backward rejects a stale cache") {
    Model m = dense_model({DenseSpec{2, 2, Activation::Relu}, DenseSpec{2, 2, Activation::Identity}},
                          2, 2);
    RngStream rng(3);
    auto fwd = forward(m, Matrix::from_rows({{1, 2}}), Mode::Train, rng);
    CHECK_THROWS_AS(backward(m, fwd.cache, Matrix(2, 2)), ContractError);  // wrong batch
    ForwardCache broken = fwd.cache;
    broken.post.pop_back();
    CHECK_THROWS_AS(backward(m, broken, Matrix(1, 2)), ContractError);
}

TEST_CASE("analytic gradients match finite differences on a 3-layer net") {
    RngStream rng(17);
    NetworkSpec spec = NetworkSpec::flat_input(3,
                                               {DenseSpec{3, 4, Activation::Relu},
                                                DenseSpec{4, 3, Activation::Relu},
                                                DenseSpec{3, 2, Activation::Identity}},
                                               2);
    for (int trial = 0; trial < 5; ++trial) {
        RngStream init = rng.child(trial);
        Model m = init_params(spec, init);
        const Matrix batch = sample_gaussian(rng, 3, 3, 0.0, 1.0);
        const Matrix target = sample_gaussian(rng, 3, 2, 0.0, 1.0);
        RngStream fwd_rng(0);
        auto fwd = forward(m, batch, Mode::Eval, fwd_rng);
        const auto res = l2_logit(fwd.logits, target);
        const Gradients analytic = backward(m, fwd.cache, res.dlogits);
        const Gradients numeric = testing::finite_diff_gradients(
            m, batch, Mode::Eval, 0,
            [&target](const Matrix& logits) { return l2_logit(logits, target).loss; });
        CHECK(testing::max_rel_error(analytic, numeric) < 1e-5);
    }
}

TEST_CASE("gradients flow through live dropout masks") {
    NetworkSpec spec = NetworkSpec::flat_input(3,
                                               {DenseSpec{3, 4, Activation::Relu},
                                                DropoutSpec{0.5},
                                                DenseSpec{4, 2, Activation::Identity}},
                                               2);
    RngStream init(9);
    Model m = init_params(spec, init);
    RngStream data_rng(10);
    const Matrix batch = sample_gaussian(data_rng, 3, 3, 0.0, 1.0);
    const Matrix target = sample_gaussian(data_rng, 3, 2, 0.0, 1.0);

    // A fresh stream of the same seed reproduces the masks, so analytic and
    // finite-difference gradients see the same dropped units.
    const std::uint64_t mask_seed = 777;
    RngStream fwd_rng(mask_seed);
    auto fwd = forward(m, batch, Mode::Train, fwd_rng);
    const auto res = l2_logit(fwd.logits, target);
    const Gradients analytic = backward(m, fwd.cache, res.dlogits);
    const Gradients numeric = testing::finite_diff_gradients(
        m, batch, Mode::Train, mask_seed,
        [&target](const Matrix& logits) { return l2_logit(logits, target).loss; });
    CHECK(testing::max_rel_error(analytic, numeric) < 1e-5);
}

TEST_CASE("softmax matches the worked probabilities") {
    const auto p = softmax({10.0, 20.0, 30.0});
    CHECK(p[0] == doctest::Approx(2.061060046209062e-09));
    CHECK(p[1] == doctest::Approx(4.539786860886666e-05));
    CHECK(p[2] == doctest::Approx(0.999954600070331));
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
}

TEST_CASE("softmax shift invariance") {
    const auto a = softmax({10.0, 20.0, 30.0});
    const auto b = softmax({-10.0, 0.0, 10.0});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);

    RngStream rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z(5), shifted(5);
        const double c = rng.uniform(-50.0, 50.0);
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = rng.uniform(-5.0, 5.0);
            shifted[i] = z[i] + c;
        }
        const auto pa = softmax(z);
        const auto pb = softmax(shifted);
        for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(pa[i] - pb[i]) < 1e-12);
    }
}

TEST_CASE("softmax of equal logits is uniform") {
    const auto p = softmax({3.7, 3.7});
    CHECK(p[0] == 0.5);
    CHECK(p[1] == 0.5);
}

TEST_CASE("softmax rejects non-finite input") {
    CHECK_THROWS_AS(softmax({1.0, std::nan("")}), DomainError);
}

TEST_CASE("conv with 1x1 unit kernel is the identity") {
    NetworkSpec spec = NetworkSpec::image_input(
        ImageShape{1, 3, 3}, {Conv2DSpec{1, 1, 1, 1}, FlattenSpec{},
                              DenseSpec{9, 9, Activation::Identity}},
        9);
    RngStream rng(1);
    Model m = init_params(spec, rng);
    m.params[0].weight = Matrix::from_rows({{1.0}});
    m.params[0].bias = {0.0};
    // Identity output layer to observe the conv result directly.
    m.params[2].weight = Matrix(9, 9);
    for (std::size_t i = 0; i < 9; ++i) m.params[2].weight(i, i) = 1.0;
    m.params[2].bias.assign(9, 0.0);
    RngStream fwd_rng(0);
    Matrix batch(1, 9);
    for (std::size_t i = 0; i < 9; ++i) batch(0, i) = static_cast<double>(i) - 4.0;
    const Matrix out = forward(m, batch, Mode::Eval, fwd_rng).logits;
    CHECK(out.flat() == batch.flat());
}

TEST_CASE("conv hand example") {
    // input [[1,2],[3,4]] * kernel [[1,0],[0,1]] -> [[5]]
    NetworkSpec spec = NetworkSpec::image_input(
        ImageShape{1, 2, 2},
        {Conv2DSpec{1, 1, 2, 2}, FlattenSpec{}, DenseSpec{1, 1, Activation::Identity}}, 1);
    RngStream rng(1);
    Model m = init_params(spec, rng);
    m.params[0].weight = Matrix::from_rows({{1, 0, 0, 1}});
    m.params[0].bias = {0.0};
    m.params[2].weight = Matrix::from_rows({{1}});
    m.params[2].bias = {0.0};
    const Matrix out = forward_eval(m, Matrix::from_rows({{1, 2, 3, 4}}));
    CHECK(out(0, 0) == 5.0);
}

TEST_CASE("maxpool over a constant image") {
    NetworkSpec spec = NetworkSpec::image_input(
        ImageShape{1, 4, 4},
        {MaxPool2DSpec{2, 2}, FlattenSpec{}, DenseSpec{4, 4, Activation::Identity}}, 4);
    RngStream rng(1);
    Model m = init_params(spec, rng);
    m.params[2].weight = Matrix(4, 4);
    for (std::size_t i = 0; i < 4; ++i) m.params[2].weight(i, i) = 1.0;
    m.params[2].bias.assign(4, 0.0);
    Matrix batch(1, 16);
    for (double& v : batch.flat()) v = 7.0;
    const Matrix out = forward_eval(m, batch);
    for (double v : out.flat()) CHECK(v == 7.0);
}

TEST_CASE("maxpool truncates ragged edges") {
    // 5x5 image, 2x2 pools -> 2x2 output; the 5th row/col is dropped.
    NetworkSpec spec = NetworkSpec::image_input(
        ImageShape{1, 5, 5},
        {MaxPool2DSpec{2, 2}, FlattenSpec{}, DenseSpec{4, 4, Activation::Identity}}, 4);
    spec.validate();
    RngStream rng(1);
    CHECK(init_params(spec, rng).spec.output_dim == 4);
}

TEST_CASE("kernel larger than input is a shape error") {
    NetworkSpec spec = NetworkSpec::image_input(
        ImageShape{1, 2, 2},
        {Conv2DSpec{1, 1, 3, 3}, FlattenSpec{}, DenseSpec{1, 1, Activation::Identity}}, 1);
    CHECK_THROWS_AS(spec.validate(), ShapeError);
}

TEST_CASE("dropout expectation matches eval output on a linear net") {
    const double rate = 0.3;
    Model m = dense_model({DropoutSpec{rate}, DenseSpec{4, 2, Activation::Identity}}, 4, 2);
    const Matrix batch = Matrix::from_rows({{1.0, -2.0, 3.0, 0.5}});
    const Matrix eval_out = forward_eval(m, batch);

    RngStream rng(2024);
    Matrix mean(1, 2);
    const int draws = 20000;
    for (int i = 0; i < draws; ++i) {
        const Matrix out = forward(m, batch, Mode::Train, rng).logits;
        for (std::size_t j = 0; j < 2; ++j) mean(0, j) += out(0, j);
    }
    for (std::size_t j = 0; j < 2; ++j) {
        mean(0, j) /= draws;
        CHECK(mean(0, j) == doctest::Approx(eval_out(0, j)).epsilon(0.02));
    }
}

TEST_CASE("absorb_bottleneck outer-product example") {
    Model m = dense_model(
        {DenseSpec{2, 1, Activation::Identity}, DenseSpec{1, 2, Activation::Relu}}, 2, 2);
    m.params[0].weight = Matrix::from_rows({{2, 3}});       // V
    m.params[0].bias = {0.0};
    m.params[1].weight = Matrix::from_rows({{1}, {1}});     // U
    m.params[1].bias = {0.0, 0.0};
    const Model merged = absorb_bottleneck(m);
    CHECK(merged.spec.layers.size() == 1);
    CHECK(merged.params[0].weight(0, 0) == 2.0);
    CHECK(merged.params[0].weight(0, 1) == 3.0);
    CHECK(merged.params[0].weight(1, 0) == 2.0);
    CHECK(merged.params[0].weight(1, 1) == 3.0);
}

TEST_CASE("absorb with identity factor recovers U") {
    Model m = dense_model(
        {DenseSpec{2, 2, Activation::Identity}, DenseSpec{2, 3, Activation::Relu}}, 2, 3);
    m.params[0].weight = Matrix::from_rows({{1, 0}, {0, 1}});
    m.params[0].bias = {0.0, 0.0};
    const Model merged = absorb_bottleneck(m);
    CHECK(max_abs_diff(merged.params[0].weight, m.params[1].weight) == 0.0);
}

TEST_CASE("absorb preserves forward outputs and shrinks param_count") {
    NetworkSpec spec = NetworkSpec::flat_input(6,
                                               {DenseSpec{6, 3, Activation::Identity},
                                                DenseSpec{3, 10, Activation::Relu},
                                                DenseSpec{10, 4, Activation::Identity}},
                                               4);
    RngStream rng(11);
    Model m = init_params(spec, rng);
    // Non-zero bottleneck bias so the U*c + b path is exercised.
    for (double& v : m.params[0].bias) v = rng.uniform(-1.0, 1.0);
    const Model merged = absorb_bottleneck(m);

    const Matrix probe = sample_gaussian(rng, 100, 6, 0.0, 2.0);
    CHECK(max_abs_diff(forward_eval(m, probe), forward_eval(merged, probe)) < 1e-10);

    // Delta: D*H + (unchanged H bias) replaces D*k + k + k*H.
    const std::uint64_t before = m.param_count();
    const std::uint64_t after = merged.param_count();
    CHECK(before - after == (6 * 3 + 3 + 3 * 10) - 6 * 10);
    CHECK(after == param_count(merged.spec));
}

TEST_CASE("absorbing the 250-unit bottleneck of a full-size student") {
    NetworkSpec spec = NetworkSpec::flat_input(1845,
                                               {DenseSpec{1845, 250, Activation::Identity},
                                                DenseSpec{250, 8000, Activation::Relu},
                                                DenseSpec{8000, 183, Activation::Identity}},
                                               183);
    CHECK(param_count(spec) == 3933683ULL);
    RngStream rng(3);
    const Model model = init_params(spec, rng);
    const Model merged = absorb_bottleneck(model);
    CHECK(merged.param_count() == 16232183ULL);
    const Matrix probe = sample_gaussian(rng, 4, 1845, 0.0, 1.0);
    CHECK(max_abs_diff(forward_eval(model, probe), forward_eval(merged, probe)) < 1e-10);
}

TEST_CASE("absorb requires an absorbable pair") {
    Model plain = dense_model({DenseSpec{2, 3, Activation::Relu}}, 2, 3);
    CHECK_THROWS_AS(absorb_bottleneck(plain), ContractError);

    Model once = dense_model(
        {DenseSpec{2, 2, Activation::Identity}, DenseSpec{2, 3, Activation::Relu}}, 2, 3);
    const Model merged = absorb_bottleneck(once);
    CHECK_THROWS_AS(absorb_bottleneck(merged), ContractError);
}

TEST_CASE("spec validation names the offending layer") {
    NetworkSpec bad = NetworkSpec::flat_input(
        2, {DenseSpec{3, 2, Activation::Relu}, DenseSpec{2, 2, Activation::Identity}}, 2);
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("layer 0"), ConfigError);

    NetworkSpec two_bottlenecks = NetworkSpec::flat_input(2,
                                                          {DenseSpec{2, 2, Activation::Identity},
                                                           DenseSpec{2, 2, Activation::Identity},
                                                           DenseSpec{2, 2, Activation::Relu}},
                                                          2);
    CHECK_THROWS_AS(two_bottlenecks.validate(), ConfigError);
}
