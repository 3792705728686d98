#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "smim/matrix.hpp"
#include "smim/rng.hpp"

namespace smim {

enum class Activation : std::uint8_t { Identity = 0, Relu = 1 };

struct DenseSpec {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::Relu;
};

struct DropoutSpec {
    double rate = 0.0;  // drop probability, in [0, 1)
};

struct Conv2DSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
};

struct MaxPool2DSpec {
    std::size_t pool_h = 0;
    std::size_t pool_w = 0;
};

struct FlattenSpec {};

using LayerSpec = std::variant<DenseSpec, DropoutSpec, Conv2DSpec, MaxPool2DSpec, FlattenSpec>;

struct ImageShape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t flat() const { return channels * height * width; }
};

/// Declarative layer stack. Input is either a flat feature dimension or an
/// image shape (rows of a Matrix carry channel-major c*h*w blocks).
/// Conv2D/MaxPool2D may appear only before Flatten; the last parameterized
/// layer must emit output_dim values.
struct NetworkSpec {
    std::optional<ImageShape> input_image;
    std::size_t input_dim = 0;  // flat input width (== input_image->flat() when image)
    std::vector<LayerSpec> layers;
    std::size_t output_dim = 0;

    static NetworkSpec flat_input(std::size_t dim, std::vector<LayerSpec> layers,
                                  std::size_t output_dim);
    static NetworkSpec image_input(ImageShape shape, std::vector<LayerSpec> layers,
                                   std::size_t output_dim);

    /// Checks dimensional chaining and structural invariants; ConfigError
    /// messages name the offending layer index.
    void validate() const;

    std::string describe() const;
};

/// Total trainable scalars: weight elements plus bias elements of every
/// parameterized layer. Pure arithmetic on the spec; nothing is allocated,
/// so million-unit layer stacks can be costed before building them.
std::uint64_t param_count(const NetworkSpec& spec);

/// Bound parameters of one layer. Dense: weight [out x in] + bias [out].
/// Conv2D: weight [out_ch x (in_ch*kh*kw)] + bias [out_ch]. Other layers
/// have empty tensors.
struct LayerParams {
    Matrix weight;
    std::vector<double> bias;
};

struct Model {
    NetworkSpec spec;
    std::vector<LayerParams> params;  // one entry per spec layer

    std::uint64_t param_count() const;
};

/// Glorot-style uniform initialization: weights ~ U(-a, a) with
/// a = sqrt(6 / (fan_in + fan_out)); biases zero. Deterministic per stream.
Model init_params(const NetworkSpec& spec, RngStream& rng);

enum class Mode { Train, Eval };

/// Per-layer bookkeeping from one forward pass, consumed by backward().
struct ForwardCache {
    Mode mode = Mode::Eval;
    std::size_t batch = 0;
    Matrix input;
    std::vector<Matrix> pre;            // post-linear / post-conv, before activation
    std::vector<Matrix> post;           // layer outputs
    std::vector<Matrix> dropout_mask;   // per layer; scaled keep-mask, empty if n/a
    std::vector<std::vector<std::size_t>> pool_argmax;  // per layer; flat input offsets
};

struct ForwardResult {
    Matrix logits;
    ForwardCache cache;
};

/// Runs the stack on a minibatch (rows are examples). Train mode applies
/// inverted dropout (mask then scale by 1/(1-rate)) drawing masks from rng;
/// eval mode applies no dropout and consumes no randomness. Output is raw
/// logits; no softmax.
ForwardResult forward(const Model& model, const Matrix& batch, Mode mode, RngStream& rng);

/// Eval-mode forward without the cache plumbing.
Matrix forward_eval(const Model& model, const Matrix& batch);

struct Gradients {
    std::vector<LayerParams> layers;  // same shapes as Model::params
};

/// Backpropagates d(loss)/d(logits) through the cached pass and returns the
/// gradient of every parameter. Dropout masks are reused from the cache;
/// ReLU passes gradient only where the pre-activation is > 0.
Gradients backward(const Model& model, const ForwardCache& cache, const Matrix& dlogits);

/// Numerically stabilized softmax of one row vector (max subtraction).
std::vector<double> softmax(const std::vector<double>& z);

/// Row-wise softmax of a logits matrix.
Matrix softmax_rows(const Matrix& logits);

/// Replaces the first adjacent pair Dense(D,k,identity) -> Dense(k,H,act)
/// with the single layer Dense(D,H,act) whose weight is U*V and bias is
/// U*c + b. Forward outputs are preserved for every input. ContractError
/// when no absorbable pair exists.
Model absorb_bottleneck(const Model& model);

}  // namespace smim
