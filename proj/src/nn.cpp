#include "smim/nn.hpp"

#include <cmath>
#include <sstream>

namespace smim {

namespace {

// Shape of the data stream between layers: an image block or a flat vector.
struct StreamShape {
    bool image = false;
    std::size_t channels = 0, height = 0, width = 0;
    std::size_t flat = 0;

    std::size_t row_width() const { return image ? channels * height * width : flat; }
};

[[noreturn]] void spec_error(std::size_t layer_index, const std::string& what) {
    throw ConfigError("NetworkSpec: layer " + std::to_string(layer_index) + ": " + what);
}

StreamShape initial_shape(const NetworkSpec& spec) {
    StreamShape s;
    if (spec.input_image) {
        s.image = true;
        s.channels = spec.input_image->channels;
        s.height = spec.input_image->height;
        s.width = spec.input_image->width;
    } else {
        s.flat = spec.input_dim;
    }
    return s;
}

StreamShape advance_shape(const StreamShape& in, const LayerSpec& layer, std::size_t idx) {
    StreamShape out = in;
    if (const auto* d = std::get_if<DenseSpec>(&layer)) {
        if (in.image) spec_error(idx, "Dense requires Flatten after image layers");
        if (d->in == 0 || d->out == 0) spec_error(idx, "Dense dimensions must be positive");
        if (d->in != in.flat) {
            spec_error(idx, "Dense expects input width " + std::to_string(d->in) + " but gets " +
                                std::to_string(in.flat));
        }
        out.flat = d->out;
    } else if (const auto* dr = std::get_if<DropoutSpec>(&layer)) {
        if (!(dr->rate >= 0.0 && dr->rate < 1.0)) spec_error(idx, "Dropout rate must be in [0,1)");
    } else if (const auto* c = std::get_if<Conv2DSpec>(&layer)) {
        if (!in.image) spec_error(idx, "Conv2D requires image input before Flatten");
        if (c->in_channels == 0 || c->out_channels == 0 || c->kernel_h == 0 || c->kernel_w == 0) {
            spec_error(idx, "Conv2D dimensions must be positive");
        }
        if (c->in_channels != in.channels) {
            spec_error(idx, "Conv2D expects " + std::to_string(c->in_channels) +
                                " channels but gets " + std::to_string(in.channels));
        }
        if (c->kernel_h > in.height || c->kernel_w > in.width) {
            throw ShapeError("NetworkSpec: layer " + std::to_string(idx) + ": kernel " +
                             std::to_string(c->kernel_h) + "x" + std::to_string(c->kernel_w) +
                             " larger than input " + std::to_string(in.height) + "x" +
                             std::to_string(in.width));
        }
        out.channels = c->out_channels;
        out.height = in.height - c->kernel_h + 1;
        out.width = in.width - c->kernel_w + 1;
    } else if (const auto* p = std::get_if<MaxPool2DSpec>(&layer)) {
        if (!in.image) spec_error(idx, "MaxPool2D requires image input before Flatten");
        if (p->pool_h == 0 || p->pool_w == 0) spec_error(idx, "pool dimensions must be positive");
        if (p->pool_h > in.height || p->pool_w > in.width) {
            throw ShapeError("NetworkSpec: layer " + std::to_string(idx) + ": pool " +
                             std::to_string(p->pool_h) + "x" + std::to_string(p->pool_w) +
                             " larger than input " + std::to_string(in.height) + "x" +
                             std::to_string(in.width));
        }
        // Non-overlapping windows; ragged edges truncated.
        out.height = in.height / p->pool_h;
        out.width = in.width / p->pool_w;
    } else {
        if (!in.image) spec_error(idx, "Flatten requires image input");
        out.image = false;
        out.flat = in.channels * in.height * in.width;
        out.channels = out.height = out.width = 0;
    }
    return out;
}

// Shapes entering each layer, plus the final output shape at the back.
std::vector<StreamShape> trace_shapes(const NetworkSpec& spec) {
    std::vector<StreamShape> trace;
    trace.reserve(spec.layers.size() + 1);
    StreamShape s = initial_shape(spec);
    trace.push_back(s);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        s = advance_shape(s, spec.layers[i], i);
        trace.push_back(s);
    }
    return trace;
}

bool is_identity_dense(const LayerSpec& layer) {
    const auto* d = std::get_if<DenseSpec>(&layer);
    return d != nullptr && d->activation == Activation::Identity;
}

bool is_parameterized(const LayerSpec& layer) {
    return std::holds_alternative<DenseSpec>(layer) || std::holds_alternative<Conv2DSpec>(layer);
}

// x: [B x in], w: [out x in], bias: [out] -> [B x out]. Per-output-cell
// accumulation runs over the input index left to right.
Matrix linear_forward(const Matrix& x, const Matrix& w, const std::vector<double>& bias) {
    const std::size_t batch = x.rows(), in = x.cols(), out = w.rows();
    Matrix y(batch, out);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xr = x.row_ptr(b);
        double* yr = y.row_ptr(b);
        for (std::size_t o = 0; o < out; ++o) {
            const double* wr = w.row_ptr(o);
            double acc = bias[o];
            for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }
    return y;
}

Matrix conv_forward(const Conv2DSpec& c, const StreamShape& in_shape, const Matrix& x,
                    const Matrix& w, const std::vector<double>& bias) {
    const std::size_t h = in_shape.height, wd = in_shape.width;
    const std::size_t oh = h - c.kernel_h + 1, ow = wd - c.kernel_w + 1;
    const std::size_t kplane = c.kernel_h * c.kernel_w;
    Matrix y(x.rows(), c.out_channels * oh * ow);
    for (std::size_t b = 0; b < x.rows(); ++b) {
        const double* xr = x.row_ptr(b);
        double* yr = y.row_ptr(b);
        for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
            const double* wr = w.row_ptr(oc);
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double acc = bias[oc];
                    for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
                        const double* plane = xr + ic * h * wd;
                        const double* kern = wr + ic * kplane;
                        for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
                            const double* row = plane + (oy + ky) * wd + ox;
                            const double* krow = kern + ky * c.kernel_w;
                            for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
                                acc += krow[kx] * row[kx];
                            }
                        }
                    }
                    yr[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    return y;
}

void conv_backward(const Conv2DSpec& c, const StreamShape& in_shape, const Matrix& x,
                   const Matrix& w, const Matrix& dout, Matrix& dw, std::vector<double>& dbias,
                   Matrix& dx) {
    const std::size_t h = in_shape.height, wd = in_shape.width;
    const std::size_t oh = h - c.kernel_h + 1, ow = wd - c.kernel_w + 1;
    const std::size_t kplane = c.kernel_h * c.kernel_w;
    for (std::size_t b = 0; b < x.rows(); ++b) {
        const double* xr = x.row_ptr(b);
        const double* gr = dout.row_ptr(b);
        double* dxr = dx.row_ptr(b);
        for (std::size_t oc = 0; oc < c.out_channels; ++oc) {
            double* dwr = dw.row_ptr(oc);
            const double* wr = w.row_ptr(oc);
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const double g = gr[(oc * oh + oy) * ow + ox];
                    dbias[oc] += g;
                    for (std::size_t ic = 0; ic < c.in_channels; ++ic) {
                        const double* plane = xr + ic * h * wd;
                        double* dplane = dxr + ic * h * wd;
                        double* dkern = dwr + ic * kplane;
                        const double* kern = wr + ic * kplane;
                        for (std::size_t ky = 0; ky < c.kernel_h; ++ky) {
                            const double* row = plane + (oy + ky) * wd + ox;
                            double* drow = dplane + (oy + ky) * wd + ox;
                            double* dkrow = dkern + ky * c.kernel_w;
                            const double* krow = kern + ky * c.kernel_w;
                            for (std::size_t kx = 0; kx < c.kernel_w; ++kx) {
                                dkrow[kx] += g * row[kx];
                                drow[kx] += g * krow[kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

Matrix pool_forward(const MaxPool2DSpec& p, const StreamShape& in_shape, const Matrix& x,
                    std::vector<std::size_t>& argmax) {
    const std::size_t h = in_shape.height, wd = in_shape.width, ch = in_shape.channels;
    const std::size_t oh = h / p.pool_h, ow = wd / p.pool_w;
    Matrix y(x.rows(), ch * oh * ow);
    argmax.assign(x.rows() * ch * oh * ow, 0);
    for (std::size_t b = 0; b < x.rows(); ++b) {
        const double* xr = x.row_ptr(b);
        double* yr = y.row_ptr(b);
        for (std::size_t c = 0; c < ch; ++c) {
            const double* plane = xr + c * h * wd;
            for (std::size_t oy = 0; oy < oh; ++oy) {
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    double best = plane[(oy * p.pool_h) * wd + ox * p.pool_w];
                    std::size_t best_off = c * h * wd + (oy * p.pool_h) * wd + ox * p.pool_w;
                    for (std::size_t py = 0; py < p.pool_h; ++py) {
                        for (std::size_t px = 0; px < p.pool_w; ++px) {
                            const std::size_t yy = oy * p.pool_h + py;
                            const std::size_t xx = ox * p.pool_w + px;
                            const double v = plane[yy * wd + xx];
                            if (v > best) {  // ties keep the first scanned cell
                                best = v;
                                best_off = c * h * wd + yy * wd + xx;
                            }
                        }
                    }
                    const std::size_t oidx = (c * oh + oy) * ow + ox;
                    yr[oidx] = best;
                    argmax[b * ch * oh * ow + oidx] = best_off;
                }
            }
        }
    }
    return y;
}

}  // namespace

NetworkSpec NetworkSpec::flat_input(std::size_t dim, std::vector<LayerSpec> layers,
                                    std::size_t output_dim) {
    NetworkSpec spec;
    spec.input_dim = dim;
    spec.layers = std::move(layers);
    spec.output_dim = output_dim;
    return spec;
}

NetworkSpec NetworkSpec::image_input(ImageShape shape, std::vector<LayerSpec> layers,
                                     std::size_t output_dim) {
    NetworkSpec spec;
    spec.input_image = shape;
    spec.input_dim = shape.flat();
    spec.layers = std::move(layers);
    spec.output_dim = output_dim;
    return spec;
}

void NetworkSpec::validate() const {
    if (input_dim == 0) throw ConfigError("NetworkSpec: input dimension must be positive");
    if (input_image && input_image->flat() != input_dim) {
        throw ConfigError("NetworkSpec: image shape does not match input_dim");
    }
    if (output_dim == 0) throw ConfigError("NetworkSpec: output dimension must be positive");
    if (layers.empty()) throw ConfigError("NetworkSpec: no layers");
    const auto trace = trace_shapes(*this);
    const StreamShape& last = trace.back();
    if (last.image || last.flat != output_dim) {
        throw ConfigError("NetworkSpec: final layer emits " +
                          std::to_string(last.row_width()) + " values, expected output_dim " +
                          std::to_string(output_dim));
    }
    // At most one linear bottleneck (identity Dense feeding a later layer).
    std::size_t bottlenecks = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!is_identity_dense(layers[i])) continue;
        for (std::size_t j = i + 1; j < layers.size(); ++j) {
            if (is_parameterized(layers[j])) {
                ++bottlenecks;
                break;
            }
        }
    }
    if (bottlenecks > 1) {
        throw ConfigError("NetworkSpec: more than one linear bottleneck layer");
    }
}

std::string NetworkSpec::describe() const {
    std::ostringstream os;
    if (input_image) {
        os << input_image->channels << "x" << input_image->height << "x" << input_image->width;
    } else {
        os << input_dim;
    }
    for (const auto& layer : layers) {
        os << "-";
        if (const auto* d = std::get_if<DenseSpec>(&layer)) {
            os << d->out << (d->activation == Activation::Relu ? "r" : "L");
        } else if (const auto* dr = std::get_if<DropoutSpec>(&layer)) {
            os << "drop" << dr->rate;
        } else if (const auto* c = std::get_if<Conv2DSpec>(&layer)) {
            os << "conv" << c->out_channels << "x" << c->kernel_h << "x" << c->kernel_w;
        } else if (const auto* p = std::get_if<MaxPool2DSpec>(&layer)) {
            os << "pool" << p->pool_h << "x" << p->pool_w;
        } else {
            os << "flat";
        }
    }
    return os.str();
}

std::uint64_t param_count(const NetworkSpec& spec) {
    std::uint64_t total = 0;
    for (const auto& layer : spec.layers) {
        if (const auto* d = std::get_if<DenseSpec>(&layer)) {
            total += static_cast<std::uint64_t>(d->in) * d->out + d->out;
        } else if (const auto* c = std::get_if<Conv2DSpec>(&layer)) {
            total += static_cast<std::uint64_t>(c->out_channels) * c->in_channels * c->kernel_h *
                         c->kernel_w +
                     c->out_channels;
        }
    }
    return total;
}

std::uint64_t Model::param_count() const {
    std::uint64_t total = 0;
    for (const auto& p : params) total += p.weight.size() + p.bias.size();
    return total;
}

Model init_params(const NetworkSpec& spec, RngStream& rng) {
    spec.validate();
    Model model;
    model.spec = spec;
    model.params.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        LayerParams& lp = model.params[i];
        if (const auto* d = std::get_if<DenseSpec>(&spec.layers[i])) {
            const double a = std::sqrt(6.0 / static_cast<double>(d->in + d->out));
            lp.weight = Matrix(d->out, d->in);
            for (double& v : lp.weight.flat()) v = rng.uniform(-a, a);
            lp.bias.assign(d->out, 0.0);
        } else if (const auto* c = std::get_if<Conv2DSpec>(&spec.layers[i])) {
            const std::size_t fan_in = c->in_channels * c->kernel_h * c->kernel_w;
            const std::size_t fan_out = c->out_channels * c->kernel_h * c->kernel_w;
            const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            lp.weight = Matrix(c->out_channels, fan_in);
            for (double& v : lp.weight.flat()) v = rng.uniform(-a, a);
            lp.bias.assign(c->out_channels, 0.0);
        }
    }
    return model;
}

ForwardResult forward(const Model& model, const Matrix& batch, Mode mode, RngStream& rng) {
    const NetworkSpec& spec = model.spec;
    if (batch.cols() != spec.input_dim) {
        throw ShapeError("forward: batch width " + std::to_string(batch.cols()) +
                         " does not match input dimension " + std::to_string(spec.input_dim));
    }
    const auto trace = trace_shapes(spec);
    ForwardCache cache;
    cache.mode = mode;
    cache.batch = batch.rows();
    cache.input = batch;
    cache.pre.resize(spec.layers.size());
    cache.post.resize(spec.layers.size());
    cache.dropout_mask.resize(spec.layers.size());
    cache.pool_argmax.resize(spec.layers.size());

    const Matrix* act = &cache.input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& layer = spec.layers[i];
        if (const auto* d = std::get_if<DenseSpec>(&layer)) {
            cache.pre[i] = linear_forward(*act, model.params[i].weight, model.params[i].bias);
            if (d->activation == Activation::Relu) {
                Matrix post = cache.pre[i];
                for (double& v : post.flat()) v = v > 0.0 ? v : 0.0;
                cache.post[i] = std::move(post);
            } else {
                cache.post[i] = cache.pre[i];
            }
        } else if (const auto* dr = std::get_if<DropoutSpec>(&layer)) {
            if (mode == Mode::Train && dr->rate > 0.0) {
                const double keep_scale = 1.0 / (1.0 - dr->rate);
                Matrix mask(act->rows(), act->cols());
                for (double& v : mask.flat()) {
                    v = rng.uniform() >= dr->rate ? keep_scale : 0.0;
                }
                cache.post[i] = hadamard(*act, mask);
                cache.dropout_mask[i] = std::move(mask);
            } else {
                cache.post[i] = *act;
            }
        } else if (const auto* c = std::get_if<Conv2DSpec>(&layer)) {
            cache.pre[i] =
                conv_forward(*c, trace[i], *act, model.params[i].weight, model.params[i].bias);
            cache.post[i] = cache.pre[i];
        } else if (const auto* p = std::get_if<MaxPool2DSpec>(&layer)) {
            cache.post[i] = pool_forward(*p, trace[i], *act, cache.pool_argmax[i]);
        } else {
            cache.post[i] = *act;  // Flatten: layout is already flat row-major
        }
        act = &cache.post[i];
    }
    return ForwardResult{cache.post.back(), std::move(cache)};
}

Matrix forward_eval(const Model& model, const Matrix& batch) {
    RngStream unused(0);
    return forward(model, batch, Mode::Eval, unused).logits;
}

Gradients backward(const Model& model, const ForwardCache& cache, const Matrix& dlogits) {
    const NetworkSpec& spec = model.spec;
    if (cache.post.size() != spec.layers.size() || cache.input.cols() != spec.input_dim ||
        cache.input.rows() != cache.batch) {
        throw ContractError("backward: cache does not match model");
    }
    if (dlogits.rows() != cache.batch || dlogits.cols() != spec.output_dim) {
        throw ContractError("backward: dlogits shape " + dlogits.shape_str() +
                            " does not match cached batch of " + std::to_string(cache.batch) +
                            "x" + std::to_string(spec.output_dim));
    }
    const auto trace = trace_shapes(spec);
    Gradients grads;
    grads.layers.resize(spec.layers.size());

    Matrix grad = dlogits;
    for (std::size_t ri = spec.layers.size(); ri-- > 0;) {
        const LayerSpec& layer = spec.layers[ri];
        const Matrix& layer_in = ri == 0 ? cache.input : cache.post[ri - 1];
        if (grad.rows() != cache.batch || grad.cols() != trace[ri + 1].row_width()) {
            throw ContractError("backward: cache entry for layer " + std::to_string(ri) +
                                " is stale");
        }
        if (const auto* d = std::get_if<DenseSpec>(&layer)) {
            Matrix dpre = grad;
            if (d->activation == Activation::Relu) {
                const Matrix& pre = cache.pre[ri];
                if (!pre.same_shape(dpre)) {
                    throw ContractError("backward: cache entry for layer " + std::to_string(ri) +
                                        " is stale");
                }
                for (std::size_t n = 0; n < dpre.size(); ++n) {
                    if (pre.flat()[n] <= 0.0) dpre.flat()[n] = 0.0;
                }
            }
            LayerParams& g = grads.layers[ri];
            g.weight = Matrix(d->out, d->in);
            g.bias.assign(d->out, 0.0);
            for (std::size_t b = 0; b < cache.batch; ++b) {
                const double* xr = layer_in.row_ptr(b);
                const double* gr = dpre.row_ptr(b);
                for (std::size_t o = 0; o < d->out; ++o) {
                    const double go = gr[o];
                    if (go == 0.0) continue;
                    double* wr = g.weight.row_ptr(o);
                    for (std::size_t k = 0; k < d->in; ++k) wr[k] += go * xr[k];
                    g.bias[o] += go;
                }
            }
            grad = matmul(dpre, model.params[ri].weight);
        } else if (std::get_if<DropoutSpec>(&layer) != nullptr) {
            if (cache.mode == Mode::Train && !cache.dropout_mask[ri].empty()) {
                grad = hadamard(grad, cache.dropout_mask[ri]);
            }
        } else if (const auto* c = std::get_if<Conv2DSpec>(&layer)) {
            LayerParams& g = grads.layers[ri];
            g.weight = Matrix(c->out_channels, c->in_channels * c->kernel_h * c->kernel_w);
            g.bias.assign(c->out_channels, 0.0);
            Matrix dx(layer_in.rows(), layer_in.cols());
            conv_backward(*c, trace[ri], layer_in, model.params[ri].weight, grad, g.weight,
                          g.bias, dx);
            grad = std::move(dx);
        } else if (std::get_if<MaxPool2DSpec>(&layer) != nullptr) {
            const auto& argmax = cache.pool_argmax[ri];
            if (argmax.size() != grad.size()) {
                throw ContractError("backward: cache entry for layer " + std::to_string(ri) +
                                    " is stale");
            }
            Matrix dx(layer_in.rows(), layer_in.cols());
            const std::size_t per_row = grad.cols();
            for (std::size_t b = 0; b < grad.rows(); ++b) {
                for (std::size_t o = 0; o < per_row; ++o) {
                    dx.row_ptr(b)[argmax[b * per_row + o]] += grad(b, o);
                }
            }
            grad = std::move(dx);
        }
        // Flatten: gradient passes through unchanged.
    }
    return grads;
}

std::vector<double> softmax(const std::vector<double>& z) {
    if (z.empty()) throw DomainError("softmax: empty input");
    double mx = z[0];
    for (double v : z) {
        if (!std::isfinite(v)) throw DomainError("softmax: non-finite input");
        mx = std::max(mx, v);
    }
    std::vector<double> p(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    std::vector<double> row(logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        for (std::size_t j = 0; j < logits.cols(); ++j) row[j] = logits(i, j);
        const auto p = softmax(row);
        for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) = p[j];
    }
    return out;
}

Model absorb_bottleneck(const Model& model) {
    const auto& layers = model.spec.layers;
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        if (!is_identity_dense(layers[i])) continue;
        const auto* next = std::get_if<DenseSpec>(&layers[i + 1]);
        if (next == nullptr) continue;

        const auto& bottleneck = std::get<DenseSpec>(layers[i]);
        const Matrix& v = model.params[i].weight;       // [k x D]
        const Matrix& u = model.params[i + 1].weight;   // [H x k]
        const std::vector<double>& c = model.params[i].bias;
        const std::vector<double>& b = model.params[i + 1].bias;

        LayerParams merged;
        merged.weight = matmul(u, v);  // [H x D]
        merged.bias = b;
        for (std::size_t h = 0; h < u.rows(); ++h) {
            for (std::size_t k = 0; k < u.cols(); ++k) merged.bias[h] += u(h, k) * c[k];
        }

        Model out;
        out.spec = model.spec;
        out.spec.layers.erase(out.spec.layers.begin() + static_cast<std::ptrdiff_t>(i));
        out.spec.layers[i] =
            DenseSpec{bottleneck.in, next->out, next->activation};
        out.params = model.params;
        out.params.erase(out.params.begin() + static_cast<std::ptrdiff_t>(i));
        out.params[i] = std::move(merged);
        out.spec.validate();
        return out;
    }
    throw ContractError("absorb_bottleneck: no adjacent identity-Dense -> Dense pair");
}

}  // namespace smim
