#include "smim/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace smim {

namespace {

constexpr char kModelMagic[4] = {'S', 'M', 'I', 'M'};
constexpr char kStatsMagic[4] = {'S', 'M', 'S', 'T'};
constexpr std::uint32_t kStatsFormatVersion = 1;

class ByteWriter {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f64_span(const double* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) f64(p[i]);
    }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& buf) : buf_(buf) {}

    void raw(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint8_t u8() {
        need(1);
        return buf_[pos_++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    bool done() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw DataError("truncated container");
    }
    const std::vector<std::uint8_t>& buf_;
    std::size_t pos_ = 0;
};

enum class LayerTag : std::uint8_t { Dense = 0, Dropout = 1, Conv2D = 2, MaxPool2D = 3, Flatten = 4 };

void write_layer(ByteWriter& w, const LayerSpec& layer) {
    if (const auto* d = std::get_if<DenseSpec>(&layer)) {
        w.u8(static_cast<std::uint8_t>(LayerTag::Dense));
        w.u32(static_cast<std::uint32_t>(d->in));
        w.u32(static_cast<std::uint32_t>(d->out));
        w.u8(static_cast<std::uint8_t>(d->activation));
    } else if (const auto* dr = std::get_if<DropoutSpec>(&layer)) {
        w.u8(static_cast<std::uint8_t>(LayerTag::Dropout));
        w.f64(dr->rate);
    } else if (const auto* c = std::get_if<Conv2DSpec>(&layer)) {
        w.u8(static_cast<std::uint8_t>(LayerTag::Conv2D));
        w.u32(static_cast<std::uint32_t>(c->in_channels));
        w.u32(static_cast<std::uint32_t>(c->out_channels));
        w.u32(static_cast<std::uint32_t>(c->kernel_h));
        w.u32(static_cast<std::uint32_t>(c->kernel_w));
    } else if (const auto* p = std::get_if<MaxPool2DSpec>(&layer)) {
        w.u8(static_cast<std::uint8_t>(LayerTag::MaxPool2D));
        w.u32(static_cast<std::uint32_t>(p->pool_h));
        w.u32(static_cast<std::uint32_t>(p->pool_w));
    } else {
        w.u8(static_cast<std::uint8_t>(LayerTag::Flatten));
    }
}

LayerSpec read_layer(ByteReader& r) {
    switch (static_cast<LayerTag>(r.u8())) {
        case LayerTag::Dense: {
            DenseSpec d;
            d.in = r.u32();
            d.out = r.u32();
            const auto act = r.u8();
            if (act > 1) throw DataError("model container: bad activation tag");
            d.activation = static_cast<Activation>(act);
            return d;
        }
        case LayerTag::Dropout: {
            DropoutSpec d;
            d.rate = r.f64();
            return d;
        }
        case LayerTag::Conv2D: {
            Conv2DSpec c;
            c.in_channels = r.u32();
            c.out_channels = r.u32();
            c.kernel_h = r.u32();
            c.kernel_w = r.u32();
            return c;
        }
        case LayerTag::MaxPool2D: {
            MaxPool2DSpec p;
            p.pool_h = r.u32();
            p.pool_w = r.u32();
            return p;
        }
        case LayerTag::Flatten:
            return FlattenSpec{};
    }
    throw DataError("model container: unknown layer tag");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + path.string());
}

}  // namespace

std::vector<std::uint8_t> model_to_bytes(const Model& model) {
    ByteWriter w;
    w.raw(kModelMagic, 4);
    w.u32(kModelFormatVersion);
    w.u8(model.spec.input_image ? 1 : 0);
    if (model.spec.input_image) {
        w.u32(static_cast<std::uint32_t>(model.spec.input_image->channels));
        w.u32(static_cast<std::uint32_t>(model.spec.input_image->height));
        w.u32(static_cast<std::uint32_t>(model.spec.input_image->width));
    } else {
        w.u32(static_cast<std::uint32_t>(model.spec.input_dim));
    }
    w.u32(static_cast<std::uint32_t>(model.spec.output_dim));
    w.u32(static_cast<std::uint32_t>(model.spec.layers.size()));
    for (const auto& layer : model.spec.layers) write_layer(w, layer);
    for (const auto& p : model.params) {
        w.f64_span(p.weight.data(), p.weight.size());
        w.f64_span(p.bias.data(), p.bias.size());
    }
    return w.take();
}

Model model_from_bytes(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kModelMagic, 4) != 0) {
        throw DataError("model container: bad magic");
    }
    const std::uint32_t version = r.u32();
    if (version != kModelFormatVersion) {
        throw DataError("model container: unsupported version " + std::to_string(version));
    }
    NetworkSpec spec;
    if (r.u8() != 0) {
        ImageShape shape;
        shape.channels = r.u32();
        shape.height = r.u32();
        shape.width = r.u32();
        spec.input_image = shape;
        spec.input_dim = shape.flat();
    } else {
        spec.input_dim = r.u32();
    }
    spec.output_dim = r.u32();
    const std::uint32_t n_layers = r.u32();
    spec.layers.reserve(n_layers);
    for (std::uint32_t i = 0; i < n_layers; ++i) spec.layers.push_back(read_layer(r));
    spec.validate();

    Model model;
    model.spec = std::move(spec);
    model.params.resize(model.spec.layers.size());
    for (std::size_t i = 0; i < model.spec.layers.size(); ++i) {
        std::size_t w_rows = 0, w_cols = 0, b_len = 0;
        if (const auto* d = std::get_if<DenseSpec>(&model.spec.layers[i])) {
            w_rows = d->out;
            w_cols = d->in;
            b_len = d->out;
        } else if (const auto* c = std::get_if<Conv2DSpec>(&model.spec.layers[i])) {
            w_rows = c->out_channels;
            w_cols = c->in_channels * c->kernel_h * c->kernel_w;
            b_len = c->out_channels;
        }
        if (w_rows == 0) continue;
        std::vector<double> flat(w_rows * w_cols);
        for (double& v : flat) v = r.f64();
        model.params[i].weight = Matrix(w_rows, w_cols, std::move(flat));
        model.params[i].bias.resize(b_len);
        for (double& v : model.params[i].bias) v = r.f64();
    }
    if (!r.done()) throw DataError("model container: trailing bytes");
    return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
    write_file(path, model_to_bytes(model));
}

Model load_model(const std::filesystem::path& path) {
    try {
        return model_from_bytes(read_file(path));
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t len) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t model_hash(const Model& model) {
    const auto bytes = model_to_bytes(model);
    return fnv1a64(bytes.data(), bytes.size());
}

void save_preprocess(const PreprocessStats& stats, const std::filesystem::path& path) {
    ByteWriter w;
    w.raw(kStatsMagic, 4);
    w.u32(kStatsFormatVersion);
    w.u8(static_cast<std::uint8_t>(stats.kind));
    w.f64(stats.epsilon);
    w.u64(stats.mu.size());
    w.f64_span(stats.mu.data(), stats.mu.size());
    w.u64(stats.sigma.size());
    w.f64_span(stats.sigma.data(), stats.sigma.size());
    w.u8(stats.zca_matrix.empty() ? 0 : 1);
    if (!stats.zca_matrix.empty()) {
        w.u64(stats.zca_matrix.rows());
        w.u64(stats.zca_matrix.cols());
        w.f64_span(stats.zca_matrix.data(), stats.zca_matrix.size());
    }
    write_file(path, w.take());
}

PreprocessStats load_preprocess(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    ByteReader r(bytes);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kStatsMagic, 4) != 0) {
        throw DataError(path.string() + ": bad stats magic");
    }
    if (r.u32() != kStatsFormatVersion) {
        throw DataError(path.string() + ": unsupported stats version");
    }
    PreprocessStats stats;
    const auto kind = r.u8();
    if (kind > 2) throw DataError(path.string() + ": bad preprocess kind");
    stats.kind = static_cast<PreprocessKind>(kind);
    stats.epsilon = r.f64();
    stats.mu.resize(r.u64());
    for (double& v : stats.mu) v = r.f64();
    stats.sigma.resize(r.u64());
    for (double& v : stats.sigma) v = r.f64();
    if (r.u8() != 0) {
        const std::size_t rows = r.u64();
        const std::size_t cols = r.u64();
        std::vector<double> flat(rows * cols);
        for (double& v : flat) v = r.f64();
        stats.zca_matrix = Matrix(rows, cols, std::move(flat));
    }
    if (!r.done()) throw DataError(path.string() + ": trailing bytes");
    return stats;
}

}  // namespace smim
