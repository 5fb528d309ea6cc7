#include "isdml/model.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "binary_io.hpp"
#include "isdml/errors.hpp"
#include "isdml/kernels.hpp"

namespace isdml {

namespace binary {

std::vector<char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<char>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw FormatError("write failed: " + path);
}

}  // namespace binary

namespace {

void check_widths(std::span<const std::size_t> widths, std::size_t num_classes) {
    if (widths.size() < 2) throw InvalidInput("model needs an input width and at least one hidden layer");
    for (std::size_t w : widths)
        if (w == 0) throw InvalidInput("model widths must be positive");
    if (num_classes < 2) throw InvalidInput("model needs at least two classes");
}

template <class Self, class Span>
std::vector<Span> collect(Self& p) {
    std::vector<Span> out;
    for (auto& layer : p.hidden) {
        out.emplace_back(layer.weight.data());
        out.emplace_back(layer.bias);
    }
    out.emplace_back(p.classifier.weight.data());
    out.emplace_back(p.classifier.bias);
    out.emplace_back(p.dml_head.weight.data());
    out.emplace_back(p.dml_head.bias);
    return out;
}

Vector column_sums(const Matrix& m) {
    Vector s(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) kernels::axpy(1.0, m.row(r), s);
    return s;
}

bool nonempty(const Matrix& m) { return !m.empty(); }

}  // namespace

std::vector<std::span<double>> ModelParams::tensors() { return collect<ModelParams, std::span<double>>(*this); }

std::vector<std::span<const double>> ModelParams::tensors() const {
    return collect<const ModelParams, std::span<const double>>(*this);
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (auto t : tensors()) n += t.size();
    return n;
}

bool ModelParams::same_shape(const ModelParams& other) const {
    if (widths != other.widths || num_classes != other.num_classes) return false;
    const auto a = tensors();
    const auto b = other.tensors();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].size() != b[i].size()) return false;
    return true;
}

ModelParams ModelParams::zeros(std::span<const std::size_t> widths, std::size_t num_classes) {
    check_widths(widths, num_classes);
    ModelParams p;
    p.widths.assign(widths.begin(), widths.end());
    p.num_classes = num_classes;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
        p.hidden.push_back({Matrix(widths[l + 1], widths[l]), Vector(widths[l + 1], 0.0)});
    const std::size_t d = widths.back();
    p.classifier = {Matrix(num_classes, d), Vector(num_classes, 0.0)};
    p.dml_head = {Matrix(num_classes, d), Vector(num_classes, 0.0)};
    return p;
}

ModelParams init_model(std::uint64_t seed, std::span<const std::size_t> widths, std::size_t num_classes) {
    ModelParams p = ModelParams::zeros(widths, num_classes);
    std::mt19937_64 rng(seed);
    auto fill = [&](Matrix& w) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& x : w.data()) x = dist(rng);
    };
    for (auto& layer : p.hidden) fill(layer.weight);
    fill(p.classifier.weight);
    fill(p.dml_head.weight);
    return p;
}

ForwardTrace forward(const ModelParams& params, const Matrix& batch) {
    if (batch.cols() != params.input_dim())
        throw InvalidInput("forward: batch width " + std::to_string(batch.cols()) + " != model input " +
                           std::to_string(params.input_dim()));
    ForwardTrace t;
    t.input = batch;
    const Matrix* prev = &t.input;
    for (const DenseLayer& layer : params.hidden) {
        Matrix z = matmul_nt(*prev, layer.weight);
        for (std::size_t r = 0; r < z.rows(); ++r) kernels::axpy(1.0, layer.bias, z.row(r));
        Matrix a = z;
        for (double& x : a.data()) x = x > 0.0 ? x : 0.0;
        t.pre.push_back(std::move(z));
        t.post.push_back(std::move(a));
        prev = &t.post.back();
    }
    auto head = [&](const DenseLayer& h) {
        Matrix s = matmul_nt(t.features(), h.weight);
        for (std::size_t r = 0; r < s.rows(); ++r) kernels::axpy(1.0, h.bias, s.row(r));
        return s;
    };
    t.class_logits = head(params.classifier);
    t.dml_logits = head(params.dml_head);
    return t;
}

ModelParams backward(const ModelParams& params, const ForwardTrace& trace, const BatchGradients& upstream) {
    const std::size_t n = trace.rows();
    const std::size_t d = params.feature_dim();
    const std::size_t c = params.num_classes;
    if (trace.pre.size() != params.hidden.size() || trace.features().cols() != d || trace.class_logits.cols() != c)
        throw InvalidInput("backward: trace does not match parameters");
    auto check = [&](const Matrix& m, std::size_t cols, const char* what) {
        if (nonempty(m) && (m.rows() != n || m.cols() != cols))
            throw InvalidInput(std::string("backward: upstream ") + what + " has wrong shape");
    };
    check(upstream.features, d, "features");
    check(upstream.class_logits, c, "class logits");
    check(upstream.dml_logits, c, "dml logits");

    ModelParams g = ModelParams::zeros_like(params);
    Matrix d_feat = nonempty(upstream.features) ? upstream.features : Matrix(n, d);

    auto head_back = [&](const DenseLayer& h, const Matrix& d_logits, DenseLayer& gh) {
        if (!nonempty(d_logits)) return;
        gh.weight = matmul_tn(d_logits, trace.features());
        gh.bias = column_sums(d_logits);
        d_feat = d_feat + matmul(d_logits, h.weight);
    };
    head_back(params.classifier, upstream.class_logits, g.classifier);
    head_back(params.dml_head, upstream.dml_logits, g.dml_head);

    auto add_direct = [](DenseLayer& gh, const Matrix& dw, const Vector& db) {
        if (!dw.empty()) {
            if (!dw.same_shape(gh.weight)) throw InvalidInput("backward: direct head gradient has wrong shape");
            kernels::axpy(1.0, dw.data(), gh.weight.data());
        }
        if (!db.empty()) {
            if (db.size() != gh.bias.size()) throw InvalidInput("backward: direct head bias gradient has wrong shape");
            kernels::axpy(1.0, db, gh.bias);
        }
    };
    add_direct(g.classifier, upstream.class_W, upstream.class_b);
    add_direct(g.dml_head, upstream.dml_W, upstream.dml_b);

    Matrix d_act = std::move(d_feat);
    for (std::size_t l = params.hidden.size(); l-- > 0;) {
        const Matrix& z = trace.pre[l];
        Matrix dz = std::move(d_act);
        for (std::size_t i = 0; i < dz.size(); ++i)
            if (!(z.data()[i] > 0.0)) dz.data()[i] = 0.0;
        const Matrix& input = l == 0 ? trace.input : trace.post[l - 1];
        g.hidden[l].weight = matmul_tn(dz, input);
        g.hidden[l].bias = column_sums(dz);
        if (l > 0) d_act = matmul(dz, params.hidden[l].weight);
    }
    return g;
}

void sgd_step(ModelParams& params, const ModelParams& grads, double lr) {
    if (!params.same_shape(grads)) throw InvalidInput("sgd_step: gradient shape mismatch");
    auto p = params.tensors();
    const auto g = grads.tensors();
    for (std::size_t i = 0; i < p.size(); ++i) kernels::axpy(-lr, g[i], p[i]);
}

std::vector<std::size_t> predict(const ModelParams& params, const Matrix& batch) {
    const ForwardTrace t = forward(params, batch);
    std::vector<std::size_t> out(batch.rows());
    for (std::size_t r = 0; r < batch.rows(); ++r) {
        const auto row = t.class_logits.row(r);
        std::size_t best = 0;
        for (std::size_t j = 1; j < row.size(); ++j)
            if (row[j] > row[best]) best = j;
        out[r] = best;
    }
    return out;
}

namespace {
constexpr std::string_view kCheckpointMagic = "ISDMCKPT";
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

std::vector<char> encode_checkpoint(const ModelParams& params) {
    binary::Writer w;
    w.bytes(kCheckpointMagic);
    w.le<std::uint32_t>(kCheckpointVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params.widths.size()));
    for (std::size_t x : params.widths) w.le<std::uint32_t>(static_cast<std::uint32_t>(x));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(params.num_classes));
    for (auto t : params.tensors())
        for (double x : t) w.le<double>(x);
    return w.buffer();
}

ModelParams decode_checkpoint(const std::vector<char>& bytes) {
    binary::Reader r(bytes, "checkpoint");
    r.expect_bytes(kCheckpointMagic);
    if (const auto v = r.le<std::uint32_t>(); v != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(v));
    const auto nw = r.le<std::uint32_t>();
    if (nw < 2 || nw > 64) throw FormatError("checkpoint: implausible layer count");
    std::vector<std::size_t> widths(nw);
    for (auto& x : widths) x = r.le<std::uint32_t>();
    const auto classes = r.le<std::uint32_t>();
    ModelParams p;
    try {
        p = ModelParams::zeros(widths, classes);
    } catch (const InvalidInput& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    r.need(p.parameter_count() * 8);
    for (auto t : p.tensors())
        for (double& x : t) x = r.le<double>();
    r.expect_end();
    for (auto t : std::as_const(p).tensors())
        if (!all_finite(t)) throw FormatError("checkpoint: non-finite parameter");
    return p;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
    binary::write_file(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::string& path) { return decode_checkpoint(binary::read_file(path)); }

}  // namespace isdml
