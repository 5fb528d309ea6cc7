#include "isdml/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "isdml/errors.hpp"

namespace isdml {

std::size_t DomainDataset::input_dim() const {
    if (images.empty()) return 0;
    return images.front().pixels.size();
}

void DomainDataset::validate() const {
    if (labels.size() != images.size() || domain_ids.size() != images.size())
        throw InvalidInput("dataset: images, labels and domain ids differ in length");
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i] >= num_classes) throw InvalidInput("dataset: label out of range at " + std::to_string(i));
        if (domain_ids[i] >= num_domains) throw InvalidInput("dataset: domain id out of range at " + std::to_string(i));
        if (!images[i].same_shape(images.front()))
            throw InvalidInput("dataset: inconsistent image shape at " + std::to_string(i));
        if (images[i].pixels.size() != images[i].plane_size() * images[i].channels)
            throw InvalidInput("dataset: pixel buffer does not match image shape at " + std::to_string(i));
    }
}

void DomainDataset::validate_coverage() const {
    validate();
    std::vector<bool> seen(num_classes * num_domains, false);
    for (std::size_t i = 0; i < size(); ++i) seen[domain_ids[i] * num_classes + labels[i]] = true;
    for (std::size_t k = 0; k < num_domains; ++k)
        for (std::size_t c = 0; c < num_classes; ++c)
            if (!seen[k * num_classes + c])
                throw InvalidInput("dataset: class " + std::to_string(c) + " missing from domain " + std::to_string(k));
}

Matrix DomainDataset::rows(std::span<const std::size_t> indices) const {
    const std::size_t dim = input_dim();
    Matrix m(indices.size(), dim);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto& px = images.at(indices[r]).pixels;
        std::copy(px.begin(), px.end(), m.row(r).begin());
    }
    return m;
}

Matrix DomainDataset::all_rows() const {
    std::vector<std::size_t> idx(size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return rows(idx);
}

void SyntheticSpec::validate() const {
    if (num_classes < 2) throw InvalidInput("synthetic spec: need at least 2 classes");
    if (num_classes > kMaxClasses)
        throw InvalidInput("synthetic spec: at most " + std::to_string(kMaxClasses) + " glyph classes");
    if (num_domains < 3) throw InvalidInput("synthetic spec: need at least 3 domains");
    if (per_class_per_domain < 1) throw InvalidInput("synthetic spec: need at least one sample per class and domain");
    if (image_size < 8 || image_size > 256) throw InvalidInput("synthetic spec: image_size must lie in [8, 256]");
}

namespace {

double sd_box(double u, double v, double hx, double hy) { return std::max(std::abs(u) - hx, std::abs(v) - hy); }

// Signed distance to glyph `cls` in glyph coordinates (negative inside).
double glyph_distance(std::size_t cls, double u, double v, double half) {
    const double r = std::hypot(u, v);
    switch (cls) {
        case 0: return r - 0.55;  // disk
        case 1: return std::min(sd_box(u, v, half, 0.7), sd_box(u, v, 0.7, half));  // cross
        case 2: {  // horizontal stripes
            double d = 1e9;
            for (double c : {-0.5, 0.0, 0.5}) d = std::min(d, sd_box(u, v - c, 0.7, half));
            return d;
        }
        case 3: return std::abs(r - 0.5) - half;  // ring
        case 4: {  // diagonal cross
            const double a = (u + v) * std::numbers::sqrt2 / 2.0;
            const double b = (u - v) * std::numbers::sqrt2 / 2.0;
            return std::min(sd_box(a, b, 0.8, half), sd_box(a, b, half, 0.8));
        }
        case 5: return std::abs(std::max(std::abs(u), std::abs(v)) - 0.55) - half;  // square outline
        case 6: {  // triangle
            const std::array<std::array<double, 3>, 3> edges = {{{0.0, 1.0, -0.5},
                                                                 {0.878, -0.479, -0.31},
                                                                 {-0.878, -0.479, -0.31}}};
            double d = -1e9;
            for (const auto& e : edges) d = std::max(d, e[0] * u + e[1] * v + e[2]);
            return d;
        }
        case 7: {  // vertical stripes
            double d = 1e9;
            for (double c : {-0.5, 0.0, 0.5}) d = std::min(d, sd_box(u - c, v, half, 0.7));
            return d;
        }
        case 8: return std::min(sd_box(u - 0.3, v - 0.3, 0.28, 0.28), sd_box(u + 0.3, v + 0.3, 0.28, 0.28));  // checker
        default: return std::min(std::hypot(u + 0.35, v) - 0.25, std::hypot(u - 0.35, v) - 0.25);  // two dots
    }
}

struct DomainStyle {
    double grating_freq;    // cycles per image
    double grating_angle;
    double grating_amp;
    double ramp_angle;
    double ramp_strength;
    double background;
    double foreground;
    double noise_sigma;
    bool lowpass_noise;
};

DomainStyle style_for(std::size_t k) {
    DomainStyle s;
    s.grating_freq = 2.0 + static_cast<double>((3 * k) % 11);
    s.grating_angle = 0.7 * static_cast<double>(k);
    s.grating_amp = 0.12 + 0.05 * static_cast<double>(k % 3);
    s.ramp_angle = 1.9 * static_cast<double>(k);
    s.ramp_strength = k % 2 ? 0.3 : 0.15;
    const bool inverted = k % 2 == 1;
    s.background = inverted ? 0.72 : 0.2;
    s.foreground = inverted ? 0.18 : 0.85;
    s.noise_sigma = 0.05 + 0.03 * static_cast<double>(k % 3);
    s.lowpass_noise = (k / 2) % 2 == 1;
    return s;
}

Image render(std::size_t cls, const DomainStyle& style, std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
    std::normal_distribution<double> normal(0.0, 1.0);

    const double cx = uniform(-0.15, 0.15);
    const double cy = uniform(-0.15, 0.15);
    const double scale = uniform(0.8, 1.1);
    const double rot = uniform(-0.25, 0.25);
    const double half = uniform(0.07, 0.11);
    const double phase = uniform(0.0, 2.0 * std::numbers::pi);
    const double gain = uniform(0.92, 1.08);

    const double nd = static_cast<double>(n);
    const double px = 2.0 / nd;
    std::vector<double> noise(n * n);
    for (double& x : noise) x = normal(rng);
    if (style.lowpass_noise) {
        std::vector<double> blurred(n * n, 0.0);
        for (std::size_t y = 0; y < n; ++y)
            for (std::size_t x = 0; x < n; ++x) {
                double s = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const std::size_t yy = (y + n + dy) % n, xx = (x + n + dx) % n;
                        s += noise[yy * n + xx];
                    }
                blurred[y * n + x] = s / 3.0;  // unit variance after a 3x3 box sum
            }
        noise.swap(blurred);
    }

    Image img(n, n, 1);
    const double ca = std::cos(rot), sa = std::sin(rot);
    const double gx = std::cos(style.grating_angle), gy = std::sin(style.grating_angle);
    const double rx = std::cos(style.ramp_angle), ry = std::sin(style.ramp_angle);
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const double u0 = (static_cast<double>(x) + 0.5) * px - 1.0;
            const double v0 = (static_cast<double>(y) + 0.5) * px - 1.0;
            const double du = u0 - cx, dv = v0 - cy;
            const double u = (ca * du + sa * dv) / scale;
            const double v = (-sa * du + ca * dv) / scale;
            const double sd = glyph_distance(cls, u, v, half) * scale;
            const double coverage = std::clamp(0.5 - sd / px, 0.0, 1.0);

            const double texture =
                style.grating_amp * std::sin(std::numbers::pi * style.grating_freq * (gx * u0 + gy * v0) + phase);
            const double ramp = 0.5 * style.ramp_strength * (rx * u0 + ry * v0);
            double value = style.background + texture + ramp;
            value += coverage * (style.foreground - style.background) * gain;
            value += style.noise_sigma * noise[y * n + x];
            img.at(0, y, x) = static_cast<double>(static_cast<float>(std::clamp(value, 0.0, 1.0)));
        }
    }
    return img;
}

std::uint32_t read_be32(const std::vector<char>& b, std::size_t pos, const char* what) {
    if (b.size() < pos + 4) throw FormatError(std::string(what) + ": truncated header");
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(b[pos + i]);
    return v;
}

}  // namespace

DomainDataset generate(const SyntheticSpec& spec) {
    spec.validate();
    DomainDataset ds;
    ds.num_classes = spec.num_classes;
    ds.num_domains = spec.num_domains;
    const std::size_t total = spec.num_classes * spec.num_domains * spec.per_class_per_domain;
    ds.images.reserve(total);
    for (std::size_t k = 0; k < spec.num_domains; ++k) {
        const DomainStyle style = style_for(k);
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            for (std::size_t i = 0; i < spec.per_class_per_domain; ++i) {
                std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                                  static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(c),
                                  static_cast<std::uint32_t>(i)};
                std::mt19937_64 rng(seq);
                ds.images.push_back(render(c, style, spec.image_size, rng));
                ds.labels.push_back(c);
                ds.domain_ids.push_back(k);
            }
        }
    }
    return ds;
}

DomainDataset decode_idx(const std::vector<char>& image_bytes, const std::vector<char>& label_bytes,
                         std::size_t domain_id) {
    if (read_be32(image_bytes, 0, "IDX images") != 0x00000803u) throw FormatError("IDX images: bad magic");
    if (read_be32(label_bytes, 0, "IDX labels") != 0x00000801u) throw FormatError("IDX labels: bad magic");
    const std::size_t n = read_be32(image_bytes, 4, "IDX images");
    const std::size_t rows = read_be32(image_bytes, 8, "IDX images");
    const std::size_t cols = read_be32(image_bytes, 12, "IDX images");
    const std::size_t n_labels = read_be32(label_bytes, 4, "IDX labels");
    if (n != n_labels)
        throw FormatError("IDX: image count " + std::to_string(n) + " != label count " + std::to_string(n_labels));
    if (rows == 0 || cols == 0) throw FormatError("IDX images: zero image dimension");
    if (image_bytes.size() != 16 + n * rows * cols) throw FormatError("IDX images: payload length does not match header");
    if (label_bytes.size() != 8 + n) throw FormatError("IDX labels: payload length does not match header");

    DomainDataset ds;
    ds.num_domains = domain_id + 1;
    std::size_t max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        Image img(rows, cols, 1);
        const char* src = image_bytes.data() + 16 + i * rows * cols;
        for (std::size_t p = 0; p < rows * cols; ++p)
            img.pixels[p] = static_cast<double>(static_cast<float>(static_cast<unsigned char>(src[p]) / 255.0));
        ds.images.push_back(std::move(img));
        const std::size_t y = static_cast<unsigned char>(label_bytes[8 + i]);
        max_label = std::max(max_label, y);
        ds.labels.push_back(y);
        ds.domain_ids.push_back(domain_id);
    }
    ds.num_classes = n ? max_label + 1 : 0;
    return ds;
}

DomainDataset ingest_idx(const std::string& image_file, const std::string& label_file, std::size_t domain_id) {
    return decode_idx(binary::read_file(image_file), binary::read_file(label_file), domain_id);
}

DomainDataset concat(const std::vector<DomainDataset>& parts) {
    DomainDataset out;
    for (const auto& p : parts) {
        if (!out.images.empty() && !p.images.empty() && !p.images.front().same_shape(out.images.front()))
            throw InvalidInput("concat: image shapes differ");
        out.images.insert(out.images.end(), p.images.begin(), p.images.end());
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
        out.domain_ids.insert(out.domain_ids.end(), p.domain_ids.begin(), p.domain_ids.end());
        out.num_classes = std::max(out.num_classes, p.num_classes);
        out.num_domains = std::max(out.num_domains, p.num_domains);
    }
    out.validate();
    return out;
}

LodoSplit lodo_split(const DomainDataset& ds, std::size_t target_id) {
    if (target_id >= ds.num_domains)
        throw InvalidInput("lodo_split: target domain " + std::to_string(target_id) + " out of range (K=" +
                           std::to_string(ds.num_domains) + ")");
    LodoSplit split;
    split.target_id = target_id;
    for (DomainDataset* part : {&split.train, &split.target}) {
        part->num_classes = ds.num_classes;
        part->num_domains = ds.num_domains;
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const bool is_target = ds.domain_ids[i] == target_id;
        DomainDataset& part = is_target ? split.target : split.train;
        part.images.push_back(ds.images[i]);
        part.labels.push_back(ds.labels[i]);
        part.domain_ids.push_back(ds.domain_ids[i]);
        (is_target ? split.target_indices : split.train_indices).push_back(i);
    }
    return split;
}

namespace {
constexpr std::string_view kDatasetMagic = "ISDMDATA";
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

std::vector<char> encode_dataset(const DomainDataset& ds) {
    ds.validate();
    binary::Writer w;
    w.bytes(kDatasetMagic);
    w.le<std::uint32_t>(kDatasetVersion);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ds.num_classes));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ds.num_domains));
    w.le<std::uint64_t>(ds.size());
    const Image shape = ds.images.empty() ? Image{} : ds.images.front();
    w.le<std::uint32_t>(static_cast<std::uint32_t>(shape.height));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(shape.width));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(shape.channels));
    for (std::size_t y : ds.labels) w.le<std::uint32_t>(static_cast<std::uint32_t>(y));
    for (std::size_t k : ds.domain_ids) w.le<std::uint32_t>(static_cast<std::uint32_t>(k));
    for (const auto& img : ds.images)
        for (double p : img.pixels) w.le<float>(static_cast<float>(p));
    return w.buffer();
}

DomainDataset decode_dataset(const std::vector<char>& bytes) {
    binary::Reader r(bytes, "dataset");
    r.expect_bytes(kDatasetMagic);
    if (const auto v = r.le<std::uint32_t>(); v != kDatasetVersion)
        throw FormatError("dataset: unsupported version " + std::to_string(v));
    DomainDataset ds;
    ds.num_classes = r.le<std::uint32_t>();
    ds.num_domains = r.le<std::uint32_t>();
    const std::uint64_t n = r.le<std::uint64_t>();
    const std::size_t h = r.le<std::uint32_t>();
    const std::size_t w = r.le<std::uint32_t>();
    const std::size_t c = r.le<std::uint32_t>();
    if (h > (1u << 16) || w > (1u << 16) || c > 64) throw FormatError("dataset: implausible image shape");
    const std::size_t per_image = h * w * c;
    // Exact length check before allocating anything sized by the header.
    if (r.remaining() / 4 < n * 2 || (r.remaining() - n * 8) / 4 != n * per_image ||
        (r.remaining() - n * 8) % 4 != 0)
        throw FormatError("dataset: payload length does not match header (truncated or corrupt)");
    ds.labels.resize(n);
    ds.domain_ids.resize(n);
    for (auto& y : ds.labels) y = r.le<std::uint32_t>();
    for (auto& k : ds.domain_ids) k = r.le<std::uint32_t>();
    ds.images.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Image img(h, w, c);
        for (double& p : img.pixels) {
            const float f = r.le<float>();
            if (!std::isfinite(f)) throw FormatError("dataset: non-finite pixel");
            p = f;
        }
        ds.images.push_back(std::move(img));
    }
    r.expect_end();
    try {
        ds.validate();
    } catch (const InvalidInput& e) {
        throw FormatError(std::string("dataset: ") + e.what());
    }
    return ds;
}

void save_dataset(const DomainDataset& ds, const std::string& path) { binary::write_file(path, encode_dataset(ds)); }

DomainDataset load_dataset(const std::string& path) { return decode_dataset(binary::read_file(path)); }

std::uint64_t dataset_hash(const DomainDataset& ds) {
    std::uint64_t h = 1469598103934665603ull;
    for (char ch : encode_dataset(ds)) {
        h ^= static_cast<unsigned char>(ch);
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace isdml
