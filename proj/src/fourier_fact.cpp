#include "isdml/fourier_fact.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <map>
#include <mutex>
#include <string>
#include <utility>

#include "isdml/errors.hpp"
#include "isdml/kernels.hpp"

namespace isdml {

namespace {

// FFTW's planner is not re-entrant; execution on distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

class Fft2Plan {
public:
    Fft2Plan(std::size_t h, std::size_t w) : n_(h * w) {
        std::lock_guard lock(planner_mutex());
        buf_ = fftw_alloc_complex(n_);
        fwd_ = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
        inv_ = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
        if (!buf_ || !fwd_ || !inv_) throw NumericalError("FFTW plan creation failed");
    }
    ~Fft2Plan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(inv_);
        fftw_free(buf_);
    }
    Fft2Plan(const Fft2Plan&) = delete;
    Fft2Plan& operator=(const Fft2Plan&) = delete;

    std::vector<std::complex<double>> forward(std::span<const double> real) {
        for (std::size_t i = 0; i < n_; ++i) {
            buf_[i][0] = real[i];
            buf_[i][1] = 0.0;
        }
        fftw_execute(fwd_);
        std::vector<std::complex<double>> out(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = {buf_[i][0], buf_[i][1]};
        return out;
    }

    // Real part of the normalized inverse transform.
    std::vector<double> inverse_real(const std::vector<std::complex<double>>& spectrum) {
        for (std::size_t i = 0; i < n_; ++i) {
            buf_[i][0] = spectrum[i].real();
            buf_[i][1] = spectrum[i].imag();
        }
        fftw_execute(inv_);
        std::vector<double> out(n_);
        const double scale = 1.0 / static_cast<double>(n_);
        for (std::size_t i = 0; i < n_; ++i) out[i] = buf_[i][0] * scale;
        return out;
    }

private:
    std::size_t n_;
    fftw_complex* buf_ = nullptr;
    fftw_plan fwd_ = nullptr;
    fftw_plan inv_ = nullptr;
};

Fft2Plan& plan_for(std::size_t h, std::size_t w) {
    thread_local std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<Fft2Plan>> cache;
    auto& slot = cache[{h, w}];
    if (!slot) slot = std::make_unique<Fft2Plan>(h, w);
    return *slot;
}

}  // namespace

void FactConfig::validate() const {
    if (!std::isfinite(beta) || beta < 0.0) throw InvalidInput("beta must be finite and >= 0");
    if (!(eta_max >= 0.0 && eta_max <= 1.0)) throw InvalidInput("eta_max must lie in [0, 1]");
    if (!(teacher_momentum >= 0.0 && teacher_momentum < 1.0))
        throw InvalidInput("teacher_momentum must lie in [0, 1)");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InvalidInput("temperature must be > 0");
}

std::vector<std::complex<double>> fft2(const Image& img, std::size_t channel) {
    if (channel >= img.channels) throw InvalidInput("fft2: channel out of range");
    if (img.plane_size() == 0) throw InvalidInput("fft2: empty image");
    return plan_for(img.height, img.width).forward(img.plane(channel));
}

Image amplitude_mix(const Image& x1, const Image& x2, double eta) {
    if (!x1.same_shape(x2)) throw InvalidInput("amplitude_mix: image shapes differ");
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidInput("amplitude_mix: eta must lie in [0, 1]");
    if (x1.pixels.size() != x1.plane_size() * x1.channels || x2.pixels.size() != x1.pixels.size())
        throw InvalidInput("amplitude_mix: pixel buffer does not match image shape");
    if (eta == 0.0) return x1;

    Fft2Plan& plan = plan_for(x1.height, x1.width);
    Image out(x1.height, x1.width, x1.channels);
    for (std::size_t c = 0; c < x1.channels; ++c) {
        auto s1 = plan.forward(x1.plane(c));
        const auto s2 = plan.forward(x2.plane(c));
        // Coefficients at rounding level carry no usable phase; giving them
        // phase 0 keeps the spectrum Hermitian so the inverse stays real.
        double peak = 0.0;
        for (const auto& z : s1) peak = std::max(peak, std::abs(z));
        const double floor = 1e-12 * peak;
        for (std::size_t i = 0; i < s1.size(); ++i) {
            const double a1 = std::abs(s1[i]);
            const double amp = (1.0 - eta) * a1 + eta * std::abs(s2[i]);
            s1[i] = a1 > floor ? s1[i] * (amp / a1) : std::complex<double>(amp, 0.0);
        }
        const auto back = plan.inverse_real(s1);
        double* dst = out.pixels.data() + c * out.plane_size();
        for (std::size_t i = 0; i < back.size(); ++i) dst[i] = std::clamp(back[i], 0.0, 1.0);
    }
    return out;
}

TeacherState ema_update(const TeacherState& teacher, const ModelParams& student) {
    if (!teacher.params.same_shape(student)) throw InvalidInput("ema_update: teacher and student shapes differ");
    if (!(teacher.momentum >= 0.0 && teacher.momentum <= 1.0))
        throw InvalidInput("ema_update: momentum must lie in [0, 1]");
    TeacherState out = teacher;
    auto dst = out.params.tensors();
    const auto src = student.tensors();
    const double m = teacher.momentum;
    for (std::size_t t = 0; t < dst.size(); ++t)
        for (std::size_t i = 0; i < dst[t].size(); ++i) dst[t][i] = m * dst[t][i] + (1.0 - m) * src[t][i];
    return out;
}

CotKl cot_kl(std::span<const double> student_logits, std::span<const double> teacher_logits, double temperature) {
    if (student_logits.size() != teacher_logits.size() || student_logits.empty())
        throw InvalidInput("cot_kl: logit vectors must be non-empty and equally sized");
    if (!(temperature > 0.0)) throw InvalidInput("cot_kl: temperature must be > 0");
    const std::size_t c = student_logits.size();
    Vector zs(c), zt(c);
    for (std::size_t j = 0; j < c; ++j) {
        zs[j] = student_logits[j] / temperature;
        zt[j] = teacher_logits[j] / temperature;
    }
    const Vector ps = softmax(zs);
    const Vector pt = softmax(zt);
    // log p = z - lse(z), computed directly to stay finite for tiny probabilities.
    const double lse_s = log_sum_exp(zs);
    const double lse_t = log_sum_exp(zt);
    CotKl out;
    out.grad.resize(c);
    double kl = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
        if (pt[j] > 0.0) kl += pt[j] * ((zt[j] - lse_t) - (zs[j] - lse_s));
        out.grad[j] = temperature * (ps[j] - pt[j]);
    }
    out.value = temperature * temperature * std::max(kl, 0.0);
    return out;
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
    if (top.cols() != bottom.cols()) throw InvalidInput("stack_rows: column counts differ");
    Vector data(top.data().begin(), top.data().end());
    data.insert(data.end(), bottom.data().begin(), bottom.data().end());
    return Matrix(top.rows() + bottom.rows(), top.cols(), std::move(data));
}

FactLossParts fact_loss(const ForwardTrace& student, const Matrix& teacher_logits,
                        std::span<const std::size_t> labels, const ModelParams& student_params,
                        const FactConfig& cfg, IsdaClassification isda) {
    cfg.validate();
    const std::size_t n = labels.size();
    const std::size_t c = student_params.num_classes;
    const std::size_t d = student_params.feature_dim();
    if (n == 0 || student.rows() != 2 * n) throw InvalidInput("fact_loss: stacked batch must hold 2 x labels rows");
    if (cfg.beta > 0.0 && (teacher_logits.rows() != 2 * n || teacher_logits.cols() != c))
        throw InvalidInput("fact_loss: teacher logits do not match the stacked batch");

    FactLossParts parts;
    parts.beta = cfg.beta;
    parts.grads = BatchGradients::zeros(2 * n, d, c);
    const double inv_n = 1.0 / static_cast<double>(n);

    const bool implicit = isda.bank != nullptr && isda.lambda > 0.0;
    for (std::size_t view = 0; view < 2; ++view) {
        const std::size_t off = view * n;
        double value = 0.0;
        if (implicit) {
            Matrix feats(n, d);
            for (std::size_t r = 0; r < n; ++r) {
                const auto src = student.features().row(off + r);
                std::copy(src.begin(), src.end(), feats.row(r).begin());
            }
            const LossValue lv = isda_ce_loss(feats, student_params.classifier.weight, student_params.classifier.bias,
                                              labels, *isda.bank, isda.lambda);
            value = lv.value;
            for (std::size_t r = 0; r < n; ++r) {
                const auto src = lv.grad_features.row(r);
                std::copy(src.begin(), src.end(), parts.grads.features.row(off + r).begin());
            }
            kernels::axpy(1.0, lv.grad_W.data(), parts.grads.class_W.data());
            kernels::axpy(1.0, lv.grad_b, parts.grads.class_b);
        } else {
            for (std::size_t r = 0; r < n; ++r) {
                const CeResult ce = ce_loss(student.class_logits.row(off + r), labels[r]);
                value += ce.value;
                auto g = parts.grads.class_logits.row(off + r);
                for (std::size_t j = 0; j < c; ++j) g[j] = ce.grad[j] * inv_n;
            }
            value *= inv_n;
        }
        (view == 0 ? parts.cls_ori : parts.cls_aug) = value;
    }

    if (cfg.beta > 0.0) {
        // a2o: student on originals vs teacher on augmented; o2a the reverse.
        for (std::size_t r = 0; r < n; ++r) {
            const CotKl a2o = cot_kl(student.class_logits.row(r), teacher_logits.row(n + r), cfg.temperature);
            const CotKl o2a = cot_kl(student.class_logits.row(n + r), teacher_logits.row(r), cfg.temperature);
            parts.cot_a2o += a2o.value * inv_n;
            parts.cot_o2a += o2a.value * inv_n;
            kernels::axpy(cfg.beta * inv_n, a2o.grad, parts.grads.class_logits.row(r));
            kernels::axpy(cfg.beta * inv_n, o2a.grad, parts.grads.class_logits.row(n + r));
        }
    }
    return parts;
}

FactLossParts fact_loss(const Matrix& batch_ori, const Matrix& batch_aug, std::span<const std::size_t> labels,
                        const ModelParams& student, const TeacherState& teacher, const FactConfig& cfg) {
    if (batch_ori.rows() != batch_aug.rows() || batch_ori.rows() != labels.size())
        throw InvalidInput("fact_loss: batch size mismatch");
    const Matrix stacked = stack_rows(batch_ori, batch_aug);
    const ForwardTrace st = forward(student, stacked);
    Matrix teacher_logits;
    if (cfg.beta > 0.0) teacher_logits = forward(teacher.params, stacked).class_logits;
    return fact_loss(st, teacher_logits, labels, student, cfg);
}

}  // namespace isdml
