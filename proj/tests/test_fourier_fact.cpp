#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "isdml/errors.hpp"
#include "isdml/fourier_fact.hpp"
#include "support/oracles.hpp"

using namespace isdml;

namespace {

Image random_image(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image img(h, w, c);
    for (auto& p : img.pixels) p = u(rng);
    return img;
}

// 0.5 + a cos(2 pi (ky y / h + kx x / w) + phase), always inside [0, 1] for a <= 0.5.
Image sinusoid(std::size_t h, std::size_t w, std::size_t ky, std::size_t kx, double a, double phase) {
    Image img(h, w, 1);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            img.at(0, y, x) = 0.5 + a * std::cos(2 * std::numbers::pi *
                                                     (static_cast<double>(ky * y) / static_cast<double>(h) +
                                                      static_cast<double>(kx * x) / static_cast<double>(w)) +
                                                 phase);
    return img;
}

}  // namespace

TEST_CASE("fft2 matches a naive DFT") {
    std::mt19937_64 rng(1);
    for (auto [h, w] : {std::pair<std::size_t, std::size_t>{4, 4}, {5, 3}, {8, 6}}) {
        const Image img = random_image(rng, h, w, 2);
        for (std::size_t c = 0; c < 2; ++c) {
            const auto fast = fft2(img, c);
            const auto slow = oracle::naive_dft2(img.plane(c), h, w);
            for (std::size_t i = 0; i < fast.size(); ++i) CHECK(std::abs(fast[i] - slow[i]) < 1e-10);
        }
    }
}

TEST_CASE("amplitude_mix identities") {
    std::mt19937_64 rng(2);
    const Image a = random_image(rng, 16, 12, 3), b = random_image(rng, 16, 12, 3);
    CHECK(oracle::max_abs_diff(amplitude_mix(a, b, 0.0).pixels, a.pixels) < 1e-6);
    for (double eta : {0.1, 0.5, 1.0}) CHECK(oracle::max_abs_diff(amplitude_mix(a, a, eta).pixels, a.pixels) < 1e-6);
    const Image m = amplitude_mix(a, b, 0.6);
    CHECK(m.same_shape(a));
    for (double p : m.pixels) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
}

TEST_CASE("amplitude_mix of two sinusoids has the convex mix of their spectra") {
    const std::size_t h = 16, w = 16;
    const Image x1 = sinusoid(h, w, 2, 3, 0.2, 0.7), x2 = sinusoid(h, w, 5, 1, 0.25, -1.1);
    for (double eta : {0.0, 0.25, 0.5, 0.9, 1.0}) {
        const Image out = amplitude_mix(x1, x2, eta);
        const auto s1 = oracle::naive_dft2(x1.plane(0), h, w), s2 = oracle::naive_dft2(x2.plane(0), h, w);
        const auto so = oracle::naive_dft2(out.plane(0), h, w);
        for (std::size_t i = 0; i < so.size(); ++i) {
            const double expect = (1 - eta) * std::abs(s1[i]) + eta * std::abs(s2[i]);
            CHECK(std::abs(std::abs(so[i]) - expect) < 1e-6);
            // Phase of x1 wherever both the mix and x1 carry energy.
            if (expect > 1e-6 && std::abs(s1[i]) > 1e-6) CHECK(std::abs(std::arg(so[i] / s1[i])) < 1e-6);
        }
    }
}

TEST_CASE("amplitude_mix keeps the phase of x1 on random images where nothing clips") {
    std::mt19937_64 rng(3);
    // Low-contrast images around 0.5 so the mixed image stays inside [0, 1].
    Image a(8, 8, 1), b(8, 8, 1);
    std::uniform_real_distribution<double> u(0.4, 0.6);
    for (auto& p : a.pixels) p = u(rng);
    for (auto& p : b.pixels) p = u(rng);
    const Image m = amplitude_mix(a, b, 0.4);
    const auto sa = fft2(a, 0), sb = fft2(b, 0), sm = fft2(m, 0);
    for (std::size_t i = 0; i < sm.size(); ++i) {
        CHECK(std::abs(std::abs(sm[i]) - (0.6 * std::abs(sa[i]) + 0.4 * std::abs(sb[i]))) < 1e-6);
        if (std::abs(sm[i]) > 1e-6) CHECK(std::abs(std::arg(sm[i] / sa[i])) < 1e-6);
    }
}

TEST_CASE("amplitude_mix input validation") {
    const Image a(4, 4, 1), b(4, 5, 1);
    CHECK_THROWS_AS(amplitude_mix(a, b, 0.5), InvalidInput);
    CHECK_THROWS_AS(amplitude_mix(a, a, 1.5), InvalidInput);
    CHECK_THROWS_AS(amplitude_mix(a, a, -0.1), InvalidInput);
}

TEST_CASE("ema_update") {
    const std::vector<std::size_t> widths{4, 3};
    const ModelParams s = init_model(1, widths, 2), t = init_model(2, widths, 2);
    CHECK(ema_update({t, 0.0}, s).params == s);
    CHECK(ema_update({t, 1.0}, s).params == t);
    const TeacherState half = ema_update({t, 0.5}, s);
    const auto hs = half.params.tensors(), ss = s.tensors(), ts = t.tensors();
    for (std::size_t k = 0; k < hs.size(); ++k)
        for (std::size_t i = 0; i < hs[k].size(); ++i) CHECK(std::abs(hs[k][i] - 0.5 * (ss[k][i] + ts[k][i])) < 1e-12);

    // Contraction toward the student, elementwise.
    const TeacherState c = ema_update({t, 0.9}, s);
    const auto cs = c.params.tensors();
    for (std::size_t k = 0; k < cs.size(); ++k)
        for (std::size_t i = 0; i < cs[k].size(); ++i)
            CHECK(std::abs(cs[k][i] - ss[k][i]) <= 0.9 * std::abs(ts[k][i] - ss[k][i]) + 1e-15);

    const std::vector<std::size_t> other{4, 5};
    CHECK_THROWS_AS(ema_update({init_model(1, other, 2), 0.5}, s), InvalidInput);
}

TEST_CASE("cot_kl values") {
    CHECK(cot_kl(Vector{0.3, -1, 2}, Vector{0.3, -1, 2}, 4.0).value == doctest::Approx(0.0).epsilon(1e-300));
    const CotKl hand = cot_kl(Vector{0, 0}, Vector{std::log(1.0), std::log(3.0)}, 1.0);
    CHECK(hand.value == doctest::Approx(0.25 * std::log(0.5) + 0.75 * std::log(1.5)).epsilon(1e-14));
    CHECK(hand.value == doctest::Approx(0.130812).epsilon(1e-6));
    // Temperature scaling: T^2 KL on the softened distributions.
    const CotKl t2 = cot_kl(Vector{0, 0}, Vector{0, 2 * std::log(3.0)}, 2.0);
    CHECK(t2.value == doctest::Approx(4 * hand.value).epsilon(1e-13));
}

TEST_CASE("cot_kl is non-negative and its gradient matches finite differences") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> temp(0.5, 5.0);
    for (int t = 0; t < 100; ++t) {
        const std::size_t c = 2 + t % 7;
        const Vector s = oracle::random_vector(rng, c, 2.0), te = oracle::random_vector(rng, c, 2.0);
        const double T = temp(rng);
        auto obj = [&](const Vector& x) {
            Vector ps(c), pt(c);
            const double ls = [&] {
                Vector y(c);
                for (std::size_t j = 0; j < c; ++j) y[j] = x[j] / T;
                return oracle::naive_log_sum_exp(y);
            }();
            const double lt = [&] {
                Vector y(c);
                for (std::size_t j = 0; j < c; ++j) y[j] = te[j] / T;
                return oracle::naive_log_sum_exp(y);
            }();
            double kl = 0;
            for (std::size_t j = 0; j < c; ++j) {
                const double log_pt = te[j] / T - lt, log_ps = x[j] / T - ls;
                kl += std::exp(log_pt) * (log_pt - log_ps);
            }
            return T * T * kl;
        };
        const CotKl r = cot_kl(s, te, T);
        CHECK(r.value >= 0.0);
        CHECK(std::abs(r.value - obj(s)) < 1e-12);
        CHECK(oracle::max_abs_diff(r.grad, oracle::numeric_gradient(obj, s)) < 1e-7);
    }
}

TEST_CASE("fact_loss composition") {
    std::mt19937_64 rng(5);
    const std::vector<std::size_t> widths{6, 5};
    const ModelParams student = init_model(3, widths, 3);
    const std::size_t n = 4;
    const Matrix ori = oracle::random_matrix(rng, n, 6), aug = oracle::random_matrix(rng, n, 6);
    const std::vector<std::size_t> labels{0, 1, 2, 1};

    FactConfig cfg;
    cfg.beta = 0.0;
    const FactLossParts no_cot = fact_loss(ori, aug, labels, student, {student, 0.9}, cfg);
    CHECK(no_cot.total() == no_cot.cls_ori + no_cot.cls_aug);
    CHECK(no_cot.cot_a2o == 0.0);

    // Plain CE means on each view.
    const ForwardTrace to = forward(student, ori), ta = forward(student, aug);
    double ce_o = 0, ce_a = 0;
    for (std::size_t r = 0; r < n; ++r) {
        ce_o += oracle::naive_ce(to.class_logits.row(r), labels[r]) / n;
        ce_a += oracle::naive_ce(ta.class_logits.row(r), labels[r]) / n;
    }
    CHECK(std::abs(no_cot.cls_ori - ce_o) < 1e-12);
    CHECK(std::abs(no_cot.cls_aug - ce_a) < 1e-12);

    // Teacher = student, T = 1, aug = ori: both co-teaching terms vanish.
    cfg.beta = 2.0;
    cfg.temperature = 1.0;
    const FactLossParts self = fact_loss(ori, ori, labels, student, {student, 0.9}, cfg);
    CHECK(std::abs(self.cot_a2o) < 1e-15);
    CHECK(std::abs(self.cot_o2a) < 1e-15);

    // Direction: a2o pairs the student on originals with the teacher on augmented rows.
    const ModelParams teacher = init_model(4, widths, 3);
    cfg.temperature = 4.0;
    const FactLossParts parts = fact_loss(ori, aug, labels, student, {teacher, 0.9}, cfg);
    const ForwardTrace teach_o = forward(teacher, ori), teach_a = forward(teacher, aug);
    double a2o = 0, o2a = 0;
    for (std::size_t r = 0; r < n; ++r) {
        a2o += cot_kl(to.class_logits.row(r), teach_a.class_logits.row(r), 4.0).value / n;
        o2a += cot_kl(ta.class_logits.row(r), teach_o.class_logits.row(r), 4.0).value / n;
    }
    CHECK(std::abs(parts.cot_a2o - a2o) < 1e-12);
    CHECK(std::abs(parts.cot_o2a - o2a) < 1e-12);
    CHECK(parts.total() >= 0.0);
    CHECK(std::abs(parts.total() - (ce_o + ce_a + 2.0 * (a2o + o2a))) < 1e-12);

    CHECK_THROWS_AS(fact_loss(ori, aug, std::vector<std::size_t>{0, 1}, student, {teacher, 0.9}, cfg), InvalidInput);
}

TEST_CASE("fact_loss logit gradients match finite differences") {
    std::mt19937_64 rng(6);
    const std::size_t n = 3, c = 4, d = 5;
    const std::vector<std::size_t> widths{6, d};
    const ModelParams student = init_model(5, widths, c);
    const Matrix stacked = oracle::random_matrix(rng, 2 * n, 6);
    ForwardTrace trace = forward(student, stacked);
    const Matrix teacher = oracle::random_matrix(rng, 2 * n, c);
    const std::vector<std::size_t> labels{2, 0, 3};
    FactConfig cfg;
    cfg.temperature = 3.0;
    const FactLossParts parts = fact_loss(trace, teacher, labels, student, cfg);
    auto obj = [&](const Vector& x) {
        ForwardTrace t = trace;
        t.class_logits = Matrix(2 * n, c, x);
        return fact_loss(t, teacher, labels, student, cfg).total();
    };
    const Vector x(trace.class_logits.data().begin(), trace.class_logits.data().end());
    CHECK(oracle::relative_error(parts.grads.class_logits.data(), oracle::numeric_gradient(obj, x)) < 1e-6);
}

TEST_CASE("fact_loss with implicit augmentation at lambda 0 equals the plain path") {
    std::mt19937_64 rng(7);
    const std::vector<std::size_t> widths{6, 5};
    const ModelParams student = init_model(5, widths, 3);
    const ForwardTrace trace = forward(student, oracle::random_matrix(rng, 4, 6));
    const std::vector<std::size_t> labels{0, 2};
    FactConfig cfg;
    cfg.beta = 0.0;
    std::vector<ClassStats> st;
    for (std::size_t k = 0; k < 3; ++k) st.push_back(update(ClassStats::empty(k, 5), oracle::random_matrix(rng, 6, 5)));
    const CovarianceBank bank = snapshot_all(st);
    const FactLossParts plain = fact_loss(trace, Matrix{}, labels, student, cfg);
    const FactLossParts lambda0 = fact_loss(trace, Matrix{}, labels, student, cfg, {&bank, 0.0});
    CHECK(plain.total() == lambda0.total());
    // Positive lambda: each CE term can only grow (the bound is above the plain CE).
    const FactLossParts aug = fact_loss(trace, Matrix{}, labels, student, cfg, {&bank, 1.0});
    CHECK(aug.cls_ori >= plain.cls_ori);
    CHECK(aug.cls_aug >= plain.cls_aug);
}

TEST_CASE("stack_rows") {
    const Matrix a(1, 2, Vector{1, 2}), b(1, 2, Vector{3, 4});
    CHECK(stack_rows(a, b) == Matrix(2, 2, Vector{1, 2, 3, 4}));
    CHECK_THROWS_AS(stack_rows(a, Matrix(1, 3)), InvalidInput);
}
