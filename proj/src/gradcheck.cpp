#include "isdml/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "isdml/augment.hpp"
#include "isdml/config.hpp"
#include "isdml/fourier_fact.hpp"
#include "isdml/losses.hpp"
#include "isdml/model.hpp"
#include "isdml/stats.hpp"
#include "isdml/trainer.hpp"

namespace isdml {

namespace {

using Objective1 = std::function<double(const Vector&)>;

struct FdOutcome {
    double rel_error = 0.0;
    bool kink = false;
};

// ||analytic - numeric|| / max(||analytic|| + ||numeric||, 1e-12). A coordinate
// whose one-sided slopes disagree marks the instance as sitting on a kink.
FdOutcome compare(const Objective1& f, std::span<const double> x0, std::span<const double> analytic) {
    Vector x(x0.begin(), x0.end());
    Vector numeric(x.size());
    FdOutcome out;
    const double f0 = f(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double xi = x[i];
        const double h = 1e-5 * std::max(1.0, std::abs(xi));
        x[i] = xi + h;
        const double fp = f(x);
        x[i] = xi - h;
        const double fm = f(x);
        x[i] = xi;
        numeric[i] = (fp - fm) / (2 * h);
        const double right = (fp - f0) / h, left = (f0 - fm) / h;
        if (std::abs(right - left) > 1e-3 * (std::abs(right) + std::abs(left)) + 1e-4) out.kink = true;
    }
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    out.rel_error = std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-12);
    return out;
}

void record(GradcheckEntry& e, const FdOutcome& r) {
    if (r.kink) {
        ++e.skipped;
        return;
    }
    ++e.instances;
    e.max_rel_error = std::max(e.max_rel_error, r.rel_error);
}

Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    Matrix m(r, c);
    for (auto& v : m.data()) v = g(rng);
    return m;
}

Vector random_vector(std::mt19937_64& rng, std::size_t n, double scale) {
    const Matrix m = random_matrix(rng, 1, n, scale);
    return Vector(m.data().begin(), m.data().end());
}

Matrix random_spd(std::mt19937_64& rng, std::size_t d) {
    const Matrix a = random_matrix(rng, d, d, 1.0);
    Matrix s = matmul_nt(a, a);
    for (auto& v : s.data()) v /= static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) s(j, i) = s(i, j);
    return s;
}

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Vector concat(std::initializer_list<std::span<const double>> parts) {
    Vector out;
    for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

// Unpacks x into (f, W, b) with f of length d and W of shape C x d.
void unpack(const Vector& x, std::size_t d, std::size_t classes, Vector& f, Matrix& w, Vector& b) {
    f.assign(x.begin(), x.begin() + d);
    w = Matrix(classes, d);
    std::copy(x.begin() + d, x.begin() + d + classes * d, w.data().begin());
    b.assign(x.begin() + d + classes * d, x.end());
}

}  // namespace

std::vector<GradcheckEntry> run_gradcheck(std::uint64_t seed, std::size_t instances) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    GradcheckEntry ce{"cross_entropy", 0, 0, 0, 1e-6};
    GradcheckEntry isda{"isda_cross_entropy", 0, 0, 0, 1e-6};
    GradcheckEntry triplet{"triplet", 0, 0, 0, 1e-6};
    GradcheckEntry lifted{"lifted_structure", 0, 0, 0, 1e-6};
    GradcheckEntry cot{"cot_kl", 0, 0, 0, 1e-6};
    GradcheckEntry full{"full_objective", 0, 0, 0, 1e-5};

    for (std::size_t it = 0; it < instances; ++it) {
        {
            const std::size_t c = draw(rng, 2, 8);
            const Vector z = random_vector(rng, c, 3.0);
            const std::size_t y = draw(rng, 0, c - 1);
            record(ce, compare([&](const Vector& x) { return ce_loss(x, y).value; }, z, ce_loss(z, y).grad));
        }
        {
            const std::size_t d = draw(rng, 2, 8), c = draw(rng, 2, 6), y = draw(rng, 0, c - 1);
            const Vector f = random_vector(rng, d, 1.0), b = random_vector(rng, c, 0.5);
            const Matrix w = random_matrix(rng, c, d, 1.0), sigma = random_spd(rng, d);
            const double lambda = 2.0 * unit(rng);
            const LossValue lv = isda_ce_loss(f, w, b, y, sigma, lambda);
            auto obj = [&](const Vector& x) {
                Vector ff, bb;
                Matrix ww;
                unpack(x, d, c, ff, ww, bb);
                return isda_ce_loss(ff, ww, bb, y, sigma, lambda).value;
            };
            record(isda, compare(obj, concat({f, w.data(), b}), concat({lv.grad_features.data(), lv.grad_W.data(), lv.grad_b})));
        }
        {
            const std::size_t d = draw(rng, 2, 8);
            const Vector a = random_vector(rng, d, 1.0), p = random_vector(rng, d, 1.0), n = random_vector(rng, d, 1.0);
            const TripletConfig tc{0.5 + unit(rng)};
            const TripletResult tr = triplet_loss(a, p, n, tc);
            auto obj = [&](const Vector& x) {
                const std::span<const double> s(x);
                return triplet_loss(s.subspan(0, d), s.subspan(d, d), s.subspan(2 * d, d), tc).value;
            };
            record(triplet, compare(obj, concat({a, p, n}), concat({tr.grad_anchor, tr.grad_positive, tr.grad_negative})));
        }
        {
            const std::size_t n = draw(rng, 4, 10), k = draw(rng, 2, 6), c = draw(rng, 2, 3);
            std::vector<std::size_t> labels(n);
            for (std::size_t i = 0; i < n; ++i) labels[i] = i % c;
            const Matrix e = random_matrix(rng, n, k, 1.0);
            const double margin = 0.5 + unit(rng);
            auto obj = [&](const Vector& x) {
                Matrix m(n, k);
                std::copy(x.begin(), x.end(), m.data().begin());
                return lifted_loss(m, labels, margin).value;
            };
            record(lifted, compare(obj, e.data(), lifted_loss(e, labels, margin).grad.data()));
        }
        {
            const std::size_t c = draw(rng, 2, 8);
            const Vector s = random_vector(rng, c, 2.0), t = random_vector(rng, c, 2.0);
            const double temp = 1.0 + 4.0 * unit(rng);
            record(cot, compare([&](const Vector& x) { return cot_kl(x, t, temp).value; }, s, cot_kl(s, t, temp).grad));
        }
        {
            const std::size_t in = 6, classes = 3, n = 4;
            const std::vector<std::size_t> widths{in, 7, 5};
            const ModelParams params = init_model(rng(), widths, classes);
            Matrix stacked = random_matrix(rng, 2 * n, in, 1.0);
            std::vector<std::size_t> labels(n);
            for (std::size_t i = 0; i < n; ++i) labels[i] = i % classes;
            const Matrix teacher = random_matrix(rng, 2 * n, classes, 1.0);
            std::vector<ClassStats> st;
            for (std::size_t c = 0; c < classes; ++c) {
                ClassStats s = ClassStats::empty(c, widths.back());
                s.count = 1;
                s.cov = random_spd(rng, widths.back());
                st.push_back(s);
            }
            const CovarianceBank bank = snapshot_all(st);
            TrainConfig cfg;
            cfg.alpha = 0.5 + unit(rng);
            cfg.fact.beta = 2.0 * unit(rng);
            cfg.dml_input = it % 2 ? DmlInput::features : DmlInput::logits;
            const double lambda = 2.0 * unit(rng);

            auto unflatten = [&](const Vector& x) {
                ModelParams p = params;
                std::size_t off = 0;
                for (auto t : p.tensors()) {
                    std::copy(x.begin() + off, x.begin() + off + t.size(), t.begin());
                    off += t.size();
                }
                return p;
            };
            auto flatten = [](const ModelParams& p) {
                Vector out;
                for (auto t : p.tensors()) out.insert(out.end(), t.begin(), t.end());
                return out;
            };
            auto obj = [&](const Vector& x) {
                const ModelParams p = unflatten(x);
                return step_loss(p, forward(p, stacked), labels, teacher, bank, lambda, cfg).objective.value;
            };
            const StepLoss sl = step_loss(params, forward(params, stacked), labels, teacher, bank, lambda, cfg);
            record(full, compare(obj, flatten(params), flatten(sl.grads)));
        }
    }
    return {ce, isda, triplet, lifted, cot, full};
}

}  // namespace isdml
