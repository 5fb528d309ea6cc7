#include "isdml/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "isdml/errors.hpp"
#include "isdml/kernels.hpp"
#include "isdml/stats.hpp"

namespace isdml {

namespace {

void check_head(std::span<const double> f, const Matrix& weights, std::span<const double> bias) {
    if (weights.cols() != f.size() || weights.rows() != bias.size())
        throw InvalidInput("logits: shape mismatch (W " + std::to_string(weights.rows()) + "x" +
                           std::to_string(weights.cols()) + ", f " + std::to_string(f.size()) + ", b " +
                           std::to_string(bias.size()) + ")");
}

void check_lambda(double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("augmentation strength must be finite and >= 0");
}

}  // namespace

void require_symmetric(const Matrix& sigma, std::size_t d, const char* what) {
    if (sigma.rows() != d || sigma.cols() != d) throw InvalidInput(std::string(what) + ": covariance shape mismatch");
    require_finite(sigma.data(), what);
    const double tol = 1e-10 * std::max(1.0, max_abs(sigma));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j)
            if (std::abs(sigma(i, j) - sigma(j, i)) > tol)
                throw InvalidInput(std::string(what) + ": covariance is not symmetric");
}

AugmentationTerms augmentation_terms(const Matrix& weights, const Matrix& sigma, std::size_t anchor) {
    const std::size_t c = weights.rows();
    const std::size_t d = weights.cols();
    AugmentationTerms terms{Vector(c, 0.0), Matrix(c, d)};
    Vector v(d);
    const auto wy = weights.row(anchor);
    for (std::size_t j = 0; j < c; ++j) {
        if (j == anchor) continue;
        const auto wj = weights.row(j);
        for (std::size_t k = 0; k < d; ++k) v[k] = wj[k] - wy[k];
        auto sv = terms.sigma_v.row(j);
        for (std::size_t k = 0; k < d; ++k) sv[k] = kernels::dot(sigma.row(k), v);
        terms.quad[j] = kernels::dot(v, sv);
    }
    return terms;
}

Vector plain_logits(std::span<const double> f, const Matrix& weights, std::span<const double> bias) {
    check_head(f, weights, bias);
    Vector s = matvec(weights, f);
    for (std::size_t j = 0; j < s.size(); ++j) s[j] += bias[j];
    return s;
}

AugmentedLogits augmented_logits(std::span<const double> f, const Matrix& weights, std::span<const double> bias,
                                 const Matrix& sigma, std::size_t anchor, double lambda) {
    check_head(f, weights, bias);
    check_lambda(lambda);
    if (anchor >= weights.rows()) throw InvalidInput("augmented_logits: anchor class out of range");
    require_symmetric(sigma, f.size(), "augmented_logits");

    AugmentedLogits out{plain_logits(f, weights, bias), anchor, lambda};
    if (lambda == 0.0) return out;
    const AugmentationTerms terms = augmentation_terms(weights, sigma, anchor);
    for (std::size_t j = 0; j < out.values.size(); ++j)
        if (j != anchor) out.values[j] += 0.5 * lambda * terms.quad[j];
    return out;
}

Matrix sample_features(std::span<const double> f, const Matrix& sigma, double lambda, std::size_t m,
                       std::uint64_t seed) {
    check_lambda(lambda);
    if (m == 0) throw InvalidInput("sample_features: need at least one sample");
    const std::size_t d = f.size();
    require_symmetric(sigma, d, "sample_features");

    Matrix out(m, d);
    for (std::size_t r = 0; r < m; ++r) std::copy(f.begin(), f.end(), out.row(r).begin());
    if (lambda == 0.0) return out;

    Matrix ridged = sigma;
    const double ridge = default_ridge(sigma);
    for (std::size_t i = 0; i < d; ++i) ridged(i, i) += ridge;
    const Matrix chol = cholesky(ridged);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = std::sqrt(lambda);
    Vector z(d);
    for (std::size_t r = 0; r < m; ++r) {
        for (double& x : z) x = normal(rng);
        auto row = out.row(r);
        for (std::size_t i = 0; i < d; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k <= i; ++k) acc += chol(i, k) * z[k];
            row[i] += scale * acc;
        }
    }
    return out;
}

McEstimate mc_ce_estimate(std::span<const double> f, const Matrix& weights, std::span<const double> bias,
                          const Matrix& sigma, std::size_t anchor, double lambda, std::size_t m, std::uint64_t seed) {
    check_head(f, weights, bias);
    if (anchor >= weights.rows()) throw InvalidInput("mc_ce_estimate: anchor class out of range");
    const Matrix samples = sample_features(f, sigma, lambda, m, seed);

    // Welford: identical samples give a bit-exact mean.
    McEstimate est;
    double m2 = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        const Vector s = plain_logits(samples.row(r), weights, bias);
        const double ce = log_sum_exp(s) - s[anchor];
        ++est.samples;
        const double delta = ce - est.mean;
        est.mean += delta / static_cast<double>(est.samples);
        m2 += delta * (ce - est.mean);
    }
    if (m > 1) est.std_error = std::sqrt(m2 / static_cast<double>(m - 1) / static_cast<double>(m));
    return est;
}

}  // namespace isdml
