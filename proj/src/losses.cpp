#include "isdml/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "isdml/augment.hpp"
#include "isdml/errors.hpp"
#include "isdml/kernels.hpp"

namespace isdml {

CeResult ce_loss(std::span<const double> logits, std::size_t label) {
    if (label >= logits.size())
        throw InvalidInput("ce_loss: label " + std::to_string(label) + " out of range for " +
                           std::to_string(logits.size()) + " classes");
    CeResult out;
    out.grad = softmax(logits);
    out.value = log_sum_exp(logits) - logits[label];
    out.grad[label] -= 1.0;
    return out;
}

namespace {

void check_batch(const Matrix& features, const Matrix& weights, std::span<const double> bias,
                 std::span<const std::size_t> labels) {
    if (features.rows() != labels.size()) throw InvalidInput("batch loss: label count != feature rows");
    if (weights.cols() != features.cols() || weights.rows() != bias.size())
        throw InvalidInput("batch loss: head shape mismatch");
    for (std::size_t y : labels)
        if (y >= weights.rows()) throw InvalidInput("batch loss: label out of range");
}

// Augmentation terms for every class present in the batch. Empty when lambda == 0.
template <class SigmaFor>
std::map<std::size_t, AugmentationTerms> terms_for_batch(const Matrix& weights, std::span<const std::size_t> labels,
                                                         SigmaFor&& sigma_for, double lambda) {
    std::map<std::size_t, AugmentationTerms> terms;
    if (lambda == 0.0) return terms;
    for (std::size_t y : labels) {
        if (terms.contains(y)) continue;
        const Matrix& sigma = sigma_for(y);
        require_symmetric(sigma, weights.cols(), "implicit augmentation");
        terms.emplace(y, augmentation_terms(weights, sigma, y));
    }
    return terms;
}

// Row r: W f_r + b + (lambda / 2) quad(y_r).
Matrix augmented_batch_logits(const Matrix& features, const Matrix& weights, std::span<const double> bias,
                              std::span<const std::size_t> labels,
                              const std::map<std::size_t, AugmentationTerms>& terms, double lambda) {
    Matrix s = matmul_nt(features, weights);
    for (std::size_t r = 0; r < s.rows(); ++r) {
        auto row = s.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
        if (lambda == 0.0) continue;
        const AugmentationTerms& t = terms.at(labels[r]);
        for (std::size_t j = 0; j < row.size(); ++j)
            if (j != labels[r]) row[j] += 0.5 * lambda * t.quad[j];
    }
    return s;
}

// Pulls an upstream gradient on augmented logits back to features and head.
LossValue backprop_augmented(const Matrix& features, const Matrix& weights, std::span<const std::size_t> labels,
                             const std::map<std::size_t, AugmentationTerms>& terms, double lambda,
                             const Matrix& upstream, double value) {
    LossValue out;
    out.value = value;
    out.grad_features = matmul(upstream, weights);
    out.grad_W = matmul_tn(upstream, features);
    out.grad_b.assign(weights.rows(), 0.0);
    for (std::size_t r = 0; r < upstream.rows(); ++r)
        for (std::size_t j = 0; j < upstream.cols(); ++j) out.grad_b[j] += upstream(r, j);
    if (lambda == 0.0) return out;

    // d/dw_j of (lambda/2) v_j^T Sigma v_j = lambda Sigma v_j, and the negative
    // of that for the anchor row w_y.
    const std::size_t c = weights.rows();
    std::map<std::size_t, Vector> per_class;
    for (std::size_t r = 0; r < upstream.rows(); ++r) {
        auto [it, inserted] = per_class.try_emplace(labels[r], Vector(c, 0.0));
        for (std::size_t j = 0; j < c; ++j) it->second[j] += upstream(r, j);
    }
    for (const auto& [y, g] : per_class) {
        const AugmentationTerms& t = terms.at(y);
        for (std::size_t j = 0; j < c; ++j) {
            if (j == y || g[j] == 0.0) continue;
            kernels::axpy(lambda * g[j], t.sigma_v.row(j), out.grad_W.row(j));
            kernels::axpy(-lambda * g[j], t.sigma_v.row(j), out.grad_W.row(y));
        }
    }
    return out;
}

template <class SigmaFor>
LossValue isda_ce_core(const Matrix& features, const Matrix& weights, std::span<const double> bias,
                       std::span<const std::size_t> labels, SigmaFor&& sigma_for, double lambda) {
    check_batch(features, weights, bias, labels);
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidInput("isda_ce_loss: lambda must be finite and >= 0");
    const std::size_t n = features.rows();
    if (n == 0) throw InvalidInput("isda_ce_loss: empty batch");
    const auto terms = terms_for_batch(weights, labels, sigma_for, lambda);
    const Matrix logits = augmented_batch_logits(features, weights, bias, labels, terms, lambda);

    Matrix upstream(n, weights.rows());
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        const CeResult ce = ce_loss(logits.row(r), labels[r]);
        total += ce.value;
        auto g = upstream.row(r);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = ce.grad[j] * inv_n;
    }
    return backprop_augmented(features, weights, labels, terms, lambda, upstream, total * inv_n);
}

}  // namespace

LossValue isda_ce_loss(std::span<const double> f, const Matrix& weights, std::span<const double> bias,
                       std::size_t label, const Matrix& sigma, double lambda) {
    const Matrix features(1, f.size(), Vector(f.begin(), f.end()));
    const std::size_t labels[1] = {label};
    return isda_ce_core(features, weights, bias, labels, [&](std::size_t) -> const Matrix& { return sigma; }, lambda);
}

LossValue isda_ce_loss(const Matrix& features, const Matrix& weights, std::span<const double> bias,
                       std::span<const std::size_t> labels, const CovarianceBank& bank, double lambda) {
    return isda_ce_core(features, weights, bias, labels,
                        [&](std::size_t y) -> const Matrix& { return bank.lookup(y); }, lambda);
}

TripletResult triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                           std::span<const double> negative, TripletConfig cfg) {
    if (anchor.size() != positive.size() || anchor.size() != negative.size())
        throw InvalidInput("triplet_loss: shape mismatch");
    if (!std::isfinite(cfg.delta)) throw InvalidInput("triplet_loss: margin must be finite");
    const std::size_t d = anchor.size();
    TripletResult out{0.0, Vector(d, 0.0), Vector(d, 0.0), Vector(d, 0.0)};
    const double h = kernels::squared_distance(anchor, positive) - kernels::squared_distance(anchor, negative) + cfg.delta;
    if (h <= 0.0) return out;
    out.value = h;
    for (std::size_t k = 0; k < d; ++k) {
        out.grad_anchor[k] = 2.0 * (negative[k] - positive[k]);
        out.grad_positive[k] = -2.0 * (anchor[k] - positive[k]);
        out.grad_negative[k] = 2.0 * (anchor[k] - negative[k]);
    }
    return out;
}

PairSet PairSet::all_pairs(std::span<const std::size_t> labels, double margin) {
    PairSet p;
    p.labels.assign(labels.begin(), labels.end());
    p.margin = margin;
    for (std::size_t i = 0; i < labels.size(); ++i)
        for (std::size_t j = i + 1; j < labels.size(); ++j)
            if (labels[i] == labels[j]) p.positives.emplace_back(i, j);
    return p;
}

LiftedResult lifted_loss(const Matrix& embeddings, std::span<const std::size_t> labels, double margin) {
    const std::size_t n = embeddings.rows();
    if (labels.size() != n) throw InvalidInput("lifted_loss: label count != rows");
    if (n < 2) throw InvalidInput("lifted_loss: need at least two samples");
    if (!std::isfinite(margin)) throw InvalidInput("lifted_loss: margin must be finite");
    require_finite(embeddings.data(), "lifted_loss");

    LiftedResult out;
    out.grad = Matrix(n, embeddings.cols());

    Matrix dist(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = i + 1; k < n; ++k)
            dist(i, k) = dist(k, i) = std::sqrt(kernels::squared_distance(embeddings.row(i), embeddings.row(k)));

    // Per-anchor log-sum-exp over negatives and the matching softmax weights.
    std::vector<bool> has_neg(n, false);
    Vector lse(n, 0.0);
    Matrix weight(n, n);
    Vector scratch;
    for (std::size_t i = 0; i < n; ++i) {
        scratch.clear();
        for (std::size_t k = 0; k < n; ++k)
            if (labels[k] != labels[i]) scratch.push_back(margin - dist(i, k));
        if (scratch.empty()) continue;
        has_neg[i] = true;
        lse[i] = log_sum_exp(scratch);
        for (std::size_t k = 0; k < n; ++k)
            if (labels[k] != labels[i]) weight(i, k) = std::exp(margin - dist(i, k) - lse[i]);
    }

    struct Active {
        std::size_t i, j;
        double j_value;
    };
    std::vector<Active> active;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (labels[i] != labels[j] || !has_neg[i] || !has_neg[j]) continue;
            ++pairs;
            const double jv = dist(i, j) + lse[i] + lse[j];
            if (jv > 0.0) active.push_back({i, j, jv});
        }
    }
    out.pairs_used = pairs;
    if (pairs == 0) {
        out.no_positive_pairs = true;
        return out;
    }

    // dL/dJ = J / |P|; accumulate dL/dD for each unordered distance.
    const double inv_p = 1.0 / static_cast<double>(pairs);
    Matrix coef(n, n);
    Vector lse_weight(n, 0.0);
    double sum_sq = 0.0;
    for (const Active& a : active) {
        sum_sq += a.j_value * a.j_value;
        const double c = a.j_value * inv_p;
        coef(a.i, a.j) += c;
        lse_weight[a.i] += c;
        lse_weight[a.j] += c;
    }
    out.value = 0.5 * inv_p * sum_sq;

    for (std::size_t i = 0; i < n; ++i) {
        if (lse_weight[i] == 0.0) continue;
        for (std::size_t k = 0; k < n; ++k)
            if (labels[k] != labels[i]) coef(i, k) -= lse_weight[i] * weight(i, k);
    }

    constexpr double kDistFloor = 1e-12;
    Vector diff(embeddings.cols());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = i + 1; k < n; ++k) {
            const double t = coef(i, k) + coef(k, i);
            if (t == 0.0) continue;
            const double scale = t / std::max(dist(i, k), kDistFloor);
            auto si = embeddings.row(i);
            auto sk = embeddings.row(k);
            for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = si[c] - sk[c];
            kernels::axpy(scale, diff, out.grad.row(i));
            kernels::axpy(-scale, diff, out.grad.row(k));
        }
    }
    return out;
}

LossValue dml_on_augmented_logits(const Matrix& features, const Matrix& weights, std::span<const double> bias,
                                  std::span<const std::size_t> labels, const CovarianceBank& bank, double lambda,
                                  double margin) {
    check_batch(features, weights, bias, labels);
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw InvalidInput("dml_on_augmented_logits: lambda must be finite and >= 0");
    const auto terms =
        terms_for_batch(weights, labels, [&](std::size_t y) -> const Matrix& { return bank.lookup(y); }, lambda);
    const Matrix logits = augmented_batch_logits(features, weights, bias, labels, terms, lambda);
    const LiftedResult lifted = lifted_loss(logits, labels, margin);
    return backprop_augmented(features, weights, labels, terms, lambda, lifted.grad, lifted.value);
}

LossValue dml_on_features(const Matrix& features, std::span<const std::size_t> labels, double margin) {
    LiftedResult lifted = lifted_loss(features, labels, margin);
    LossValue out;
    out.value = lifted.value;
    out.grad_features = std::move(lifted.grad);
    return out;
}

BatchGradients BatchGradients::zeros(std::size_t n, std::size_t d, std::size_t classes) {
    return BatchGradients{Matrix(n, d),       Matrix(n, classes), Matrix(n, classes), Matrix(classes, d),
                          Vector(classes, 0.0), Matrix(classes, d), Vector(classes, 0.0)};
}

namespace {

void add_scaled(std::span<double> into, std::span<const double> from, double scale, const char* what) {
    if (from.empty()) return;
    if (into.size() != from.size()) throw InvalidInput(std::string("BatchGradients: shape mismatch in ") + what);
    kernels::axpy(scale, from, into);
}

}  // namespace

void BatchGradients::accumulate(const BatchGradients& other, double scale) {
    add_scaled(features.data(), other.features.data(), scale, "features");
    add_scaled(class_logits.data(), other.class_logits.data(), scale, "class_logits");
    add_scaled(dml_logits.data(), other.dml_logits.data(), scale, "dml_logits");
    add_scaled(class_W.data(), other.class_W.data(), scale, "class_W");
    add_scaled(class_b, other.class_b, scale, "class_b");
    add_scaled(dml_W.data(), other.dml_W.data(), scale, "dml_W");
    add_scaled(dml_b, other.dml_b, scale, "dml_b");
}

Objective total_objective(const FactLossParts& fact, const LossValue& dml, double alpha) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidInput("total_objective: alpha must be finite and >= 0");
    Objective out;
    out.fact = fact.total();
    out.dml = dml.value;
    out.value = out.fact + alpha * out.dml;
    out.grads = fact.grads;
    add_scaled(out.grads.features.data(), dml.grad_features.data(), alpha, "features");
    add_scaled(out.grads.dml_W.data(), dml.grad_W.data(), alpha, "dml_W");
    add_scaled(out.grads.dml_b, dml.grad_b, alpha, "dml_b");
    return out;
}

}  // namespace isdml
