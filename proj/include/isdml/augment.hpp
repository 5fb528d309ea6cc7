#pragma once

// Semantic augmentation in feature space.
//
// Implicit form: translating feature f by Gaussian noise N(0, lambda * Sigma_y)
// and bounding the expected cross-entropy gives closed-form logits where every
// non-anchor class j gets an extra (lambda / 2) * v^T Sigma_y v, v = w_j - w_y.
// Explicit form: draw the translated features and average (Monte-Carlo).

#include <cstddef>
#include <cstdint>

#include "isdml/linalg.hpp"

namespace isdml {

struct AugmentedLogits {
    Vector values;
    std::size_t anchor_class = 0;
    double lambda = 0.0;
};

// Per-anchor-class quantities shared by every sample of that class:
// quad[j] = v_j^T Sigma v_j and row j of sigma_v = Sigma v_j, with
// v_j = w_j - w_anchor (both zero for j == anchor).
struct AugmentationTerms {
    Vector quad;     // C
    Matrix sigma_v;  // C x d
};

AugmentationTerms augmentation_terms(const Matrix& weights, const Matrix& sigma, std::size_t anchor);

Vector plain_logits(std::span<const double> f, const Matrix& weights, std::span<const double> bias);

AugmentedLogits augmented_logits(std::span<const double> f, const Matrix& weights, std::span<const double> bias,
                                 const Matrix& sigma, std::size_t anchor, double lambda);

// m rows drawn i.i.d. from N(f, lambda * (Sigma + ridge I)) with the default ridge.
Matrix sample_features(std::span<const double> f, const Matrix& sigma, double lambda, std::size_t m,
                       std::uint64_t seed);

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;  // sample std / sqrt(m)
    std::size_t samples = 0;
};

// Average cross-entropy over m explicitly augmented copies of f.
McEstimate mc_ce_estimate(std::span<const double> f, const Matrix& weights, std::span<const double> bias,
                          const Matrix& sigma, std::size_t anchor, double lambda, std::size_t m, std::uint64_t seed);

// Throws InvalidInput unless sigma is square d x d and symmetric to 1e-10 (relative).
void require_symmetric(const Matrix& sigma, std::size_t d, const char* what);

}  // namespace isdml
