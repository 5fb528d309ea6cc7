#pragma once

// Loss functions with analytic gradients. Batch losses are means over rows;
// their gradients already include the 1/n factor.

#include <cstddef>
#include <utility>
#include <vector>

#include "isdml/linalg.hpp"
#include "isdml/stats.hpp"

namespace isdml {

// Value plus gradients w.r.t. input features (n x d) and one affine head (W, b).
// grad_W / grad_b are empty when the loss does not touch a head.
struct LossValue {
    double value = 0.0;
    Matrix grad_features;
    Matrix grad_W;
    Vector grad_b;
};

struct CeResult {
    double value = 0.0;
    Vector grad;  // softmax - onehot
};

CeResult ce_loss(std::span<const double> logits, std::size_t label);

// Cross-entropy on the implicitly augmented logits of a single sample.
LossValue isda_ce_loss(std::span<const double> f, const Matrix& weights, std::span<const double> bias,
                       std::size_t label, const Matrix& sigma, double lambda);

// Mean over rows; row r uses bank.lookup(labels[r]).
LossValue isda_ce_loss(const Matrix& features, const Matrix& weights, std::span<const double> bias,
                       std::span<const std::size_t> labels, const CovarianceBank& bank, double lambda);

struct TripletConfig {
    double delta = 1.0;
};

struct TripletResult {
    double value = 0.0;
    Vector grad_anchor;
    Vector grad_positive;
    Vector grad_negative;
};

// [|a - p|^2 - |a - n|^2 + delta]_+
TripletResult triplet_loss(std::span<const double> anchor, std::span<const double> positive,
                           std::span<const double> negative, TripletConfig cfg);

// All same-label pairs (i < j) of a batch.
struct PairSet {
    std::vector<std::pair<std::size_t, std::size_t>> positives;
    std::vector<std::size_t> labels;
    double margin = 1.0;

    static PairSet all_pairs(std::span<const std::size_t> labels, double margin);
};

struct LiftedResult {
    double value = 0.0;
    Matrix grad;                  // n x k, gradient w.r.t. the embedding rows
    std::size_t pairs_used = 0;   // positive pairs that had at least one negative
    bool no_positive_pairs = false;
};

// Lifted structure loss over all positive pairs of the batch:
//   J_ij = [ D_ij + log sum_{k neg i} exp(m - D_ik) + log sum_{l neg j} exp(m - D_jl) ]_+
//   L    = 1 / (2 |P|) * sum J_ij^2
// with unsquared Euclidean distances D. Pairs whose class covers the whole
// batch (no negatives) are skipped and not counted in |P|.
LiftedResult lifted_loss(const Matrix& embeddings, std::span<const std::size_t> labels, double margin);

// Lifted loss on the implicitly augmented logits of head (W, b); gradients
// flow into the features and the head.
LossValue dml_on_augmented_logits(const Matrix& features, const Matrix& weights, std::span<const double> bias,
                                  std::span<const std::size_t> labels, const CovarianceBank& bank, double lambda,
                                  double margin);

// Lifted loss directly on the features (the "DML on features" ablation).
LossValue dml_on_features(const Matrix& features, std::span<const std::size_t> labels, double margin);

// Gradients of a scalar objective w.r.t. everything a model forward exposes
// for one stacked batch: the shared features, both logit blocks, and direct
// contributions to the two heads.
struct BatchGradients {
    Matrix features;      // n x d
    Matrix class_logits;  // n x C
    Matrix dml_logits;    // n x C
    Matrix class_W;
    Vector class_b;
    Matrix dml_W;
    Vector dml_b;

    static BatchGradients zeros(std::size_t n, std::size_t d, std::size_t classes);
    // this += scale * other
    void accumulate(const BatchGradients& other, double scale = 1.0);
};

struct FactLossParts {
    double cls_ori = 0.0;
    double cls_aug = 0.0;
    double cot_a2o = 0.0;
    double cot_o2a = 0.0;
    double beta = 0.0;
    BatchGradients grads;

    double total() const { return cls_ori + cls_aug + beta * (cot_a2o + cot_o2a); }
};

struct Objective {
    double value = 0.0;
    double fact = 0.0;
    double dml = 0.0;
    BatchGradients grads;
};

// L_FACT + alpha * L_DML. A DML loss with a non-empty grad_W is attributed to
// the DML head.
Objective total_objective(const FactLossParts& fact, const LossValue& dml, double alpha);

}  // namespace isdml
