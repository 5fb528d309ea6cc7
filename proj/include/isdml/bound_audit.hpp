#pragma once

// Empirical check of the logit-distance sandwich: for features f_i, f_j with
// norm at most c and bias-free logits s = W f,
//
//   |s_i - s_j|^2 - 4c^2 r  <=  |f_i - f_j|^2  <=  |s_i - s_j|^2 + 4c^2 r,
//
// where r = || U U^T - W^T W ||_2 and U spans the feature matrix [f_1 ... f_N].

#include <cstddef>
#include <functional>
#include <span>

#include "isdml/linalg.hpp"

namespace isdml {

struct BoundReport {
    std::size_t i = 0, j = 0;
    double feat_dist_sq = 0.0;
    double logit_dist_sq = 0.0;
    double residual = 0.0;
    double c = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool satisfied = false;
};

inline constexpr double kBoundTolerance = 1e-9;

// features: d x N, one feature per column. weights: C x d.
double residual(const Matrix& features, const Matrix& weights);

// Throws InvalidInput if either feature norm exceeds c.
BoundReport audit_pair(std::span<const double> fi, std::span<const double> fj, const Matrix& weights,
                       double residual_norm, double c);

struct AuditSummary {
    double fraction_satisfied = 0.0;
    double mean_slack = 0.0;  // mean of min(feat - lower, upper - feat)
    double residual = 0.0;
    double c = 0.0;
    std::size_t pairs = 0;
    std::size_t violations = 0;
};

// features: n x d, one feature per row; c is the largest row norm. Every
// pair report is passed to `sink` when given.
AuditSummary audit_dataset(const Matrix& features, const Matrix& weights,
                           const std::function<void(const BoundReport&)>& sink = {});

}  // namespace isdml
