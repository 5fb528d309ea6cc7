#include "isdml/bound_audit.hpp"

#include <algorithm>
#include <cmath>

#include "isdml/errors.hpp"
#include "isdml/kernels.hpp"

namespace isdml {

double residual(const Matrix& features, const Matrix& weights) {
    if (features.cols() == 0) throw InvalidInput("residual: need at least one feature column");
    if (weights.cols() != features.rows()) throw InvalidInput("residual: W width != feature dimension");
    const std::size_t d = features.rows();

    const Svd svd = thin_svd(features);
    const double smax = svd.sigma.empty() ? 0.0 : svd.sigma.front();
    Matrix proj(d, d);
    for (std::size_t k = 0; k < svd.sigma.size(); ++k) {
        if (!(svd.sigma[k] > 1e-12 * smax)) break;
        for (std::size_t a = 0; a < d; ++a) {
            const double ua = svd.u(a, k);
            for (std::size_t b = 0; b < d; ++b) proj(a, b) += ua * svd.u(b, k);
        }
    }
    const Matrix gram = matmul_tn(weights, weights);
    return spectral_norm(proj - gram);
}

namespace {

BoundReport make_report(double feat_dist_sq, double logit_dist_sq, double residual_norm, double c) {
    BoundReport rep;
    rep.residual = residual_norm;
    rep.c = c;
    rep.feat_dist_sq = feat_dist_sq;
    rep.logit_dist_sq = logit_dist_sq;
    const double width = 4.0 * c * c * residual_norm;
    rep.lower = logit_dist_sq - width;
    rep.upper = logit_dist_sq + width;
    rep.satisfied = rep.lower - kBoundTolerance <= feat_dist_sq && feat_dist_sq <= rep.upper + kBoundTolerance;
    return rep;
}

}  // namespace

BoundReport audit_pair(std::span<const double> fi, std::span<const double> fj, const Matrix& weights,
                       double residual_norm, double c) {
    if (fi.size() != fj.size() || weights.cols() != fi.size()) throw InvalidInput("audit_pair: shape mismatch");
    const double slack = c * (1.0 + 1e-12) + 1e-300;
    if (norm2(fi) > slack || norm2(fj) > slack) throw InvalidInput("audit_pair: feature norm exceeds c");

    const Vector si = matvec(weights, fi);
    const Vector sj = matvec(weights, fj);
    return make_report(kernels::squared_distance(fi, fj), kernels::squared_distance(si, sj), residual_norm, c);
}

AuditSummary audit_dataset(const Matrix& features, const Matrix& weights,
                           const std::function<void(const BoundReport&)>& sink) {
    const std::size_t n = features.rows();
    if (n < 2) throw InvalidInput("audit_dataset: need at least two samples");
    AuditSummary sum;
    for (std::size_t i = 0; i < n; ++i) sum.c = std::max(sum.c, norm2(features.row(i)));
    sum.residual = residual(features.transposed(), weights);

    const Matrix logits = matmul_nt(features, weights);
    double slack_total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            BoundReport rep = make_report(kernels::squared_distance(features.row(i), features.row(j)),
                                          kernels::squared_distance(logits.row(i), logits.row(j)), sum.residual,
                                          sum.c);
            rep.i = i;
            rep.j = j;
            ++sum.pairs;
            if (!rep.satisfied) ++sum.violations;
            slack_total += std::min(rep.feat_dist_sq - rep.lower, rep.upper - rep.feat_dist_sq);
            if (sink) sink(rep);
        }
    }
    sum.fraction_satisfied = static_cast<double>(sum.pairs - sum.violations) / static_cast<double>(sum.pairs);
    sum.mean_slack = slack_total / static_cast<double>(sum.pairs);
    return sum;
}

}  // namespace isdml
