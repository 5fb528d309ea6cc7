#include "isdml/stats.hpp"

#include <string>

#include "isdml/errors.hpp"
#include "isdml/kernels.hpp"

namespace isdml {

ClassStats ClassStats::empty(std::size_t class_id, std::size_t dim) {
    return ClassStats{class_id, 0, Vector(dim, 0.0), Matrix(dim, dim)};
}

ClassStats update(const ClassStats& stats, const Matrix& batch) {
    const std::size_t d = stats.dim();
    if (batch.cols() != d || stats.cov.rows() != d || stats.cov.cols() != d)
        throw InvalidInput("ClassStats update: feature dimension mismatch");
    require_finite(batch.data(), "ClassStats update");
    const std::size_t nb = batch.rows();
    if (nb == 0) return stats;

    Vector batch_mean(d, 0.0);
    for (std::size_t r = 0; r < nb; ++r) kernels::axpy(1.0, batch.row(r), batch_mean);
    for (double& x : batch_mean) x /= static_cast<double>(nb);

    // Batch scatter, two-pass about its own mean.
    Matrix scatter(d, d);
    Vector centered(d);
    for (std::size_t r = 0; r < nb; ++r) {
        for (std::size_t k = 0; k < d; ++k) centered[k] = batch(r, k) - batch_mean[k];
        for (std::size_t i = 0; i < d; ++i)
            if (centered[i] != 0.0) kernels::axpy(centered[i], std::span<const double>(centered).subspan(i), scatter.row(i).subspan(i));
    }

    const double na = static_cast<double>(stats.count);
    const double n = na + static_cast<double>(nb);
    const double w = na * static_cast<double>(nb) / n;

    ClassStats out{stats.class_id, stats.count + nb, Vector(d), Matrix(d, d)};
    Vector delta(d);
    for (std::size_t k = 0; k < d; ++k) {
        delta[k] = batch_mean[k] - stats.mean[k];
        out.mean[k] = stats.mean[k] + delta[k] * (static_cast<double>(nb) / n);
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            const double total = stats.cov(i, j) * na + scatter(i, j) + delta[i] * delta[j] * w;
            out.cov(i, j) = out.cov(j, i) = total / n;
        }
    }
    return out;
}

Matrix covariance(const ClassStats& stats, double ridge) {
    if (!(ridge >= 0.0)) throw InvalidInput("covariance: ridge must be non-negative");
    Matrix c = stats.cov;
    for (std::size_t i = 0; i < c.rows(); ++i) c(i, i) += ridge;
    return c;
}

double default_ridge(const Matrix& cov) {
    double trace = 0.0;
    for (std::size_t i = 0; i < cov.rows(); ++i) trace += cov(i, i);
    const double r = cov.rows() ? 1e-6 * trace / static_cast<double>(cov.rows()) : 0.0;
    return r > 0.0 ? r : 1e-12;
}

const Matrix& CovarianceBank::lookup(std::size_t class_id) const {
    if (class_id >= num_classes())
        throw InvalidInput("CovarianceBank: no covariance for class " + std::to_string(class_id));
    return (*covs_)[class_id];
}

CovarianceBank CovarianceBank::zeros(std::size_t num_classes, std::size_t dim) {
    CovarianceBank bank;
    bank.covs_ = std::make_shared<const std::vector<Matrix>>(num_classes, Matrix(dim, dim));
    bank.dim_ = dim;
    return bank;
}

CovarianceBank snapshot_all(const std::vector<ClassStats>& per_class) {
    if (per_class.empty()) throw InvalidInput("snapshot_all: no classes");
    const std::size_t d = per_class.front().dim();
    std::vector<Matrix> covs;
    covs.reserve(per_class.size());
    for (std::size_t i = 0; i < per_class.size(); ++i) {
        if (per_class[i].class_id != i)
            throw InvalidInput("snapshot_all: missing statistics for class " + std::to_string(i));
        if (per_class[i].dim() != d) throw InvalidInput("snapshot_all: inconsistent feature dimension");
        covs.push_back(per_class[i].cov);
    }
    CovarianceBank bank;
    bank.covs_ = std::make_shared<const std::vector<Matrix>>(std::move(covs));
    bank.dim_ = d;
    return bank;
}

}  // namespace isdml
