#pragma once

// Online per-class feature statistics (population mean and covariance).

#include <cstddef>
#include <memory>
#include <vector>

#include "isdml/linalg.hpp"

namespace isdml {

struct ClassStats {
    std::size_t class_id = 0;
    std::size_t count = 0;
    Vector mean;  // d
    Matrix cov;   // d x d, population (divides by count)

    static ClassStats empty(std::size_t class_id, std::size_t dim);
    std::size_t dim() const { return mean.size(); }
};

// Merges a batch of samples (rows, all of stats.class_id) into the running
// statistics with the pairwise mean/scatter combination rule.
ClassStats update(const ClassStats& stats, const Matrix& batch);

// cov + ridge * I
Matrix covariance(const ClassStats& stats, double ridge);

// 1e-6 * mean(diag(cov)), or 1e-12 when the covariance is identically zero.
double default_ridge(const Matrix& cov);

// Immutable per-class covariance snapshot. Copies share storage.
class CovarianceBank {
public:
    CovarianceBank() = default;

    std::size_t num_classes() const { return covs_ ? covs_->size() : 0; }
    std::size_t dim() const { return dim_; }
    const Matrix& lookup(std::size_t class_id) const;

    // Bank with every class at zero covariance.
    static CovarianceBank zeros(std::size_t num_classes, std::size_t dim);

private:
    friend CovarianceBank snapshot_all(const std::vector<ClassStats>& per_class);
    std::shared_ptr<const std::vector<Matrix>> covs_;
    std::size_t dim_ = 0;
};

// per_class[i] must carry class_id i.
CovarianceBank snapshot_all(const std::vector<ClassStats>& per_class);

}  // namespace isdml
