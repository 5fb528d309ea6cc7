#include "isdml/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "isdml/errors.hpp"
#include "isdml/kernels.hpp"

namespace isdml {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw InvalidInput("matrix data length " + std::to_string(data_.size()) + " != " +
                           std::to_string(rows_) + "x" + std::to_string(cols_));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

void require_finite(std::span<const double> values, const char* what) {
    if (!all_finite(values)) throw InvalidInput(std::string(what) + ": non-finite value");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik != 0.0) kernels::axpy(aik, b.row(k), out);
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw InvalidInput("matmul_nt: inner dimensions differ");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = kernels::dot(a.row(i), b.row(j));
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw InvalidInput("matmul_tn: inner dimensions differ");
    Matrix c(a.cols(), b.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = a(r, i);
            if (ari != 0.0) kernels::axpy(ari, b.row(r), c.row(i));
        }
    }
    return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw InvalidInput("matvec: dimension mismatch");
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = kernels::dot(a.row(i), x);
    return y;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvalidInput("matrix add: shape mismatch");
    Matrix c = a;
    kernels::axpy(1.0, b.data(), c.data());
    return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw InvalidInput("matrix subtract: shape mismatch");
    Matrix c = a;
    kernels::axpy(-1.0, b.data(), c.data());
    return c;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix c = a;
    for (double& x : c.data()) x *= s;
    return c;
}

double frobenius_norm(const Matrix& a) { return norm2(a.data()); }

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double x : a.data()) m = std::max(m, std::abs(x));
    return m;
}

double norm2(std::span<const double> v) {
    // Scaled to avoid overflow for large entries.
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return 0.0;
    double s = 0.0;
    for (double x : v) {
        const double y = x / scale;
        s += y * y;
    }
    return scale * std::sqrt(s);
}

namespace {

constexpr int kMaxSweeps = 100;

// One-sided Jacobi on the rows of `cols` (each row is a column of the
// original matrix). `vrows` accumulates the right rotations.
void hestenes(Matrix& cols, Matrix& vrows) {
    const std::size_t n = cols.rows();
    const double tol = std::numeric_limits<double>::epsilon();
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                auto ap = cols.row(p);
                auto aq = cols.row(q);
                const double alpha = kernels::dot(ap, ap);
                const double beta = kernels::dot(aq, aq);
                const double gamma = kernels::dot(ap, aq);
                if (gamma == 0.0 || std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::hypot(1.0, t);
                const double s = c * t;
                for (std::size_t k = 0; k < ap.size(); ++k) {
                    const double x = ap[k], y = aq[k];
                    ap[k] = c * x - s * y;
                    aq[k] = s * x + c * y;
                }
                auto vp = vrows.row(p);
                auto vq = vrows.row(q);
                for (std::size_t k = 0; k < vp.size(); ++k) {
                    const double x = vp[k], y = vq[k];
                    vp[k] = c * x - s * y;
                    vq[k] = s * x + c * y;
                }
            }
        }
        if (!rotated) return;
    }
}

// Fill u-column `target` (stored as a row of `urows`) with a unit vector
// orthogonal to rows [0, filled).
void complete_basis(Matrix& urows, std::size_t target, const std::vector<bool>& valid) {
    const std::size_t m = urows.cols();
    for (std::size_t e = 0; e < m; ++e) {
        Vector cand(m, 0.0);
        cand[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t r = 0; r < urows.rows(); ++r) {
                if (!valid[r]) continue;
                const double proj = kernels::dot(urows.row(r), cand);
                kernels::axpy(-proj, urows.row(r), cand);
            }
        }
        const double nrm = norm2(cand);
        if (nrm > 1e-3) {
            auto out = urows.row(target);
            for (std::size_t k = 0; k < m; ++k) out[k] = cand[k] / nrm;
            return;
        }
    }
    throw NumericalError("thin_svd: could not complete orthonormal basis");
}

Svd svd_tall(const Matrix& a) {
    // a is m x n with m >= n.
    const std::size_t n = a.cols();
    Matrix cols = a.transposed();  // n x m
    Matrix vrows = Matrix::identity(n);
    hestenes(cols, vrows);

    Vector norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = norm2(cols.row(i));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    const std::size_t m = a.rows();
    const double smax = n ? norms[order[0]] : 0.0;
    Matrix urows(n, m);
    Matrix vout(n, n);
    Svd out;
    out.sigma.resize(n);
    std::vector<bool> valid(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = order[i];
        out.sigma[i] = norms[src];
        for (std::size_t k = 0; k < n; ++k) vout(k, i) = vrows(src, k);
        if (norms[src] > 0.0 && norms[src] > smax * 1e-14) {
            auto dst = urows.row(i);
            auto col = cols.row(src);
            for (std::size_t k = 0; k < m; ++k) dst[k] = col[k] / norms[src];
            valid[i] = true;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (valid[i]) continue;
        complete_basis(urows, i, valid);
        valid[i] = true;
    }
    out.u = urows.transposed();
    out.v = std::move(vout);
    return out;
}

}  // namespace

Svd thin_svd(const Matrix& a) {
    if (a.rows() == 0 || a.cols() == 0) throw InvalidInput("thin_svd: empty matrix");
    require_finite(a.data(), "thin_svd");
    if (a.rows() >= a.cols()) return svd_tall(a);
    Svd t = svd_tall(a.transposed());
    std::swap(t.u, t.v);
    return t;
}

SymmetricEigen symmetric_eigen(const Matrix& input) {
    if (input.rows() != input.cols()) throw InvalidInput("symmetric_eigen: matrix not square");
    require_finite(input.data(), "symmetric_eigen");
    const std::size_t n = input.rows();
    Matrix a = input;
    // Symmetrize so tiny asymmetries from upstream arithmetic do not bias the result.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) a(i, j) = a(j, i) = 0.5 * (a(i, j) + a(j, i));
    Matrix v = Matrix::identity(n);

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                const double g = 100.0 * std::abs(apq);
                // Negligible relative to both diagonal entries.
                if (apq == 0.0 || (std::abs(a(p, p)) + g == std::abs(a(p, p)) && std::abs(a(q, q)) + g == std::abs(a(q, q)))) {
                    a(p, q) = a(q, p) = 0.0;
                    continue;
                }
                rotated = true;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(1.0, theta));
                const double c = 1.0 / std::hypot(1.0, t);
                const double s = c * t;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
        if (!rotated) break;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    SymmetricEigen out{Vector(n), Matrix(n, n)};
    for (std::size_t i = 0; i < n; ++i) {
        out.values[i] = a(order[i], order[i]);
        for (std::size_t k = 0; k < n; ++k) out.vectors(k, i) = v(k, order[i]);
    }
    return out;
}

double spectral_norm(const Matrix& a) {
    require_finite(a.data(), "spectral_norm");
    if (a.empty()) return 0.0;
    const Matrix gram = a.rows() >= a.cols() ? matmul_tn(a, a) : matmul_nt(a, a);
    const SymmetricEigen eig = symmetric_eigen(gram);
    return std::sqrt(std::max(0.0, eig.values.back()));
}

Matrix cholesky(const Matrix& a) {
    if (a.rows() != a.cols()) throw InvalidInput("cholesky: matrix not square");
    require_finite(a.data(), "cholesky");
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0)) throw NumericalError("cholesky: matrix is not positive definite");
        l(j, j) = std::sqrt(diag);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / l(j, j);
        }
    }
    return l;
}

double log_sum_exp(std::span<const double> v) {
    if (v.empty()) throw InvalidInput("log_sum_exp: empty input");
    require_finite(v, "log_sum_exp");
    const double m = *std::max_element(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

Vector softmax(std::span<const double> v) {
    if (v.empty()) throw InvalidInput("softmax: empty input");
    require_finite(v, "softmax");
    const double m = *std::max_element(v.begin(), v.end());
    Vector p(v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += (p[i] = std::exp(v[i] - m));
    for (double& x : p) x /= s;
    return p;
}

}  // namespace isdml
