#pragma once

// Dense row-major matrices and the handful of factorizations the rest of the
// library needs. Sizes are small (feature widths up to a few hundred), so
// everything is O(n^3) textbook code on top of the dot/axpy kernels.

#include <cstddef>
#include <span>
#include <vector>

namespace isdml {

using Vector = std::vector<double>;

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    Matrix transposed() const;

    bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

bool all_finite(std::span<const double> values);
void require_finite(std::span<const double> values, const char* what);

// A * B
Matrix matmul(const Matrix& a, const Matrix& b);
// A * B^T
Matrix matmul_nt(const Matrix& a, const Matrix& b);
// A^T * B
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// A * x
Vector matvec(const Matrix& a, std::span<const double> x);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double norm2(std::span<const double> v);

struct Svd {
    Matrix u;      // rows x k
    Vector sigma;  // k, descending, non-negative
    Matrix v;      // cols x k
};

// Thin SVD by one-sided (Hestenes) Jacobi rotations, k = min(rows, cols).
// Columns of U belonging to zero singular values are completed to an
// orthonormal set.
Svd thin_svd(const Matrix& a);

// Largest singular value, from the symmetric eigenproblem of the smaller
// Gram matrix (A^T A or A A^T).
double spectral_norm(const Matrix& a);

struct SymmetricEigen {
    Vector values;   // ascending
    Matrix vectors;  // column i is the eigenvector for values[i]
};

// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
SymmetricEigen symmetric_eigen(const Matrix& a);

// Lower-triangular L with A = L L^T. Throws NumericalError if A is not
// numerically positive definite.
Matrix cholesky(const Matrix& a);

double log_sum_exp(std::span<const double> v);
Vector softmax(std::span<const double> v);

}  // namespace isdml
