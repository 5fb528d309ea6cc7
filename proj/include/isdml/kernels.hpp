#pragma once

// Dense double-precision inner-loop kernels.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2+FMA (x86-64) or NEON (aarch64) variant. The variant is
// picked once per process from the CPU's reported features; setting the
// environment variable ISDML_KERNELS=scalar forces the reference path.
//
// The SIMD variants use a different summation order than the scalar loops, so
// results agree to rounding, not bitwise. Within one process the selection is
// fixed, which keeps runs on the same machine bitwise reproducible.

#include <cstddef>
#include <span>
#include <string_view>

namespace isdml::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
    Isa isa;
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // sum_k (a_k - b_k)^2
    double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

// True when the variant is compiled in and the running CPU supports it.
bool available(Isa isa);

// Throws std::invalid_argument if the variant is not available.
const KernelTable& table(Isa isa);

// The table chosen at first use.
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    return active().squared_distance(a.data(), b.data(), a.size());
}

namespace detail {
extern const KernelTable scalar_table;
#if defined(ISDML_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
#if defined(ISDML_HAVE_NEON)
extern const KernelTable neon_table;
#endif
}  // namespace detail

}  // namespace isdml::kernels
