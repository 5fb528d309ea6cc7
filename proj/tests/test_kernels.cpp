#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "isdml/kernels.hpp"

using namespace isdml::kernels;

namespace {

double ref_dot(const std::vector<double>& a, const std::vector<double>& b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
    return static_cast<double>(s);
}

std::vector<Isa> compiled_variants() {
    std::vector<Isa> out;
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
        if (available(isa)) out.push_back(isa);
    return out;
}

}  // namespace

TEST_CASE("scalar kernels are always available") {
    CHECK(available(Isa::scalar));
    CHECK(table(Isa::scalar).isa == Isa::scalar);
    CHECK(isa_name(Isa::scalar) == "scalar");
}

TEST_CASE("every available variant agrees with a long-double reference on ragged lengths") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (Isa isa : compiled_variants()) {
        CAPTURE(isa_name(isa));
        const KernelTable& k = table(isa);
        for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 127u, 1000u}) {
            std::vector<double> a(n), b(n);
            for (auto& x : a) x = g(rng);
            for (auto& x : b) x = g(rng);
            const double scale = 1.0 + std::sqrt(static_cast<double>(n));

            CHECK(std::abs(k.dot(a.data(), b.data(), n) - ref_dot(a, b)) <= 1e-13 * scale);

            std::vector<double> diff(n);
            for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
            CHECK(std::abs(k.squared_distance(a.data(), b.data(), n) - ref_dot(diff, diff)) <= 1e-13 * scale * scale);

            std::vector<double> y = b;
            k.axpy(0.375, a.data(), y.data(), n);
            for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(b[i] + 0.375 * a[i]).epsilon(1e-15));
        }
    }
}

TEST_CASE("SIMD variants match the scalar reference to rounding") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1, 1);
    const KernelTable& ref = table(Isa::scalar);
    for (Isa isa : compiled_variants()) {
        if (isa == Isa::scalar) continue;
        const KernelTable& k = table(isa);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = static_cast<std::size_t>(trial) % 97;
            std::vector<double> a(n), b(n);
            for (auto& x : a) x = u(rng);
            for (auto& x : b) x = u(rng);
            CHECK(k.dot(a.data(), b.data(), n) == doctest::Approx(ref.dot(a.data(), b.data(), n)).epsilon(1e-12));
            CHECK(k.squared_distance(a.data(), b.data(), n) ==
                  doctest::Approx(ref.squared_distance(a.data(), b.data(), n)).epsilon(1e-12));
        }
    }
}

TEST_CASE("axpy is exact elementwise when no rounding is involved") {
    for (Isa isa : compiled_variants()) {
        std::vector<double> x{1, 2, 3, 4, 5, 6, 7}, y{1, 1, 1, 1, 1, 1, 1};
        table(isa).axpy(2.0, x.data(), y.data(), x.size());
        CHECK(y == std::vector<double>{3, 5, 7, 9, 11, 13, 15});
    }
}

TEST_CASE("requesting a variant that is not available throws") {
    for (Isa isa : {Isa::avx2, Isa::neon})
        if (!available(isa)) CHECK_THROWS_AS(table(isa), std::invalid_argument);
}
