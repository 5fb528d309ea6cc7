#include <doctest.h>

#include <cmath>
#include <random>

#include "isdml/augment.hpp"
#include "isdml/errors.hpp"
#include "isdml/losses.hpp"
#include "support/oracles.hpp"

using namespace isdml;

TEST_CASE("plain_logits") {
    CHECK(plain_logits(Vector{1, 2}, Matrix::identity(2), Vector{0, 0}) == Vector{1, 2});
    CHECK(plain_logits(Vector{0, 0, 0}, Matrix(2, 3), Vector{0.5, -1}) == Vector{0.5, -1});

    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        const Matrix w = oracle::random_matrix(rng, 4, 7);
        const Vector f = oracle::random_vector(rng, 7), b = oracle::random_vector(rng, 4);
        const Vector s = plain_logits(f, w, b);
        for (std::size_t j = 0; j < 4; ++j) {
            double ref = b[j];
            for (std::size_t k = 0; k < 7; ++k) ref += w(j, k) * f[k];
            CHECK(std::abs(s[j] - ref) < 1e-12);
        }
    }
    CHECK_THROWS_AS(plain_logits(Vector{1, 2, 3}, Matrix::identity(2), Vector{0, 0}), InvalidInput);
}

TEST_CASE("augmented_logits hand case") {
    const AugmentedLogits a =
        augmented_logits(Vector{1, 0}, Matrix::identity(2), Vector{0, 0}, Matrix::identity(2), 0, 2.0);
    CHECK(a.values[0] == 1.0);
    CHECK(a.values[1] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(a.anchor_class == 0);
    CHECK(a.lambda == 2.0);
}

TEST_CASE("augmented_logits reductions and anchor invariance") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> lam(0.0, 3.0);
    for (int t = 0; t < 100; ++t) {
        const std::size_t d = 2 + t % 6, c = 2 + t % 5, y = static_cast<std::size_t>(t) % c;
        const Matrix w = oracle::random_matrix(rng, c, d), sigma = oracle::random_spd(rng, d);
        const Vector f = oracle::random_vector(rng, d), b = oracle::random_vector(rng, c);
        const Vector plain = plain_logits(f, w, b);
        const double l = lam(rng);

        CHECK(augmented_logits(f, w, b, sigma, y, 0.0).values == plain);
        CHECK(augmented_logits(f, w, b, Matrix(d, d), y, l).values == plain);

        const Vector aug = augmented_logits(f, w, b, sigma, y, l).values;
        CHECK(aug[y] == plain[y]);
        for (std::size_t j = 0; j < c; ++j) {
            CHECK(aug[j] >= plain[j]);
            // Direct evaluation of 0.5 * lambda * v^T Sigma v.
            double quad = 0;
            for (std::size_t p = 0; p < d; ++p)
                for (std::size_t q = 0; q < d; ++q) quad += (w(j, p) - w(y, p)) * sigma(p, q) * (w(j, q) - w(y, q));
            CHECK(std::abs(aug[j] - (plain[j] + 0.5 * l * quad)) < 1e-12 * (1 + std::abs(aug[j])));
        }
        // Non-decreasing in lambda.
        const Vector more = augmented_logits(f, w, b, sigma, y, l + 0.5).values;
        for (std::size_t j = 0; j < c; ++j) CHECK(more[j] >= aug[j]);
    }
}

TEST_CASE("augmented_logits input validation") {
    const Matrix w = Matrix::identity(2);
    const Vector f{1, 0}, b{0, 0};
    CHECK_THROWS_AS(augmented_logits(f, w, b, Matrix::identity(2), 0, -0.1), InvalidInput);
    Matrix asym = Matrix::identity(2);
    asym(0, 1) = 0.5;
    CHECK_THROWS_AS(augmented_logits(f, w, b, asym, 0, 1.0), InvalidInput);
    CHECK_THROWS_AS(augmented_logits(f, w, b, Matrix::identity(2), 2, 1.0), InvalidInput);
}

TEST_CASE("sample_features") {
    const Vector f{0.5, -1.0};
    const Matrix zero_lambda = sample_features(f, Matrix::identity(2), 0.0, 5, 1);
    for (std::size_t r = 0; r < 5; ++r) CHECK(oracle::max_abs_diff(zero_lambda.row(r), f) == 0.0);

    CHECK(sample_features(f, Matrix::identity(2), 1.0, 50, 9) == sample_features(f, Matrix::identity(2), 1.0, 50, 9));
    CHECK(sample_features(f, Matrix::identity(2), 1.0, 50, 9) != sample_features(f, Matrix::identity(2), 1.0, 50, 10));

    // Law of large numbers: mean within 0.02, covariance within 0.05 (Frobenius).
    const Matrix s = sample_features(f, Matrix::identity(2), 1.0, 100000, 3);
    Vector mean;
    Matrix cov;
    oracle::two_pass_covariance(s, mean, cov);
    CHECK(std::hypot(mean[0] - f[0], mean[1] - f[1]) < 0.02);
    CHECK(frobenius_norm(cov - Matrix::identity(2)) < 0.05);

    // Rank-deficient covariance still samples thanks to the ridge.
    const Matrix rank1(2, 2, Vector{1, 1, 1, 1});
    CHECK_NOTHROW(sample_features(f, rank1, 1.0, 10, 4));
}

TEST_CASE("mc_ce_estimate") {
    std::mt19937_64 rng(5);
    const Matrix w = oracle::random_matrix(rng, 3, 4), sigma = oracle::random_spd(rng, 4);
    const Vector f = oracle::random_vector(rng, 4), b = oracle::random_vector(rng, 3);

    // lambda = 0: exactly the plain cross-entropy, for any m.
    const double plain = ce_loss(plain_logits(f, w, b), 1).value;
    for (std::size_t m : {1u, 7u, 100u}) {
        const McEstimate e = mc_ce_estimate(f, w, b, sigma, 1, 0.0, m, 2);
        CHECK(e.mean == plain);
        CHECK(e.std_error == 0.0);
        CHECK(e.samples == m);
    }

    // m = 1 is the CE of the single sampled feature drawn with the same seed.
    const Matrix one = sample_features(f, sigma, 0.7, 1, 11);
    const double manual = oracle::naive_ce(plain_logits(one.row(0), w, b), 2);
    CHECK(std::abs(mc_ce_estimate(f, w, b, sigma, 2, 0.7, 1, 11).mean - manual) < 1e-12);

    // Jensen: closed form bounds the Monte-Carlo mean from above.
    const McEstimate e = mc_ce_estimate(f, w, b, sigma, 0, 0.5, 10000, 12);
    CHECK(isda_ce_loss(f, w, b, 0, sigma, 0.5).value >= e.mean - 3 * e.std_error);
}
