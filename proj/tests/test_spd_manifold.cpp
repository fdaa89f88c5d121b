#include <doctest.h>

#include <cmath>
#include <vector>

#include "test_support.hpp"

using namespace spdreg;
using test::random_spd;
using test::random_symmetric;

namespace {

double rel_err(const Matrix& got, const Matrix& want) {
    const double denom = std::max(want.norm(), 1e-300);
    return (got - want).norm() / denom;
}

// Independent sum-of-squared-distances objective for the mean probe.
double karcher_objective(const SpdMatrix& candidate, std::span<const SpdMatrix> mats) {
    double total = 0.0;
    for (const auto& m : mats) {
        const double d = riemannian_distance(candidate, m);
        total += d * d;
    }
    return total;
}

}  // namespace

TEST_SUITE_BEGIN("spd_manifold");

TEST_CASE("SpdMatrix construction validates input") {
    CHECK_THROWS_AS(SpdMatrix(Matrix::Zero(3, 3)), InvalidInputError);  // not PD
    Matrix asym(2, 2);
    asym << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS(SpdMatrix{asym}, InvalidInputError);
    Matrix nonfinite = Matrix::Identity(2, 2);
    nonfinite(0, 0) = std::nan("");
    CHECK_THROWS_AS(SpdMatrix{nonfinite}, InvalidInputError);
    CHECK_THROWS_AS(SpdMatrix(Matrix::Identity(2, 3)), ShapeError);

    Matrix neg = -Matrix::Identity(2, 2);
    CHECK_THROWS_AS(SpdMatrix{neg}, InvalidInputError);
}

TEST_CASE("SpdMatrix shrinkage applies diagonal loading") {
    Matrix m(2, 2);
    m << 2.0, 0.0, 0.0, 4.0;
    SpdMatrix loaded(m, 0.5);
    // trace/R = 3, load = 1.5
    CHECK(loaded.value()(0, 0) == doctest::Approx(3.5));
    CHECK(loaded.value()(1, 1) == doctest::Approx(5.5));
}

TEST_CASE("matrix_log: identity and diagonal cases") {
    CHECK(matrix_log(SpdMatrix::identity(3)).norm() == doctest::Approx(0.0));

    Matrix d = Matrix::Identity(2, 2);
    d(0, 0) = std::exp(1.0);
    const Matrix got = matrix_log(SpdMatrix(d));
    CHECK(got(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(got(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("matrix_exp: zero and diagonal cases") {
    CHECK(rel_err(matrix_exp(Matrix::Zero(4, 4)).value(), Matrix::Identity(4, 4)) < 1e-14);

    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 1.0;
    d(1, 1) = -1.0;
    const auto got = matrix_exp(d);
    CHECK(got.value()(0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    CHECK(got.value()(1, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    Matrix asym(2, 2);
    asym << 0.0, 1.0, -1.0, 0.0;
    CHECK_THROWS_AS(matrix_exp(asym), InvalidInputError);
}

TEST_CASE("matrix_log / matrix_exp roundtrip on random SPD matrices") {
    Rng rng(11);
    for (int i = 0; i < 20; ++i) {
        const SpdMatrix a = random_spd(rng, 6);
        CHECK(rel_err(matrix_exp(matrix_log(a)).value(), a.value()) < 1e-9);
    }
}

TEST_CASE("matrix_sqrt_and_invsqrt") {
    auto [si, ti] = matrix_sqrt_and_invsqrt(SpdMatrix::identity(2));
    CHECK(rel_err(si.value(), Matrix::Identity(2, 2)) < 1e-14);
    CHECK(rel_err(ti.value(), Matrix::Identity(2, 2)) < 1e-14);

    Matrix d = Matrix::Zero(2, 2);
    d(0, 0) = 4.0;
    d(1, 1) = 9.0;
    auto [s, t] = matrix_sqrt_and_invsqrt(SpdMatrix(d));
    CHECK(s.value()(0, 0) == doctest::Approx(2.0));
    CHECK(s.value()(1, 1) == doctest::Approx(3.0));
    CHECK(t.value()(0, 0) == doctest::Approx(0.5));
    CHECK(t.value()(1, 1) == doctest::Approx(1.0 / 3.0));

    Rng rng(12);
    for (int i = 0; i < 20; ++i) {
        const SpdMatrix a = random_spd(rng, 7);
        auto [sr, tr] = matrix_sqrt_and_invsqrt(a);
        CHECK((sr.value() * sr.value() - a.value()).norm() <= 1e-9 * a.value().norm());
        CHECK(rel_err(sr.value() * tr.value(), Matrix::Identity(7, 7)) < 1e-10);
    }

    // Eigenvalue spread > 1e12 must be rejected.
    Matrix bad = Matrix::Identity(2, 2);
    bad(0, 0) = 1e13;
    bad(1, 1) = 1e-2;
    CHECK_THROWS_AS(matrix_sqrt_and_invsqrt(SpdMatrix(bad)), IllConditionedError);
}

TEST_CASE("riemannian_distance anchors") {
    Rng rng(13);
    const SpdMatrix a = random_spd(rng, 5);
    CHECK(riemannian_distance(a, a) == doctest::Approx(0.0).epsilon(1e-10));

    Matrix d = Matrix::Identity(2, 2);
    d(0, 0) = std::exp(2.0);
    CHECK(riemannian_distance(SpdMatrix::identity(2), SpdMatrix(d)) ==
          doctest::Approx(2.0).epsilon(1e-10));

    CHECK_THROWS_AS(riemannian_distance(SpdMatrix::identity(2), SpdMatrix::identity(3)),
                    ShapeError);
}

TEST_CASE("distance equals tangent norm (Eq.-level cross-check)") {
    Rng rng(14);
    for (int i = 0; i < 30; ++i) {
        const SpdMatrix a = random_spd(rng, 6);
        const SpdMatrix b = random_spd(rng, 6);
        const double dist = riemannian_distance(a, b);
        const double tnorm = tangent_vectorize(a, b).entries().norm();
        CHECK(std::abs(dist - tnorm) < 1e-8 * std::max(1.0, dist));
    }
}

TEST_CASE("log_map anchors and roundtrip") {
    Rng rng(15);
    const SpdMatrix base = random_spd(rng, 5);
    CHECK(log_map(base, base).norm() < 1e-9);

    const SpdMatrix a = random_spd(rng, 5);
    CHECK(rel_err(log_map(SpdMatrix::identity(5), a), matrix_log(a)) < 1e-10);

    for (int i = 0; i < 20; ++i) {
        const SpdMatrix b = random_spd(rng, 4);
        const SpdMatrix x = random_spd(rng, 4);
        const SpdMatrix back = exp_map(b, log_map(b, x));
        CHECK(rel_err(back.value(), x.value()) < 1e-8);
    }
}

TEST_CASE("exp_map anchors") {
    Rng rng(16);
    const SpdMatrix base = random_spd(rng, 5);
    CHECK(rel_err(exp_map(base, Matrix::Zero(5, 5)).value(), base.value()) < 1e-12);

    const SpdMatrix a = random_spd(rng, 5);
    CHECK(rel_err(exp_map(SpdMatrix::identity(5), matrix_log(a)).value(), a.value()) < 1e-9);

    CHECK_THROWS_AS(exp_map(base, Matrix::Zero(4, 4)), ShapeError);
}

TEST_CASE("tangent_vectorize: zero vector, length anchor, norm equality") {
    Rng rng(17);
    const SpdMatrix a = random_spd(rng, 4);
    const TangentVector tv = tangent_vectorize(a, a);
    CHECK(tv.entries().size() == 10);
    CHECK(tv.entries().norm() < 1e-9);

    // R = 30 gives the 465-dimensional tangent space.
    const SpdMatrix big = random_spd(rng, 30, 0.5, 2.0);
    const SpdMatrix big2 = random_spd(rng, 30, 0.5, 2.0);
    CHECK(tangent_vectorize(big, big2).entries().size() == 465);

    // Vector -> symmetric matrix roundtrip.
    const TangentVector v = tangent_vectorize(a, random_spd(rng, 4));
    const Matrix sym = v.to_symmetric();
    const TangentVector v2 = tangent_vectorize_whitened(matrix_exp(sym).value());
    CHECK((v.entries() - v2.entries()).norm() < 1e-9);
}

TEST_CASE("intrinsic_mean: single element and commuting pair") {
    Rng rng(18);
    const SpdMatrix a = random_spd(rng, 4);
    std::vector<SpdMatrix> single{a};
    CHECK(rel_err(intrinsic_mean(single).value(), a.value()) < 1e-7);

    // Commuting pair: geodesic midpoint is the matrix geometric mean.
    Matrix d = Matrix::Identity(2, 2) * std::exp(2.0);
    std::vector<SpdMatrix> pair{SpdMatrix::identity(2), SpdMatrix(d)};
    const Matrix want = Matrix::Identity(2, 2) * std::exp(1.0);
    CHECK(rel_err(intrinsic_mean(pair).value(), want) < 1e-7);
}

TEST_CASE("intrinsic_mean: local-optimality probe") {
    Rng rng(19);
    std::vector<SpdMatrix> mats;
    for (int i = 0; i < 10; ++i) mats.push_back(random_spd(rng, 5));
    const SpdMatrix mean = intrinsic_mean(mats);
    const double best = karcher_objective(mean, mats);
    for (int i = 0; i < 200; ++i) {
        const double scale = rng.uniform(0.01, 0.1);
        const SpdMatrix pert = exp_map(mean, random_symmetric(rng, 5, scale));
        CHECK(karcher_objective(pert, mats) > best);
    }
}

TEST_CASE("intrinsic_mean: fixed point and duplicated list") {
    Rng rng(20);
    MeanConfig cfg;
    std::vector<SpdMatrix> mats;
    for (int i = 0; i < 12; ++i) mats.push_back(random_spd(rng, 6));
    const SpdMatrix mean = intrinsic_mean(mats, cfg);

    Matrix avg = Matrix::Zero(6, 6);
    for (const auto& m : mats) avg += log_map(mean, m);
    avg /= static_cast<double>(mats.size());
    CHECK(avg.norm() <= 10.0 * cfg.tolerance);

    const SpdMatrix a = random_spd(rng, 4);
    std::vector<SpdMatrix> dup(7, a);
    CHECK((intrinsic_mean(dup, cfg).value() - a.value()).norm() < 10.0 * cfg.tolerance);
}

TEST_CASE("intrinsic_mean: permutation invariance") {
    Rng rng(21);
    std::vector<SpdMatrix> mats;
    for (int i = 0; i < 8; ++i) mats.push_back(random_spd(rng, 4));
    const Matrix m1 = intrinsic_mean(mats).value();
    std::vector<SpdMatrix> shuffled(mats.rbegin(), mats.rend());
    std::swap(shuffled[0], shuffled[3]);
    const Matrix m2 = intrinsic_mean(shuffled).value();
    CHECK(rel_err(m2, m1) < 1e-8);
}

TEST_CASE("intrinsic_mean: error paths") {
    CHECK_THROWS_AS(intrinsic_mean({}), InvalidInputError);

    Rng rng(22);
    std::vector<SpdMatrix> mats;
    for (int i = 0; i < 5; ++i) mats.push_back(random_spd(rng, 4, 0.01, 100.0));
    MeanConfig strict{.tolerance = 1e-16, .max_iterations = 3};
    try {
        intrinsic_mean(mats, strict);
        FAIL("expected NonConvergenceError");
    } catch (const NonConvergenceError& e) {
        CHECK(e.iterations() == 3);
        CHECK(e.last_iterate().rows() == 4);
        CHECK(e.residual() >= 0.0);
    }
}

TEST_CASE("metric invariants: symmetry, discernibility, congruence, inversion") {
    Rng rng(23);
    for (int i = 0; i < 25; ++i) {
        const int dim = 3 + static_cast<int>(rng.bounded(5));
        const SpdMatrix a = random_spd(rng, dim);
        const SpdMatrix b = random_spd(rng, dim);
        const double dab = riemannian_distance(a, b);
        const double dba = riemannian_distance(b, a);
        CHECK(std::abs(dab - dba) < 1e-10 * std::max(1.0, dab));
        CHECK(dab > 0.0);

        // Congruence: W^T A W for invertible W.
        const Matrix w = test::random_gaussian(rng, dim, dim) +
                         3.0 * Matrix::Identity(dim, dim);
        const SpdMatrix wa(0.5 * (w.transpose() * a.value() * w +
                                  (w.transpose() * a.value() * w).transpose()));
        const SpdMatrix wb(0.5 * (w.transpose() * b.value() * w +
                                  (w.transpose() * b.value() * w).transpose()));
        CHECK(std::abs(riemannian_distance(wa, wb) - dab) < 1e-8 * std::max(1.0, dab));

        // Inversion invariance.
        const SpdMatrix ia(0.5 * (a.value().inverse() + a.value().inverse().transpose()));
        const SpdMatrix ib(0.5 * (b.value().inverse() + b.value().inverse().transpose()));
        CHECK(std::abs(riemannian_distance(ia, ib) - dab) < 1e-8 * std::max(1.0, dab));
    }
}

TEST_SUITE_END();
