#include "spdreg/spatial_filter.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "spdreg/errors.hpp"
#include "spdreg/rng.hpp"
#include "test_support.hpp"

using namespace spdreg;

namespace {

std::vector<Trial> random_trials(Rng& rng, int n, int channels, int samples,
                                 double label_lo = 0.3, double label_hi = 1.2) {
    std::vector<Trial> trials;
    trials.reserve(n);
    for (int i = 0; i < n; ++i) {
        trials.push_back(Trial{test::random_gaussian(rng, channels, samples),
                               rng.uniform(label_lo, label_hi), 0.0});
    }
    return trials;
}

}  // namespace

TEST_SUITE("spatial_filter") {

TEST_CASE("percentile points follow the even grid") {
    std::vector<double> labels;
    for (int i = 0; i <= 100; ++i) labels.push_back(static_cast<double>(i));

    auto p3 = build_partition(labels, 3);
    REQUIRE(p3.percentile_points.size() == 3);
    CHECK(p3.percentile_points[0] == 25.0);
    CHECK(p3.percentile_points[1] == 50.0);
    CHECK(p3.percentile_points[2] == 75.0);

    auto p10 = build_partition(labels, 10);
    for (int k = 1; k <= 10; ++k) {
        CHECK(p10.percentile_points[k - 1] ==
              doctest::Approx(100.0 * k / 11.0).epsilon(1e-14));
    }

    // uniform grid 0..100: empirical percentiles land on the grid to within
    // one step
    CHECK(p3.percentile_values[0] == doctest::Approx(25.0).epsilon(0.04));
    CHECK(p3.percentile_values[1] == doctest::Approx(50.0).epsilon(0.02));
    CHECK(p3.percentile_values[2] == doctest::Approx(75.0).epsilon(0.015));
    CHECK(std::is_sorted(p3.percentile_values.begin(), p3.percentile_values.end()));
}

TEST_CASE("too few distinct labels") {
    std::vector<double> labels = {1.0, 1.0, 1.0, 2.0};
    CHECK_THROWS_AS(build_partition(labels, 3), DegenerateLabelsError);
    CHECK_THROWS_AS(build_partition(labels, 0), InvalidInputError);
    CHECK_THROWS_AS(build_partition({}, 2), InvalidInputError);
}

TEST_CASE("memberships form a partition of unity") {
    Rng rng(41);
    std::vector<double> labels;
    for (int i = 0; i < 200; ++i) labels.push_back(rng.uniform(0.2, 1.5));
    auto part = build_partition(labels, 5);

    // scan well past both anchors, shoulders included
    for (int i = 0; i <= 1000; ++i) {
        const double y = -0.3 + 2.4 * i / 1000.0;
        const Vector mu = part.memberships(y);
        CHECK(mu.sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(mu.minCoeff() >= 0.0);
        CHECK(mu.maxCoeff() <= 1.0 + 1e-15);
    }

    // apex of each class has full membership
    for (int k = 0; k < 5; ++k) {
        const Vector mu = part.memberships(part.percentile_values[k]);
        CHECK(mu(k) == doctest::Approx(1.0).epsilon(1e-12));
    }

    // halfway between adjacent anchors the two classes split evenly
    const double mid = 0.5 * (part.percentile_values[1] + part.percentile_values[2]);
    const Vector mu = part.memberships(mid);
    CHECK(mu(1) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(mu(2) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("percentile values scale with the labels") {
    Rng rng(42);
    std::vector<double> labels, scaled;
    const double c = 3.7;
    for (int i = 0; i < 80; ++i) {
        labels.push_back(rng.uniform(0.1, 2.0));
        scaled.push_back(c * labels.back());
    }
    auto a = build_partition(labels, 4);
    auto b = build_partition(scaled, 4);
    for (int k = 0; k < 4; ++k) {
        CHECK(b.percentile_values[k] ==
              doctest::Approx(c * a.percentile_values[k]).epsilon(1e-12));
    }
}

TEST_CASE("uniform weights give the arithmetic scatter mean") {
    Rng rng(43);
    auto trials = random_trials(rng, 8, 4, 50);
    // single class: membership is 1 everywhere
    auto part = build_partition(std::vector<double>{0.1, 0.5, 0.9}, 1);
    auto covs = class_covariances(trials, part);
    REQUIRE(covs.size() == 1);

    Matrix expect = Matrix::Zero(4, 4);
    for (const auto& t : trials) expect += t.data * t.data.transpose();
    expect /= static_cast<double>(trials.size());
    CHECK((covs[0].value() - expect).norm() <= 1e-12 * expect.norm());
}

TEST_CASE("single trial fills every supported class") {
    Rng rng(44);
    std::vector<double> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(rng.uniform(0.0, 1.0));
    auto part = build_partition(labels, 2);

    Trial t{test::random_gaussian(rng, 3, 60),
            0.5 * (part.percentile_values[0] + part.percentile_values[1]), 0.0};
    auto covs = class_covariances(std::vector<Trial>{t}, part);
    const Matrix scatter = t.data * t.data.transpose();
    for (const auto& cov : covs) {
        CHECK((cov.value() - scatter).norm() <= 1e-12 * scatter.norm());
    }
}

TEST_CASE("crisp memberships pick out their own trials") {
    Rng rng(45);
    std::vector<double> labels;
    for (int i = 0; i < 50; ++i) labels.push_back(rng.uniform(0.0, 1.0));
    auto part = build_partition(labels, 2);

    // trials sitting exactly on the anchors have membership (1,0) and (0,1)
    std::vector<Trial> trials;
    trials.push_back(Trial{test::random_gaussian(rng, 3, 40),
                           part.percentile_values[0], 0.0});
    trials.push_back(Trial{test::random_gaussian(rng, 3, 40),
                           part.percentile_values[1], 0.0});
    auto covs = class_covariances(trials, part);
    const Matrix s0 = trials[0].data * trials[0].data.transpose();
    const Matrix s1 = trials[1].data * trials[1].data.transpose();
    CHECK((covs[0].value() - s0).norm() <= 1e-12 * s0.norm());
    CHECK((covs[1].value() - s1).norm() <= 1e-12 * s1.norm());
}

TEST_CASE("class without support raises") {
    Rng rng(46);
    std::vector<double> labels;
    for (int i = 0; i < 50; ++i) labels.push_back(rng.uniform(0.0, 1.0));
    auto part = build_partition(labels, 2);

    // every trial at or below the first anchor: class 2 gets zero weight
    std::vector<Trial> trials;
    for (int i = 0; i < 5; ++i) {
        trials.push_back(Trial{test::random_gaussian(rng, 3, 40),
                               part.percentile_values[0] - 0.01 * i, 0.0});
    }
    CHECK_THROWS_AS(class_covariances(trials, part), EmptyClassError);
}

TEST_CASE("rank-deficient trials need shrinkage") {
    Rng rng(47);
    auto part = build_partition(std::vector<double>{0.1, 0.5, 0.9}, 1);
    // 4 channels but only 2 samples: scatter has rank <= 2
    std::vector<Trial> trials{Trial{test::random_gaussian(rng, 4, 2), 0.5, 0.0}};
    CHECK_THROWS_AS(class_covariances(trials, part), IllConditionedError);
    CHECK_NOTHROW(class_covariances(trials, part, 0.1));
}

TEST_CASE("diagonal pencil anchor") {
    Matrix a = Vector::Constant(2, 1.0).asDiagonal();
    a(0, 0) = 4.0;
    std::vector<SpdMatrix> covs{SpdMatrix{a}, SpdMatrix{Matrix::Identity(2, 2)}};
    auto bank = solve_filters(covs, 1);

    REQUIRE(bank.weights.cols() == 2);
    // class 1: ratio v'diag(4,1)v / v'Iv maximized by e1 with value 4
    CHECK(bank.eigenvalues[0][0] == doctest::Approx(4.0).epsilon(1e-10));
    Vector v = bank.weights.col(0);
    CHECK(std::abs(v(1)) <= 1e-8 * std::abs(v(0)));
    CHECK(v(0) > 0.0);
    // class 2: ratio v'Iv / v'diag(4,1)v maximized by e2 with value 1
    CHECK(bank.eigenvalues[1][0] == doctest::Approx(1.0).epsilon(1e-10));
    Vector w = bank.weights.col(1);
    CHECK(std::abs(w(0)) <= 1e-8 * std::abs(w(1)));
    CHECK(w(1) > 0.0);
}

TEST_CASE("identical class covariances give unit ratios") {
    Rng rng(48);
    const SpdMatrix a = test::random_spd(rng, 5);
    auto bank = solve_filters({a, a}, 5);
    for (const auto& block : bank.eigenvalues) {
        for (double ev : block) CHECK(ev == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("filters satisfy the generalized eigen-equation") {
    Rng rng(49);
    auto trials = random_trials(rng, 60, 6, 80);
    std::vector<double> labels;
    for (const auto& t : trials) labels.push_back(t.label);
    auto part = build_partition(labels, 3);
    auto covs = class_covariances(trials, part);
    auto bank = solve_filters(covs, 6);

    const int k = 3, f = 6;
    for (int c = 0; c < k; ++c) {
        Matrix rest = Matrix::Zero(6, 6);
        for (int i = 0; i < k; ++i) {
            if (i != c) rest += covs[i].value();
        }
        // nonincreasing within each block
        for (int j = 1; j < f; ++j) {
            CHECK(bank.eigenvalues[c][j] <= bank.eigenvalues[c][j - 1] + 1e-12);
        }
        for (int j = 0; j < f; ++j) {
            const Vector v = bank.weights.col(c * f + j);
            const double lambda = bank.eigenvalues[c][j];
            const Vector av = covs[c].value() * v;
            const Vector bv = rest * v;
            const double resid = (av - lambda * bv).norm();
            CHECK(resid <= 1e-8 * std::max(av.norm(), std::abs(lambda) * bv.norm()));
            // attained Rayleigh ratio matches the stored eigenvalue
            const double ratio = v.dot(av) / v.dot(bv);
            CHECK(ratio == doctest::Approx(lambda).epsilon(1e-8));
            // sign convention: first non-negligible component positive
            const double amax = v.cwiseAbs().maxCoeff();
            for (int r = 0; r < 6; ++r) {
                if (std::abs(v(r)) > 1e-12 * amax) {
                    CHECK(v(r) > 0.0);
                    break;
                }
            }
        }
    }

    // deterministic: the same inputs reproduce the same weights bit for bit
    auto again = solve_filters(covs, 6);
    CHECK(again.weights == bank.weights);
}

TEST_CASE("solver input validation") {
    Rng rng(50);
    const SpdMatrix a = test::random_spd(rng, 3);
    CHECK_THROWS_AS(solve_filters({a}, 1), InvalidInputError);         // K < 2
    CHECK_THROWS_AS(solve_filters({a, a}, 4), InvalidInputError);      // F > C
    CHECK_THROWS_AS(solve_filters({a, a}, 0), InvalidInputError);
    CHECK_THROWS_AS(solve_filters({a, test::random_spd(rng, 4)}, 1), ShapeError);
}

TEST_CASE("near-singular rest-sum raises with a shrinkage hint") {
    Matrix tiny = Matrix::Identity(2, 2);
    tiny(1, 1) = 5e-14;
    std::vector<SpdMatrix> covs{SpdMatrix{Matrix::Identity(2, 2)}, SpdMatrix{tiny}};
    CHECK_THROWS_AS(solve_filters(covs, 1), IllConditionedError);
}

TEST_CASE("apply_filter is the plain projection") {
    Rng rng(51);
    SpatialFilterBank bank;
    bank.weights = test::random_gaussian(rng, 62, 30);
    bank.config = FilterConfig{3, 10};

    Trial t{test::random_gaussian(rng, 62, 1250), 0.8, 12.5};
    Trial out = apply_filter(bank, t);
    CHECK(out.channels() == 30);
    CHECK(out.samples() == 1250);
    CHECK(out.label == t.label);
    CHECK(out.onset_time == t.onset_time);

    // element-by-element oracle
    double worst = 0.0;
    for (int r = 0; r < 5; ++r) {
        for (int s = 0; s < 7; ++s) {
            double acc = 0.0;
            for (int c = 0; c < 62; ++c) acc += bank.weights(c, r) * t.data(c, s);
            worst = std::max(worst, std::abs(acc - out.data(r, s)));
        }
    }
    CHECK(worst <= 1e-12 * out.data.cwiseAbs().maxCoeff());

    // identity bank passes the trial through untouched
    SpatialFilterBank id;
    id.weights = Matrix::Identity(62, 62);
    Trial same = apply_filter(id, t);
    CHECK(same.data == t.data);

    Trial bad{test::random_gaussian(rng, 30, 100), 0.0, 0.0};
    CHECK_THROWS_AS(apply_filter(bank, bad), ShapeError);
}

TEST_CASE("filtered covariance equals the projected covariance") {
    Rng rng(52);
    auto trials = random_trials(rng, 40, 5, 120);
    auto bank = train_filter_bank(trials, FilterConfig{3, 2});

    const Trial& t = trials[7];
    const Trial filtered = apply_filter(bank, t);
    const double s = static_cast<double>(t.samples());
    const Matrix direct = filtered.data * filtered.data.transpose() / s;
    const Matrix projected =
        bank.weights.transpose() * (t.data * t.data.transpose() / s) * bank.weights;
    CHECK((direct - projected).norm() <= 1e-10 * projected.norm());
}

TEST_CASE("cached-scatter training matches trial training exactly") {
    Rng rng(57);
    auto trials = random_trials(rng, 35, 6, 90);
    std::vector<Matrix> scatters;
    std::vector<double> labels;
    for (const Trial& t : trials) {
        scatters.push_back(t.data * t.data.transpose());
        labels.push_back(t.label);
    }
    const auto direct = train_filter_bank(trials, FilterConfig{3, 2});
    const auto cached =
        train_filter_bank_from_scatters(scatters, labels, FilterConfig{3, 2});
    CHECK(direct.weights == cached.weights);
    CHECK(direct.partition.percentile_values == cached.partition.percentile_values);
    CHECK(direct.eigenvalues == cached.eigenvalues);

    Matrix bad = scatters.front().leftCols(3);
    std::vector<Matrix> ragged = {scatters[0], bad};
    std::vector<double> two = {labels[0], labels[1]};
    CHECK_THROWS_AS(
        class_covariances_from_scatters(ragged, two, direct.partition),
        ShapeError);
}

TEST_CASE("trained bank round-trips through JSON") {
    Rng rng(53);
    auto trials = random_trials(rng, 50, 6, 100);
    auto bank = train_filter_bank(trials, FilterConfig{3, 2});
    CHECK(bank.weights.rows() == 6);
    CHECK(bank.weights.cols() == 6);
    CHECK(bank.partition.k_classes == 3);

    auto j = bank.to_json();
    auto back = SpatialFilterBank::from_json(j);
    CHECK(back.weights == bank.weights);
    CHECK(back.eigenvalues == bank.eigenvalues);
    CHECK(back.config.k_classes == bank.config.k_classes);
    CHECK(back.config.filters_per_class == bank.config.filters_per_class);
    CHECK(back.partition.percentile_points == bank.partition.percentile_points);
    CHECK(back.partition.percentile_values == bank.partition.percentile_values);

    auto broken = j;
    broken.erase("weights");
    CHECK_THROWS_AS(SpatialFilterBank::from_json(broken), IoError);
}

}  // TEST_SUITE
