#include "spdreg/feature_extract.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "spdreg/errors.hpp"
#include "spdreg/rng.hpp"
#include "test_support.hpp"

using namespace spdreg;
namespace fs = std::filesystem;

namespace {

std::vector<double> sine(int n, double freq_hz, double fs, double amplitude) {
    std::vector<double> x(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        x[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * i / fs);
    }
    return x;
}

SpatialFilterBank manual_bank(Rng& rng, int channels, int k, int f) {
    SpatialFilterBank bank;
    bank.weights = test::random_gaussian(rng, channels, k * f);
    bank.config = FilterConfig{k, f};
    return bank;
}

}  // namespace

TEST_SUITE("feature_extract") {

TEST_CASE("silence reads the dB floor") {
    std::vector<double> zeros(1250, 0.0);
    const auto powers = welch_band_power(zeros, PsdConfig{});
    REQUIRE(powers.size() == 2);
    CHECK(powers[0] == doctest::Approx(-150.0).epsilon(1e-12));
    CHECK(powers[1] == doctest::Approx(-150.0).epsilon(1e-12));
}

TEST_CASE("pure tone integrates to its analytic power") {
    // 10 Hz, amplitude 2: total power a^2/2 = 2, all inside the alpha band
    const auto x = sine(1250, 10.0, 250.0, 2.0);
    const auto powers = welch_band_power(x, PsdConfig{});
    const double alpha_linear = std::pow(10.0, powers[1] / 10.0);
    CHECK(alpha_linear == doctest::Approx(2.0).epsilon(0.02));
    CHECK(powers[0] <= -25.0);  // theta sees only window sidelobes
}

TEST_CASE("amplitude scaling shifts every band by 20 log10 c") {
    Rng rng(80);
    std::vector<double> x(1250);
    for (auto& v : x) v = rng.gaussian();
    const double c = 3.5;
    std::vector<double> scaled(x);
    for (auto& v : scaled) v *= c;

    const auto base = welch_band_power(x, PsdConfig{});
    const auto boosted = welch_band_power(scaled, PsdConfig{});
    const double shift = 20.0 * std::log10(c);
    for (std::size_t b = 0; b < base.size(); ++b) {
        CHECK(boosted[b] - base[b] == doctest::Approx(shift).epsilon(1e-9));
    }
}

TEST_CASE("psd configuration is validated") {
    std::vector<double> x(1250, 0.0);
    PsdConfig bad;
    bad.bands = {{100.0, 130.0}};  // beyond the 125 Hz Nyquist
    CHECK_THROWS_AS(welch_band_power(x, bad), InvalidBandError);
    bad.bands = {{8.0, 4.0}};
    CHECK_THROWS_AS(welch_band_power(x, bad), InvalidBandError);

    PsdConfig cfg;
    std::vector<double> tiny(100, 0.0);  // shorter than the 250-sample window
    CHECK_THROWS_AS(welch_band_power(tiny, cfg), InvalidInputError);
    cfg.overlap = 1.0;
    CHECK_THROWS_AS(welch_band_power(x, cfg), InvalidInputError);
}

TEST_CASE("fs1 concatenates per-channel band powers") {
    Rng rng(81);
    Trial t{test::random_gaussian(rng, 62, 1250), 0.5, 0.0};
    const auto fv = extract_fs1(t, PsdConfig{});
    CHECK(fv.dim() == 124);
    CHECK(fv.feature_set == FeatureSet::FS1);

    // per-channel composition oracle
    for (int c : {0, 17, 61}) {
        std::vector<double> row(1250);
        for (int s = 0; s < 1250; ++s) row[s] = t.data(c, s);
        const auto powers = welch_band_power(row, PsdConfig{});
        CHECK(fv.values(2 * c) == powers[0]);
        CHECK(fv.values(2 * c + 1) == powers[1]);
    }

    PsdConfig single;
    single.bands = {{4.0, 8.0}};
    Trial one{test::random_gaussian(rng, 1, 300), 0.5, 0.0};
    CHECK(extract_fs1(one, single).dim() == 1);
}

TEST_CASE("a loud channel dominates its own features") {
    Rng rng(82);
    Matrix data(3, 1250);
    const auto loud = sine(1250, 10.0, 250.0, 10.0);
    for (int s = 0; s < 1250; ++s) {
        data(0, s) = loud[s];
        data(1, s) = 0.01 * rng.gaussian();
        data(2, s) = 0.01 * rng.gaussian();
    }
    const auto fv = extract_fs1(Trial{data, 0.5, 0.0}, PsdConfig{});
    CHECK(fv.values(1) > fv.values(3) + 40.0);  // alpha of ch0 vs ch1, in dB
    CHECK(fv.values(1) > fv.values(5) + 40.0);
}

TEST_CASE("fs2 equals welch after filtering") {
    Rng rng(83);
    Trial t{test::random_gaussian(rng, 62, 1250), 0.5, 0.0};
    auto bank = manual_bank(rng, 62, 3, 10);
    const auto fv = extract_fs2(t, bank, PsdConfig{});
    CHECK(fv.dim() == 60);
    CHECK(fv.feature_set == FeatureSet::FS2);

    const Trial filtered = apply_filter(bank, t);
    const auto direct = extract_fs1(filtered, PsdConfig{});
    CHECK(fv.values == direct.values);

    // identity bank collapses fs2 onto fs1
    SpatialFilterBank id;
    id.weights = Matrix::Identity(62, 62);
    const auto via_id = extract_fs2(t, id, PsdConfig{});
    const auto plain = extract_fs1(t, PsdConfig{});
    CHECK(via_id.values == plain.values);
}

TEST_CASE("cross-spectral cache reproduces filtered band powers") {
    Rng rng(84);
    PsdConfig cfg;
    cfg.sample_rate = 100.0;
    cfg.window_length = 64;
    cfg.bands = {{0.0, 6.0}, {6.0, 13.0}};  // first band touches the DC bin
    Trial t{test::random_gaussian(rng, 6, 400), 0.4, 0.0};

    const std::vector<Matrix> csd = welch_band_csd(t, cfg);
    REQUIRE(csd.size() == 2);
    for (const Matrix& m : csd) {
        REQUIRE(m.rows() == 6);
        CHECK((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    }

    // diagonal = per-channel integrated band power (before the dB step)
    for (int c = 0; c < 6; ++c) {
        std::vector<double> row(400);
        for (int s = 0; s < 400; ++s) row[static_cast<std::size_t>(s)] = t.data(c, s);
        const auto powers = welch_band_power(row, cfg);
        for (std::size_t b = 0; b < 2; ++b) {
            const double db = 10.0 * std::log10(std::max(csd[b](c, c), 1e-15));
            CHECK(db == doctest::Approx(powers[b]).epsilon(1e-9));
        }
    }

    // quadratic form = band power of the projected row, for arbitrary w
    const Matrix w = test::random_gaussian(rng, 6, 1);
    std::vector<double> projected(400);
    for (int s = 0; s < 400; ++s) {
        projected[static_cast<std::size_t>(s)] = (w.transpose() * t.data.col(s))(0);
    }
    const auto proj_powers = welch_band_power(projected, cfg);
    for (std::size_t b = 0; b < 2; ++b) {
        const double quad = (w.transpose() * csd[b] * w)(0);
        const double db = 10.0 * std::log10(std::max(quad, 1e-15));
        CHECK(db == doctest::Approx(proj_powers[b]).epsilon(1e-9));
    }

    // full fs2 agreement against the direct path
    auto bank = manual_bank(rng, 6, 2, 2);
    const auto direct = extract_fs2(t, bank, cfg);
    const auto cached = extract_fs2_from_csd(csd, bank);
    CHECK(cached.feature_set == FeatureSet::FS2);
    REQUIRE(cached.dim() == direct.dim());
    for (int i = 0; i < direct.dim(); ++i) {
        CHECK(cached.values(i) == doctest::Approx(direct.values(i)).epsilon(1e-9));
    }

    const std::vector<Matrix> none;
    CHECK_THROWS_AS(extract_fs2_from_csd(none, bank), ShapeError);
    auto wrong = manual_bank(rng, 5, 2, 2);
    CHECK_THROWS_AS(extract_fs2_from_csd(csd, wrong), ShapeError);
    Trial short_trial{test::random_gaussian(rng, 3, 32), 0.4, 0.0};
    CHECK_THROWS_AS(welch_band_csd(short_trial, cfg), InvalidInputError);
}

TEST_CASE("powerband features shift exactly under amplitude scaling") {
    Rng rng(84);
    Trial t{test::random_gaussian(rng, 4, 1250), 0.5, 0.0};
    Trial scaled{2.5 * t.data, 0.5, 0.0};
    const double shift = 20.0 * std::log10(2.5);

    const auto a = extract_fs1(t, PsdConfig{});
    const auto b = extract_fs1(scaled, PsdConfig{});
    for (int d = 0; d < a.dim(); ++d) {
        CHECK(b.values(d) - a.values(d) == doctest::Approx(shift).epsilon(1e-9));
    }
}

TEST_CASE("trial covariance with and without the edge guard") {
    Rng rng(85);
    Trial t{test::random_gaussian(rng, 3, 50), 0.5, 0.0};
    const auto cov = trial_covariance(t);
    const Matrix direct = t.data * t.data.transpose() / 50.0;
    CHECK((cov.value() - direct).norm() <= 1e-12 * direct.norm());

    // 10% guard on 50 samples trims 5 from each end
    const auto guarded = trial_covariance(t, 0.0, 0.1);
    const auto mid = t.data.middleCols(5, 40);
    const Matrix expect = mid * mid.transpose() / 40.0;
    CHECK((guarded.value() - expect).norm() <= 1e-12 * expect.norm());

    Trial thin{test::random_gaussian(rng, 5, 3), 0.5, 0.0};  // rank 3 < 5
    CHECK_THROWS_AS(trial_covariance(thin), IllConditionedError);
    CHECK_NOTHROW(trial_covariance(thin, 0.1));
    CHECK_THROWS_AS(trial_covariance(t, 0.0, 0.6), InvalidInputError);
}

TEST_CASE("tangent model from identical trials") {
    Rng rng(86);
    auto bank = manual_bank(rng, 4, 2, 2);
    Trial t{test::random_gaussian(rng, 4, 120), 0.5, 0.0};
    const std::vector<Trial> trials(5, t);
    const auto model = TangentSpaceModel::fit(trials, bank);

    const auto cov = trial_covariance(apply_filter(bank, t));
    CHECK((model.reference_mean().value() - cov.value()).norm() <=
          1e-10 * cov.value().norm());

    // cached inverse square root actually whitens the mean
    const Matrix eye =
        model.invsqrt() * model.reference_mean().value() * model.invsqrt();
    CHECK((eye - Matrix::Identity(4, 4)).norm() <= 1e-8);
}

TEST_CASE("commuting covariances average to their geometric mean") {
    Rng rng(87);
    Vector a(3), b(3);
    a << 1.0, 4.0, 0.5;
    b << 9.0, 1.0, 2.0;
    const std::vector<SpdMatrix> covs{SpdMatrix{Matrix(a.asDiagonal())},
                                      SpdMatrix{Matrix(b.asDiagonal())}};
    const auto model =
        TangentSpaceModel::fit_from_covariances(covs, manual_bank(rng, 3, 1, 3));
    const Vector expect = (a.array() * b.array()).sqrt();
    CHECK((model.reference_mean().value() - Matrix(expect.asDiagonal())).norm() <=
          1e-8);
}

TEST_CASE("training tangent vectors average to nearly zero") {
    Rng rng(88);
    std::vector<SpdMatrix> covs;
    for (int i = 0; i < 30; ++i) covs.push_back(test::random_spd(rng, 6, 0.5, 2.0));
    const MeanConfig cfg;
    const auto model =
        TangentSpaceModel::fit_from_covariances(covs, manual_bank(rng, 6, 2, 3), cfg);

    Vector mean = Vector::Zero(tangent_dim(6));
    for (const auto& cov : covs) mean += extract_fs3_from_cov(cov, model).values;
    mean /= static_cast<double>(covs.size());
    CHECK(mean.norm() <= 10.0 * cfg.tolerance * std::numbers::sqrt2);
}

TEST_CASE("fs3 dimensions and the distance-norm identity") {
    Rng rng(89);
    auto bank = manual_bank(rng, 32, 10, 3);
    std::vector<Trial> trials;
    for (int i = 0; i < 20; ++i) {
        trials.push_back(Trial{test::random_gaussian(rng, 32, 200),
                               rng.uniform(0.3, 1.0), 0.0});
    }
    const auto model = TangentSpaceModel::fit(trials, bank);

    Trial probe{test::random_gaussian(rng, 32, 200), 0.6, 0.0};
    const auto fv = extract_fs3(probe, model);
    CHECK(fv.dim() == 465);  // 30 * 31 / 2
    CHECK(fv.feature_set == FeatureSet::FS3);

    const auto cov = trial_covariance(apply_filter(bank, probe));
    const double dist = riemannian_distance(model.reference_mean(), cov);
    CHECK(fv.values.norm() == doctest::Approx(dist).epsilon(1e-8));

    // the identity persists for a rescaled trial (the norm tracks the moved
    // covariance, not scale invariance)
    Trial scaled{3.0 * probe.data, 0.6, 0.0};
    const auto fv2 = extract_fs3(scaled, model);
    const auto cov2 = trial_covariance(apply_filter(bank, scaled));
    CHECK(fv2.values.norm() ==
          doctest::Approx(riemannian_distance(model.reference_mean(), cov2))
              .epsilon(1e-8));

    // bit-identical re-extraction
    const auto again = extract_fs3(probe, model);
    CHECK(again.values == fv.values);
}

TEST_CASE("fs3 of the reference itself vanishes") {
    Rng rng(90);
    const SpdMatrix a = test::random_spd(rng, 4);
    const std::vector<SpdMatrix> covs{a};
    const auto model =
        TangentSpaceModel::fit_from_covariances(covs, manual_bank(rng, 4, 2, 2));
    CHECK(extract_fs3_from_cov(a, model).values.norm() <= 1e-6);

    CHECK_THROWS_AS(extract_fs3_from_cov(test::random_spd(rng, 3), model),
                    ShapeError);
}

TEST_CASE("rank-deficient filtered trials need shrinkage") {
    Rng rng(91);
    auto bank = manual_bank(rng, 8, 3, 2);  // 6 virtual channels
    std::vector<Trial> trials;
    for (int i = 0; i < 10; ++i) {
        trials.push_back(Trial{test::random_gaussian(rng, 8, 100),
                               rng.uniform(0.3, 1.0), 0.0});
    }
    const auto model = TangentSpaceModel::fit(trials, bank);

    Trial thin{test::random_gaussian(rng, 8, 4), 0.5, 0.0};  // rank 4 < 6
    CHECK_THROWS_AS(extract_fs3(thin, model), IllConditionedError);

    const auto shrunk = TangentSpaceModel::fit(trials, bank, MeanConfig{}, 0.1);
    CHECK_NOTHROW(extract_fs3(thin, shrunk));
}

TEST_CASE("tangent model serializes through JSON") {
    Rng rng(92);
    auto bank = manual_bank(rng, 6, 2, 3);
    std::vector<Trial> trials;
    for (int i = 0; i < 15; ++i) {
        trials.push_back(Trial{test::random_gaussian(rng, 6, 80),
                               rng.uniform(0.3, 1.0), 0.0});
    }
    const auto model = TangentSpaceModel::fit(trials, bank, MeanConfig{}, 0.01, 0.1);
    const auto back = TangentSpaceModel::from_json(model.to_json());

    CHECK(back.reference_mean().value() == model.reference_mean().value());
    CHECK(back.invsqrt() == model.invsqrt());
    CHECK(back.shrinkage() == model.shrinkage());
    CHECK(back.edge_guard() == model.edge_guard());
    CHECK(back.filter_bank().weights == model.filter_bank().weights);

    Trial probe{test::random_gaussian(rng, 6, 80), 0.5, 0.0};
    CHECK(extract_fs3(probe, back).values == extract_fs3(probe, model).values);

    auto j = model.to_json();
    j.erase("reference_mean");
    CHECK_THROWS_AS(TangentSpaceModel::from_json(j), IoError);
}

TEST_CASE("feature matrices round-trip through CSV and binary") {
    Rng rng(93);
    FeatureMatrix fm;
    fm.feature_set = FeatureSet::FS2;
    fm.values = test::random_gaussian(rng, 7, 5);
    for (int i = 0; i < 7; ++i) fm.labels.push_back(rng.uniform(0.3, 1.0));

    const fs::path dir =
        fs::temp_directory_path() / ("spdreg_feat_" + std::to_string(::getpid()));
    fs::create_directories(dir);

    const fs::path csv = dir / "f.csv";
    write_features_csv(csv, fm);
    {
        std::ifstream in(csv);
        std::string header;
        std::getline(in, header);
        CHECK(header.substr(0, 10) == "fs2_0,fs2_");
        CHECK(header.find("label") != std::string::npos);
    }
    const auto from_csv = read_features_csv(csv);
    CHECK(from_csv.feature_set == FeatureSet::FS2);
    CHECK(from_csv.values == fm.values);
    CHECK(from_csv.labels == fm.labels);

    const fs::path bin = dir / "f.bin";
    write_features_bin(bin, fm);
    const auto from_bin = read_features_bin(bin);
    CHECK(from_bin.feature_set == FeatureSet::FS2);
    CHECK(from_bin.values == fm.values);
    CHECK(from_bin.labels == fm.labels);

    std::ofstream(dir / "bad.bin") << "nope";
    CHECK_THROWS_AS(read_features_bin(dir / "bad.bin"), IoError);
    CHECK_THROWS_AS(read_features_csv(dir / "missing.csv"), IoError);

    fs::remove_all(dir);
}

}  // TEST_SUITE
