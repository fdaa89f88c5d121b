#include "spdreg/feature_extract.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "fft_utils.hpp"
#include "spdreg/errors.hpp"

namespace spdreg {

namespace {

constexpr double kPowerFloor = 1e-15;

void validate_psd_config(const PsdConfig& cfg) {
    if (!(cfg.sample_rate > 0.0)) throw InvalidInputError("sample rate must be positive");
    if (cfg.window_length < 2) throw InvalidInputError("window length must be at least 2");
    if (!(cfg.overlap >= 0.0 && cfg.overlap < 1.0)) {
        throw InvalidInputError("overlap must lie in [0, 1)");
    }
    if (cfg.bands.empty()) throw InvalidInputError("no frequency bands configured");
    const double nyquist = cfg.sample_rate / 2.0;
    for (const auto& [low, high] : cfg.bands) {
        if (!(low >= 0.0 && low < high && high <= nyquist)) {
            std::ostringstream msg;
            msg << "band [" << low << ", " << high
                << "] Hz must satisfy 0 <= low < high <= " << nyquist << " (Nyquist)";
            throw InvalidBandError(msg.str());
        }
    }
}

std::vector<double> row_as_vector(const Matrix& data, int row) {
    std::vector<double> out(static_cast<std::size_t>(data.cols()));
    for (Eigen::Index c = 0; c < data.cols(); ++c) out[c] = data(row, c);
    return out;
}

FeatureVector band_power_features(const Matrix& data, const PsdConfig& cfg,
                                  FeatureSet tag) {
    const auto n_bands = static_cast<int>(cfg.bands.size());
    FeatureVector fv;
    fv.feature_set = tag;
    fv.values.resize(n_bands * data.rows());
    for (Eigen::Index c = 0; c < data.rows(); ++c) {
        const auto powers =
            welch_band_power(row_as_vector(data, static_cast<int>(c)), cfg);
        for (int b = 0; b < n_bands; ++b) fv.values(n_bands * c + b) = powers[b];
    }
    return fv;
}

}  // namespace

std::string feature_set_name(FeatureSet set) {
    switch (set) {
        case FeatureSet::FS1: return "fs1";
        case FeatureSet::FS2: return "fs2";
        case FeatureSet::FS3: return "fs3";
    }
    throw InvalidInputError("unknown feature set tag");
}

FeatureSet feature_set_from_name(const std::string& name) {
    if (name == "fs1") return FeatureSet::FS1;
    if (name == "fs2") return FeatureSet::FS2;
    if (name == "fs3") return FeatureSet::FS3;
    throw InvalidInputError("unknown feature set name: " + name);
}

std::vector<double> welch_band_power(std::span<const double> channel,
                                     const PsdConfig& cfg) {
    validate_psd_config(cfg);
    const int w = cfg.window_length;
    if (static_cast<int>(channel.size()) < w) {
        std::ostringstream msg;
        msg << "signal of " << channel.size()
            << " samples is shorter than the Welch window (" << w << ")";
        throw InvalidInputError(msg.str());
    }
    int hop = w - static_cast<int>(std::lround(cfg.overlap * w));
    if (hop < 1) hop = 1;

    // periodic Hamming taper and its power for density normalization
    std::vector<double> window(static_cast<std::size_t>(w));
    double u = 0.0;
    for (int n = 0; n < w; ++n) {
        window[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / w);
        u += window[n] * window[n];
    }

    const int n_bins = w / 2 + 1;
    std::vector<double> psd(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> segment(static_cast<std::size_t>(w));
    int n_segments = 0;
    for (int start = 0; start + w <= static_cast<int>(channel.size()); start += hop) {
        for (int n = 0; n < w; ++n) segment[n] = channel[start + n] * window[n];
        const auto spectrum = detail::rfft(segment, w);
        for (int i = 0; i < n_bins; ++i) {
            double p = std::norm(spectrum[i]) / (cfg.sample_rate * u);
            const bool interior = i > 0 && !(w % 2 == 0 && i == n_bins - 1);
            if (interior) p *= 2.0;  // one-sided density
            psd[i] += p;
        }
        ++n_segments;
    }
    for (double& p : psd) p /= n_segments;

    const double df = cfg.sample_rate / w;
    std::vector<double> powers;
    powers.reserve(cfg.bands.size());
    for (const auto& [low, high] : cfg.bands) {
        double total = 0.0;
        for (int i = 0; i < n_bins; ++i) {
            const double freq = i * df;
            if (freq >= low && freq < high) total += psd[i] * df;
        }
        powers.push_back(10.0 * std::log10(std::max(total, kPowerFloor)));
    }
    return powers;
}

FeatureVector extract_fs1(const Trial& trial, const PsdConfig& cfg) {
    return band_power_features(trial.data, cfg, FeatureSet::FS1);
}

FeatureVector extract_fs2(const Trial& trial, const SpatialFilterBank& bank,
                          const PsdConfig& cfg) {
    const Trial filtered = apply_filter(bank, trial);
    return band_power_features(filtered.data, cfg, FeatureSet::FS2);
}

std::vector<Matrix> welch_band_csd(const Trial& trial, const PsdConfig& cfg) {
    validate_psd_config(cfg);
    const int w = cfg.window_length;
    const int channels = trial.channels();
    if (trial.samples() < w) {
        std::ostringstream msg;
        msg << "signal of " << trial.samples()
            << " samples is shorter than the Welch window (" << w << ")";
        throw InvalidInputError(msg.str());
    }
    int hop = w - static_cast<int>(std::lround(cfg.overlap * w));
    if (hop < 1) hop = 1;

    std::vector<double> window(static_cast<std::size_t>(w));
    double u = 0.0;
    for (int n = 0; n < w; ++n) {
        window[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / w);
        u += window[n] * window[n];
    }

    const int n_bins = w / 2 + 1;
    const double df = cfg.sample_rate / w;
    const auto n_bands = cfg.bands.size();

    // bins per band, split by the one-sided doubling factor
    std::vector<std::vector<int>> interior_bins(n_bands), edge_bins(n_bands);
    for (std::size_t b = 0; b < n_bands; ++b) {
        const auto [low, high] = cfg.bands[b];
        for (int i = 0; i < n_bins; ++i) {
            const double freq = i * df;
            if (freq >= low && freq < high) {
                const bool interior = i > 0 && !(w % 2 == 0 && i == n_bins - 1);
                (interior ? interior_bins[b] : edge_bins[b]).push_back(i);
            }
        }
    }

    std::vector<Matrix> doubled(n_bands, Matrix::Zero(channels, channels));
    std::vector<Matrix> single(n_bands, Matrix::Zero(channels, channels));
    Matrix re(channels, n_bins), im(channels, n_bins);
    std::vector<double> segment(static_cast<std::size_t>(w));
    int n_segments = 0;
    for (int start = 0; start + w <= static_cast<int>(trial.samples());
         start += hop) {
        for (int c = 0; c < channels; ++c) {
            for (int n = 0; n < w; ++n) segment[n] = trial.data(c, start + n) * window[n];
            const auto spectrum = detail::rfft(segment, w);
            for (int i = 0; i < n_bins; ++i) {
                re(c, i) = spectrum[i].real();
                im(c, i) = spectrum[i].imag();
            }
        }
        for (std::size_t b = 0; b < n_bands; ++b) {
            const auto accumulate = [&](const std::vector<int>& bins, Matrix& acc) {
                if (bins.empty()) return;
                Matrix cols(channels, 2 * bins.size());
                for (std::size_t k = 0; k < bins.size(); ++k) {
                    cols.col(static_cast<Eigen::Index>(2 * k)) = re.col(bins[k]);
                    cols.col(static_cast<Eigen::Index>(2 * k + 1)) = im.col(bins[k]);
                }
                acc.noalias() += cols * cols.transpose();
            };
            accumulate(interior_bins[b], doubled[b]);
            accumulate(edge_bins[b], single[b]);
        }
        ++n_segments;
    }

    const double scale = df / (cfg.sample_rate * u * n_segments);
    std::vector<Matrix> csd;
    csd.reserve(n_bands);
    for (std::size_t b = 0; b < n_bands; ++b) {
        csd.push_back((2.0 * doubled[b] + single[b]) * scale);
    }
    return csd;
}

FeatureVector extract_fs2_from_csd(std::span<const Matrix> band_csd,
                                   const SpatialFilterBank& bank) {
    if (band_csd.empty()) throw ShapeError("no cross-spectral bands given");
    for (const Matrix& csd : band_csd) {
        if (csd.rows() != bank.channels() || csd.cols() != bank.channels()) {
            throw ShapeError("cross-spectral matrix does not match the bank");
        }
    }
    const auto n_bands = static_cast<int>(band_csd.size());
    const int n_filters = bank.n_filters();
    FeatureVector fv;
    fv.feature_set = FeatureSet::FS2;
    fv.values.resize(n_bands * n_filters);
    for (int b = 0; b < n_bands; ++b) {
        const Vector powers =
            (bank.weights.transpose() * band_csd[b] * bank.weights).diagonal();
        for (int f = 0; f < n_filters; ++f) {
            fv.values(n_bands * f + b) =
                10.0 * std::log10(std::max(powers(f), kPowerFloor));
        }
    }
    return fv;
}

SpdMatrix trial_covariance(const Trial& trial, double shrinkage,
                           double edge_guard) {
    if (!(edge_guard >= 0.0 && edge_guard < 0.5)) {
        throw InvalidInputError("edge guard fraction must lie in [0, 0.5)");
    }
    const int samples = trial.samples();
    const int trim = static_cast<int>(edge_guard * samples);
    const int used = samples - 2 * trim;
    if (used < 1) throw InvalidInputError("trial has no samples after edge trim");
    const auto block = trial.data.middleCols(trim, used);
    const Matrix cov = block * block.transpose() / static_cast<double>(used);
    try {
        return SpdMatrix(cov, shrinkage);
    } catch (const InvalidInputError&) {
        std::ostringstream msg;
        msg << "trial covariance of size " << trial.channels() << " from " << used
            << " samples is not positive definite; apply shrinkage";
        throw IllConditionedError(msg.str());
    }
}

TangentSpaceModel::TangentSpaceModel(SpdMatrix mean, SpatialFilterBank bank,
                                     double shrinkage, double edge_guard)
    : reference_mean_(std::move(mean)),
      bank_(std::move(bank)),
      invsqrt_(matrix_sqrt_and_invsqrt(reference_mean_).second.value()),
      shrinkage_(shrinkage),
      edge_guard_(edge_guard) {}

TangentSpaceModel TangentSpaceModel::fit(std::span<const Trial> trials,
                                         const SpatialFilterBank& bank,
                                         const MeanConfig& cfg, double shrinkage,
                                         double edge_guard) {
    if (trials.empty()) throw InvalidInputError("no training trials given");
    std::vector<SpdMatrix> covs;
    covs.reserve(trials.size());
    for (const Trial& trial : trials) {
        covs.push_back(trial_covariance(apply_filter(bank, trial), shrinkage,
                                        edge_guard));
    }
    return fit_from_covariances(covs, bank, cfg, shrinkage, edge_guard);
}

TangentSpaceModel TangentSpaceModel::fit_from_covariances(
    std::span<const SpdMatrix> covs, const SpatialFilterBank& bank,
    const MeanConfig& cfg, double shrinkage, double edge_guard) {
    if (covs.empty()) throw InvalidInputError("no covariances given");
    return TangentSpaceModel(intrinsic_mean(covs, cfg), bank, shrinkage,
                             edge_guard);
}

FeatureVector extract_fs3(const Trial& trial, const TangentSpaceModel& model) {
    const Trial filtered = apply_filter(model.filter_bank(), trial);
    return extract_fs3_from_cov(
        trial_covariance(filtered, model.shrinkage(), model.edge_guard()), model);
}

FeatureVector extract_fs3_from_cov(const SpdMatrix& cov,
                                   const TangentSpaceModel& model) {
    if (cov.dim() != model.reference_mean().dim()) {
        throw ShapeError("covariance size does not match the tangent model");
    }
    const Matrix whitened = model.invsqrt() * cov.value() * model.invsqrt();
    FeatureVector fv;
    fv.feature_set = FeatureSet::FS3;
    fv.values = tangent_vectorize_whitened(whitened).entries();
    return fv;
}

nlohmann::json TangentSpaceModel::to_json() const {
    nlohmann::json j;
    j["filter_bank"] = bank_.to_json();
    j["shrinkage"] = shrinkage_;
    j["edge_guard"] = edge_guard_;
    const Matrix& m = reference_mean_.value();
    j["mean_dim"] = m.rows();
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    }
    j["reference_mean"] = flat;
    return j;
}

TangentSpaceModel TangentSpaceModel::from_json(const nlohmann::json& j) {
    try {
        SpatialFilterBank bank = SpatialFilterBank::from_json(j.at("filter_bank"));
        const auto dim = j.at("mean_dim").get<Eigen::Index>();
        const auto flat = j.at("reference_mean").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(flat.size()) != dim * dim) {
            throw IoError("tangent model mean length does not match its dimension");
        }
        Matrix mean(dim, dim);
        std::size_t pos = 0;
        for (Eigen::Index r = 0; r < dim; ++r) {
            for (Eigen::Index c = 0; c < dim; ++c) mean(r, c) = flat[pos++];
        }
        return TangentSpaceModel(SpdMatrix(mean), std::move(bank),
                                 j.at("shrinkage").get<double>(),
                                 j.at("edge_guard").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed tangent model JSON: ") + e.what());
    }
}

namespace {

constexpr std::array<char, 8> kFeatureMagic = {'S', 'P', 'D', 'F', 'T', 'R', '0', '1'};

}  // namespace

void write_features_csv(const std::filesystem::path& path, const FeatureMatrix& fm) {
    if (fm.n() != static_cast<int>(fm.labels.size())) {
        throw ShapeError("feature rows and labels disagree");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const std::string stem = feature_set_name(fm.feature_set);
    for (int d = 0; d < fm.dim(); ++d) out << stem << '_' << d << ',';
    out << "label\n";
    out.precision(std::numeric_limits<double>::max_digits10);
    for (int i = 0; i < fm.n(); ++i) {
        for (int d = 0; d < fm.dim(); ++d) out << fm.values(i, d) << ',';
        out << fm.labels[i] << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

FeatureMatrix read_features_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw IoError("empty feature CSV " + path.string());
    std::vector<std::string> names;
    std::istringstream hs(header);
    std::string field;
    while (std::getline(hs, field, ',')) names.push_back(field);
    if (names.size() < 2 || names.back() != "label" ||
        names.front().size() < 5 || names.front().substr(0, 2) != "fs") {
        throw IoError("unrecognized feature CSV header in " + path.string());
    }
    FeatureMatrix fm;
    fm.feature_set = feature_set_from_name(names.front().substr(0, 3));
    const auto dim = static_cast<int>(names.size()) - 1;

    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(dim + 1);
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) row.push_back(std::stod(field));
        if (static_cast<int>(row.size()) != dim + 1) {
            std::ostringstream msg;
            msg << path.string() << ":" << lineno << ": expected " << dim + 1
                << " fields, got " << row.size();
            throw IoError(msg.str());
        }
        rows.push_back(std::move(row));
    }
    fm.values.resize(static_cast<Eigen::Index>(rows.size()), dim);
    fm.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int d = 0; d < dim; ++d) fm.values(static_cast<Eigen::Index>(i), d) = rows[i][d];
        fm.labels.push_back(rows[i][dim]);
    }
    return fm;
}

void write_features_bin(const std::filesystem::path& path, const FeatureMatrix& fm) {
    if (fm.n() != static_cast<int>(fm.labels.size())) {
        throw ShapeError("feature rows and labels disagree");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(kFeatureMagic.data(), kFeatureMagic.size());
    const auto tag = static_cast<std::uint32_t>(fm.feature_set);
    const auto n = static_cast<std::uint32_t>(fm.n());
    const auto dim = static_cast<std::uint32_t>(fm.dim());
    out.write(reinterpret_cast<const char*>(&tag), sizeof(tag));
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    out.write(reinterpret_cast<const char*>(fm.labels.data()),
              static_cast<std::streamsize>(fm.labels.size() * sizeof(double)));
    std::vector<double> row(static_cast<std::size_t>(fm.dim()));
    for (int i = 0; i < fm.n(); ++i) {
        for (int d = 0; d < fm.dim(); ++d) row[d] = fm.values(i, d);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!out) throw IoError("write failed for " + path.string());
}

FeatureMatrix read_features_bin(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kFeatureMagic) {
        throw IoError("not a feature file (bad magic; expected SPDFTR01)");
    }
    std::uint32_t tag = 0, n = 0, dim = 0;
    in.read(reinterpret_cast<char*>(&tag), sizeof(tag));
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
    if (!in || tag < 1 || tag > 3 || dim == 0) {
        throw IoError("malformed feature file header in " + path.string());
    }
    FeatureMatrix fm;
    fm.feature_set = static_cast<FeatureSet>(tag);
    fm.labels.resize(n);
    in.read(reinterpret_cast<char*>(fm.labels.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    fm.values.resize(n, dim);
    std::vector<double> row(dim);
    for (std::uint32_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(dim * sizeof(double)));
        for (std::uint32_t d = 0; d < dim; ++d) fm.values(i, d) = row[d];
    }
    if (!in) throw IoError("truncated feature file " + path.string());
    return fm;
}

}  // namespace spdreg
