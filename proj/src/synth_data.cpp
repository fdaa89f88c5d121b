#include "spdreg/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "spdreg/errors.hpp"
#include "spdreg/rng.hpp"
#include "spdreg/session_io.hpp"

namespace spdreg {

namespace {

constexpr double kLatentTauS = 60.0;   // latent-state correlation time
constexpr double kOscRadius = 0.97;    // pole radius of the narrowband sources
constexpr double kAlphaHz = 10.0;
constexpr double kThetaHz = 6.0;
constexpr double kVarModKappa = 1.2;   // log-variance swing at full coupling
constexpr double kRotMax = std::numbers::pi / 3.0;
constexpr int kRotPairs = 12;           // orientation-coded planes (channel budget permitting)
constexpr double kAnisoMajor = 1.25;    // rotated-pair axis scales; weak per pair,
constexpr double kAnisoMinor = 0.75;    // the code is distributed across planes
constexpr double kSensorNoise = 0.10;  // channel white-noise std at floor 1.0
constexpr double kGainDriftStd = 0.15;   // log-gain std of slow electrode drift
constexpr double kGainDriftTauS = 4.0;   // drift decorrelates between trials
constexpr double kRtNoise = 0.05;      // rt observation noise std at floor 1.0
constexpr double kRtFloor = 0.15;
constexpr double kRtBase = 0.3;
constexpr double kRtGain = 0.4;
constexpr double kFirstOnsetS = 10.0;  // leave room for the longest epochs

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void validate(const GeneratorConfig& cfg) {
    if (cfg.channels < 1) throw InvalidInputError("channels must be positive");
    if (cfg.sample_rate <= 0 || cfg.session_length <= 0 || cfg.event_rate <= 0 ||
        cfg.latent_resolution <= 0) {
        throw InvalidInputError("rates and lengths must be positive");
    }
    if (cfg.coupling < 0.0 || cfg.coupling > 1.0) {
        throw InvalidInputError("coupling must lie in [0, 1]");
    }
    if (cfg.noise_floor < 0.0) {
        throw InvalidInputError("noise_floor must be nonnegative");
    }
}

// second-order resonator with unit stationary variance
struct Oscillator {
    double a1 = 0.0, a2 = 0.0, innovation = 1.0;
    double s1 = 0.0, s2 = 0.0;

    Oscillator() = default;
    Oscillator(double hz, double fs) {
        const double w = 2.0 * std::numbers::pi * hz / fs;
        const double r = kOscRadius;
        a1 = 2.0 * r * std::cos(w);
        a2 = -r * r;
        const double r2 = r * r;
        const double variance =
            (1.0 + r2) /
            ((1.0 - r2) * ((1.0 + r2) * (1.0 + r2) - 4.0 * r2 * std::cos(w) * std::cos(w)));
        innovation = 1.0 / std::sqrt(variance);
    }

    double step(double e) {
        const double v = a1 * s1 + a2 * s2 + innovation * e;
        s2 = s1;
        s1 = v;
        return v;
    }
};

// first-order coloured background with unit stationary variance
struct Background {
    double phi = 0.9, innovation = 1.0, state = 0.0;
    explicit Background(double p) : phi(p), innovation(std::sqrt(1.0 - p * p)) {}
    double step(double e) {
        state = phi * state + innovation * e;
        return state;
    }
};

struct SubjectParams {
    std::string id;
    std::uint64_t seed = 0;
    double rt_base = kRtBase;
    double rt_gain = kRtGain;
};

// Source layout, shrinking gracefully for tiny channel counts:
//   0            alpha oscillator, variance scaled up with the latent state
//   1            theta oscillator, variance scaled down
//   2..2+2P-1    anisotropic oscillator pairs rotated by the latent state,
//                alternating alpha/theta carriers and rotation sign
//   rest         first-order coloured background
// The rotated pairs put latent information into covariance *orientation*.
// Each plane is individually weak; the code is redundant across planes, so a
// full-covariance readout can pool all of them coherently while per-channel
// power only sees incoherent leakage through the mixing.
SynthSession generate(const GeneratorConfig& cfg, const SubjectParams& sub) {
    validate(cfg);
    Rng rng(sub.seed);

    const int c = cfg.channels;
    const auto n_samples =
        static_cast<Eigen::Index>(std::llround(cfg.session_length * cfg.sample_rate));

    // well-conditioned mixing: random rotation with mild per-channel gains
    Matrix gauss(c, c);
    for (int i = 0; i < c; ++i)
        for (int j = 0; j < c; ++j) gauss(i, j) = rng.gaussian();
    Eigen::HouseholderQR<Matrix> qr(gauss);
    Matrix mixing = qr.householderQ() * Matrix::Identity(c, c);
    for (int j = 0; j < c; ++j) mixing.col(j) *= rng.uniform(0.8, 1.2);

    const int n_pairs = std::max(0, std::min(kRotPairs, (c - 2) / 2));
    std::vector<Background> backgrounds;
    for (int k = 2 + 2 * n_pairs; k < c; ++k) {
        backgrounds.emplace_back(rng.uniform(0.85, 0.97));
    }

    // slow mean-reverting latent state on its own coarse grid
    const double res = cfg.latent_resolution;
    const auto n_latent =
        static_cast<int>(std::ceil(cfg.session_length / res - 1e-9)) + 1;
    const double decay = std::exp(-res / kLatentTauS);
    const double kick = std::sqrt(1.0 - decay * decay);
    GroundTruth truth;
    truth.latent_times.resize(n_latent);
    truth.latent_path.resize(n_latent);
    truth.latent_path[0] = rng.gaussian();
    truth.latent_times[0] = 0.0;
    for (int i = 1; i < n_latent; ++i) {
        truth.latent_times[i] = i * res;
        truth.latent_path[i] =
            decay * truth.latent_path[i - 1] + kick * rng.gaussian();
    }
    const auto latent_at = [&](double t) {
        const double pos = t / res;
        const int i0 = std::min(static_cast<int>(pos), n_latent - 2);
        const double frac = pos - i0;
        return truth.latent_path[i0] * (1.0 - frac) + truth.latent_path[i0 + 1] * frac;
    };

    // stimulus times: uniform inter-trial gaps centred on the configured mean
    const double half = std::min(4.0, cfg.event_rate - 0.5);
    SessionRecording rec;
    rec.sample_rate = cfg.sample_rate;
    rec.subject_id = sub.id;
    double t = kFirstOnsetS;
    while (t < cfg.session_length) {
        const double z = latent_at(t);
        const double clean = sub.rt_base + sub.rt_gain * sigmoid(z);
        const double observed =
            clean + kRtNoise * cfg.noise_floor * rng.gaussian();
        rec.events.push_back({t, std::max(observed, kRtFloor)});
        truth.true_rts.push_back(clean);
        t += rng.uniform(cfg.event_rate - half, cfg.event_rate + half);
    }

    Oscillator alpha_up(kAlphaHz, cfg.sample_rate);
    Oscillator theta_down(kThetaHz, cfg.sample_rate);
    std::vector<Oscillator> pair_major, pair_minor;
    for (int p = 0; p < n_pairs; ++p) {
        const double hz = (p % 2 == 0) ? kAlphaHz : kThetaHz;
        pair_major.emplace_back(hz, cfg.sample_rate);
        pair_minor.emplace_back(hz, cfg.sample_rate);
    }

    Matrix sources = Matrix::Zero(c, n_samples);
    const double g = cfg.coupling;
    for (Eigen::Index i = 0; i < n_samples; ++i) {
        const double m = std::tanh(latent_at(static_cast<double>(i) / cfg.sample_rate));
        const double swing = 0.5 * kVarModKappa * g * m;
        const double theta = kRotMax * g * m;
        const double cs = std::cos(theta), sn = std::sin(theta);
        for (int k = 0; k < c; ++k) {
            const double e = rng.gaussian();
            if (k >= 2 && k < 2 + 2 * n_pairs) {
                const int p = (k - 2) / 2;
                const double pcs = cs;
                const double psn = (p % 2 == 0) ? sn : -sn;
                if ((k - 2) % 2 == 0) {
                    const double a = kAnisoMajor * pair_major[p].step(e);
                    sources(k, i) = pcs * a;
                    sources(k + 1, i) = psn * a;
                } else {
                    const double b = kAnisoMinor * pair_minor[p].step(e);
                    sources(k - 1, i) -= psn * b;
                    sources(k, i) += pcs * b;
                }
                continue;
            }
            double v = 0.0;
            switch (k) {
                case 0: v = std::exp(swing) * alpha_up.step(e); break;
                case 1: v = std::exp(-swing) * theta_down.step(e); break;
                default:
                    v = backgrounds[static_cast<std::size_t>(k - 2 - 2 * n_pairs)].step(e);
                    break;
            }
            sources(k, i) = v;
        }
    }

    rec.continuous_data.noalias() = mixing * sources;

    // slow per-channel gain wander (electrode impedance drift): scales the
    // recorded signal, so absolute per-channel power is unreliable across
    // trials while the relative spatial structure stays informative
    const double gdecay = std::exp(-1.0 / (kGainDriftTauS * cfg.sample_rate));
    const double gkick = std::sqrt(1.0 - gdecay * gdecay);
    Vector drift(c);
    for (int k = 0; k < c; ++k) drift(k) = rng.gaussian();
    for (Eigen::Index i = 0; i < n_samples; ++i) {
        for (int k = 0; k < c; ++k) {
            drift(k) = gdecay * drift(k) + gkick * rng.gaussian();
            rec.continuous_data(k, i) *= std::exp(kGainDriftStd * drift(k));
        }
    }

    const double sensor = kSensorNoise * cfg.noise_floor;
    for (Eigen::Index i = 0; i < n_samples; ++i) {
        for (int k = 0; k < c; ++k) {
            rec.continuous_data(k, i) += sensor * rng.gaussian();
        }
    }

    truth.mixing = std::move(mixing);
    return {std::move(rec), std::move(truth)};
}

}  // namespace

SynthSession generate_session(const GeneratorConfig& cfg,
                              const std::string& subject_id) {
    SubjectParams sub;
    sub.id = subject_id;
    sub.seed = cfg.seed;
    return generate(cfg, sub);
}

std::vector<SynthSession> generate_benchmark(const GeneratorConfig& cfg,
                                             int n_subjects) {
    validate(cfg);
    if (n_subjects < 1) throw InvalidInputError("need at least one subject");
    constexpr double kGolden = 0.6180339887498949;
    std::vector<SynthSession> sessions;
    sessions.reserve(static_cast<std::size_t>(n_subjects));
    for (int s = 0; s < n_subjects; ++s) {
        SubjectParams sub;
        std::ostringstream id;
        id << "s" << (s + 1 < 10 ? "0" : "") << (s + 1);
        sub.id = id.str();
        sub.seed = hash_combine(cfg.seed, hash_string(sub.id));
        // low-discrepancy baseline spread: cohort mean rts cover roughly
        // 0.45-1.05 s, a > 2x ratio like real vigilance cohorts
        const double frac = std::fmod(0.5 + s * kGolden, 1.0);
        sub.rt_base = 0.25 + 0.6 * frac;
        sessions.push_back(generate(cfg, sub));
    }
    return sessions;
}

void write_synth_session(const std::filesystem::path& path,
                         const SynthSession& session) {
    write_session(path, session.recording);
    const auto truth_path = truth_sidecar(path);
    std::ofstream out(truth_path);
    if (!out) throw IoError("cannot write " + truth_path.string());
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "time,z,true_rt\n";
    const auto& events = session.recording.events;
    const auto& truth = session.truth;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const double t = events[i].time;
        const double res = truth.latent_times.size() > 1
                               ? truth.latent_times[1] - truth.latent_times[0]
                               : 1.0;
        const double pos = t / res;
        const auto i0 = std::min(static_cast<std::size_t>(pos),
                                 truth.latent_path.size() - 2);
        const double frac = pos - static_cast<double>(i0);
        const double z = truth.latent_path[i0] * (1.0 - frac) +
                         truth.latent_path[i0 + 1] * frac;
        out << t << "," << z << "," << truth.true_rts[i] << "\n";
    }
    if (!out.good()) throw IoError("failed writing " + truth_path.string());
}

std::vector<TruthRow> read_truth_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "time,z,true_rt") {
        throw IoError("bad truth header in " + path.string());
    }
    std::vector<TruthRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        TruthRow row;
        char c1 = 0, c2 = 0;
        if (!(ls >> row.time >> c1 >> row.z >> c2 >> row.true_rt) || c1 != ',' ||
            c2 != ',') {
            throw IoError("bad truth row in " + path.string());
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace spdreg
