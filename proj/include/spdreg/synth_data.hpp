#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spdreg/preprocess.hpp"
#include "spdreg/trial.hpp"

namespace spdreg {

/// Knobs for the synthetic vigilance-session generator. A slow latent state
/// drives both the spatial covariance structure of the signal and the
/// reaction times, so recovered-vs-true performance can be measured exactly.
struct GeneratorConfig {
    int channels = 32;
    double sample_rate = 250.0;     // Hz
    double session_length = 600.0;  // seconds
    double event_rate = 6.0;        // mean inter-stimulus interval, seconds
    double coupling = 0.75;         // latent -> covariance strength, in [0, 1]
    double noise_floor = 1.0;       // master noise dial (sensor + rt noise)
    double latent_resolution = 0.25;  // seconds between latent-state samples
    std::uint64_t seed = 0;
};

/// What the generator knows that a real dataset never could.
struct GroundTruth {
    std::vector<double> latent_times;  // grid covering [0, session_length]
    std::vector<double> latent_path;   // latent state z at each grid time
    std::vector<double> true_rts;      // noiseless rt per emitted event
    Matrix mixing;                     // source -> channel matrix actually used
};

struct SynthSession {
    SessionRecording recording;
    GroundTruth truth;
};

SynthSession generate_session(const GeneratorConfig& cfg,
                              const std::string& subject_id = "synth");

/// One session per subject with per-subject mixing and rt baseline jitter,
/// each deterministic given (cfg.seed, subject index).
std::vector<SynthSession> generate_benchmark(const GeneratorConfig& cfg,
                                             int n_subjects);

/// Session file plus its events sidecar plus a truth sidecar with one
/// (time, z, true_rt) row per event.
void write_synth_session(const std::filesystem::path& path,
                         const SynthSession& session);

struct TruthRow {
    double time = 0.0;
    double z = 0.0;
    double true_rt = 0.0;
};

std::vector<TruthRow> read_truth_csv(const std::filesystem::path& path);

}  // namespace spdreg
