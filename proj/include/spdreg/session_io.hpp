#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spdreg/preprocess.hpp"
#include "spdreg/trial.hpp"

namespace spdreg {

/// Binary container, magic "SPDREG01", little-endian:
///   magic[8], u32 channels, u64 samples, f64 sample_rate, u32 n_blocks,
///   u32 id_len, id bytes,
///   [n_blocks f64 labels, n_blocks f64 onsets]   (only when n_blocks >= 1)
///   sample data as f32 row-major, one channels x samples block per record.
/// n_blocks = 0 marks a continuous session (a single block); events then live
/// in a `<file>.events.csv` sidecar with header `onset_s,rt_s`.

void write_session(const std::filesystem::path& path, const SessionRecording& rec);
SessionRecording read_session(const std::filesystem::path& path);

struct TrialSet {
    std::vector<Trial> trials;
    double sample_rate = 250.0;
    std::string subject_id;
};

void write_trials(const std::filesystem::path& path, std::span<const Trial> trials,
                  double sample_rate, const std::string& subject_id);
TrialSet read_trials(const std::filesystem::path& path);

/// Sidecar path helpers: "<path>.events.csv" and "<path>.truth.csv".
std::filesystem::path events_sidecar(const std::filesystem::path& path);
std::filesystem::path truth_sidecar(const std::filesystem::path& path);

}  // namespace spdreg
