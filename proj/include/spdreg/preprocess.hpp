#pragma once

#include <span>
#include <string>
#include <vector>

#include "spdreg/trial.hpp"

namespace spdreg {

/// One behavioural event: stimulus onset time and the measured reaction time.
struct TimedRt {
    double time = 0.0;  // seconds from session start
    double rt = 0.0;    // seconds

    bool operator==(const TimedRt&) const = default;
};

/// A continuous multichannel recording with its event stream.
struct SessionRecording {
    double sample_rate = 250.0;
    Matrix continuous_data;        // channels x total samples
    std::vector<TimedRt> events;   // sorted by time
    std::string subject_id;

    int channels() const { return static_cast<int>(continuous_data.rows()); }
    long total_samples() const { return static_cast<long>(continuous_data.cols()); }
    double duration() const { return total_samples() / sample_rate; }
};

/// Per-subject reaction-time statistics; the outlier threshold is
/// mean + 3 * std with the sample (N-1) standard deviation.
struct RtStats {
    double mean = 0.0;
    double std = 0.0;
    double threshold = 0.0;

    static RtStats compute(std::span<const double> rts);
    static RtStats compute(std::span<const TimedRt> rts);
};

/// Keep exactly the events with rt <= stats.threshold, order preserved.
std::vector<TimedRt> remove_rt_outliers(std::span<const TimedRt> rts,
                                        const RtStats& stats);

/// Replace each rt by the mean of all rts whose time lies within
/// +-window_seconds/2 (inclusive) of its own. Windows truncate at the session
/// edges. Times must be sorted.
std::vector<TimedRt> smooth_rts(std::span<const TimedRt> rts,
                                double window_seconds);

/// Default windowed-sinc filter order: 2 * round(1.5 * fs / low_edge_hz),
/// i.e. three periods of the low edge, forced even so the group delay is an
/// integer number of samples (750 at fs 250 Hz with a 1 Hz edge).
int default_fir_order(double low_hz, double sample_rate);

/// Hamming-windowed-sinc band-pass taps (order + 1 of them, order even). The
/// taps are adjusted to sum exactly to zero, so the DC gain vanishes.
std::vector<double> design_bandpass(double low_hz, double high_hz, int order,
                                    double sample_rate);

/// Apply the band-pass per channel with group-delay compensation (zero
/// phase), then remove each row's residual mean. order = 0 picks the default.
Trial bandpass_trial(const Trial& trial, double low_hz, double high_hz,
                     double sample_rate, int order = 0);

struct EpochResult {
    std::vector<Trial> trials;
    int skipped = 0;  // events without enough history (or data) for a full epoch
};

/// Cut one trial per event, covering [t - trial_length, t) in samples. Labels
/// come from the events' rt values; events too early or extending past the
/// recording are skipped and counted.
EpochResult epoch_session(const SessionRecording& rec, double trial_length);

/// Full conditioning pipeline for one session: drop rt outliers against the
/// subject-level stats, smooth the survivors with a centred moving average,
/// epoch, and band-pass each trial.
struct PreprocessConfig {
    double band_low_hz = 1.0;
    double band_high_hz = 20.0;
    int fir_order = 0;           // 0 = default_fir_order
    double smooth_window_s = 60.0;
    double trial_length_s = 5.0;
};

EpochResult preprocess_session(const SessionRecording& rec, const RtStats& stats,
                               const PreprocessConfig& cfg = {});

}  // namespace spdreg
