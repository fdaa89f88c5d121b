#include "spdreg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fft_utils.hpp"
#include "spdreg/errors.hpp"

namespace spdreg {

namespace {

void check_sorted(std::span<const TimedRt> rts) {
    for (std::size_t i = 1; i < rts.size(); ++i) {
        if (rts[i].time < rts[i - 1].time) {
            throw InvalidInputError("event times are not sorted");
        }
    }
}

double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = std::numbers::pi * x;
    return std::sin(px) / px;
}

}  // namespace

RtStats RtStats::compute(std::span<const double> rts) {
    if (rts.empty()) throw InvalidInputError("no reaction times given");
    const auto n = static_cast<double>(rts.size());
    double mean = 0.0;
    for (double rt : rts) {
        if (!std::isfinite(rt)) throw InvalidInputError("reaction time is not finite");
        mean += rt;
    }
    mean /= n;
    double var = 0.0;
    if (rts.size() > 1) {
        for (double rt : rts) var += (rt - mean) * (rt - mean);
        var /= n - 1.0;
    }
    RtStats stats;
    stats.mean = mean;
    stats.std = std::sqrt(var);
    stats.threshold = mean + 3.0 * stats.std;
    return stats;
}

RtStats RtStats::compute(std::span<const TimedRt> rts) {
    std::vector<double> values;
    values.reserve(rts.size());
    for (const TimedRt& e : rts) values.push_back(e.rt);
    return compute(values);
}

std::vector<TimedRt> remove_rt_outliers(std::span<const TimedRt> rts,
                                        const RtStats& stats) {
    std::vector<TimedRt> kept;
    kept.reserve(rts.size());
    for (const TimedRt& e : rts) {
        if (e.rt <= stats.threshold) kept.push_back(e);
    }
    return kept;
}

std::vector<TimedRt> smooth_rts(std::span<const TimedRt> rts,
                                double window_seconds) {
    if (window_seconds <= 0.0) throw InvalidInputError("window must be positive");
    check_sorted(rts);
    const double half = window_seconds / 2.0;
    std::vector<TimedRt> out;
    out.reserve(rts.size());
    std::size_t lo = 0, hi = 0;  // [lo, hi) = entries within the window
    for (const TimedRt& e : rts) {
        while (lo < rts.size() && rts[lo].time < e.time - half) ++lo;
        if (hi < lo) hi = lo;
        while (hi < rts.size() && rts[hi].time <= e.time + half) ++hi;
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) sum += rts[i].rt;
        out.push_back(TimedRt{e.time, sum / static_cast<double>(hi - lo)});
    }
    return out;
}

int default_fir_order(double low_hz, double sample_rate) {
    if (low_hz <= 0.0 || sample_rate <= 0.0) {
        throw InvalidInputError("band edge and sample rate must be positive");
    }
    return 2 * static_cast<int>(std::lround(1.5 * sample_rate / low_hz));
}

std::vector<double> design_bandpass(double low_hz, double high_hz, int order,
                                    double sample_rate) {
    const double nyquist = sample_rate / 2.0;
    if (!(low_hz > 0.0) || !(high_hz < nyquist) || !(low_hz < high_hz)) {
        std::ostringstream msg;
        msg << "band [" << low_hz << ", " << high_hz
            << "] Hz must satisfy 0 < low < high < " << nyquist << " (Nyquist)";
        throw InvalidBandError(msg.str());
    }
    if (order < 2 || order % 2 != 0) {
        throw InvalidInputError("FIR order must be even and at least 2");
    }

    const double fl = low_hz / sample_rate;   // normalized to the sample rate
    const double fh = high_hz / sample_rate;
    const int taps = order + 1;
    const double mid = order / 2.0;
    std::vector<double> h(static_cast<std::size_t>(taps));
    double sum = 0.0;
    for (int n = 0; n < taps; ++n) {
        const double k = n - mid;
        const double ideal = 2.0 * fh * sinc(2.0 * fh * k) - 2.0 * fl * sinc(2.0 * fl * k);
        const double window =
            0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / order);
        h[n] = ideal * window;
        sum += h[n];
    }
    // force the DC gain to exactly zero
    const double adjust = sum / taps;
    for (double& v : h) v -= adjust;
    return h;
}

Trial bandpass_trial(const Trial& trial, double low_hz, double high_hz,
                     double sample_rate, int order) {
    if (order == 0) order = default_fir_order(low_hz, sample_rate);
    const std::vector<double> taps =
        design_bandpass(low_hz, high_hz, order, sample_rate);

    const int samples = trial.samples();
    if (samples < 1) throw InvalidInputError("trial has no samples");
    // edge-replicate by half the order so every output sample sees the full
    // kernel; the zero-sum taps then cancel DC exactly even at the edges
    const int pad = order / 2;
    const int padded = samples + 2 * pad;
    const int nfft = detail::next_fast_size(padded + order);
    const auto kernel = detail::rfft(taps, nfft);

    Trial out;
    out.label = trial.label;
    out.onset_time = trial.onset_time;
    out.data.resize(trial.channels(), samples);
    std::vector<double> row(static_cast<std::size_t>(padded));
    for (int c = 0; c < trial.channels(); ++c) {
        for (int s = 0; s < pad; ++s) row[s] = trial.data(c, 0);
        for (int s = 0; s < samples; ++s) row[pad + s] = trial.data(c, s);
        for (int s = 0; s < pad; ++s) row[pad + samples + s] = trial.data(c, samples - 1);
        auto spec = detail::rfft(row, nfft);
        for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= kernel[i];
        const std::vector<double> full = detail::irfft(spec, nfft);
        // group-delay compensation lands sample s at full[order + s]; zero the
        // residual mean afterwards
        double mean = 0.0;
        for (int s = 0; s < samples; ++s) mean += full[order + s];
        mean /= samples;
        for (int s = 0; s < samples; ++s) out.data(c, s) = full[order + s] - mean;
    }
    return out;
}

namespace {

EpochResult epoch_events(const Matrix& data, double sample_rate,
                         std::span<const TimedRt> events, double trial_length) {
    if (trial_length <= 0.0) throw InvalidInputError("trial length must be positive");
    const double exact = trial_length * sample_rate;
    const long count = std::lround(exact);
    if (std::abs(exact - static_cast<double>(count)) > 1e-9 || count < 1) {
        std::ostringstream msg;
        msg << "trial length " << trial_length << " s at " << sample_rate
            << " Hz is not an integer sample count";
        throw InvalidInputError(msg.str());
    }
    check_sorted(events);

    EpochResult result;
    for (const TimedRt& event : events) {
        if (!(event.rt > 0.0)) {
            throw InvalidInputError("event has a non-positive reaction time label");
        }
        const long end = std::lround(event.time * sample_rate);
        const long start = end - count;
        if (start < 0 || end > static_cast<long>(data.cols())) {
            ++result.skipped;
            continue;
        }
        Trial trial;
        trial.data = data.middleCols(start, count);
        trial.label = event.rt;
        trial.onset_time = event.time;
        result.trials.push_back(std::move(trial));
    }
    return result;
}

}  // namespace

EpochResult epoch_session(const SessionRecording& rec, double trial_length) {
    return epoch_events(rec.continuous_data, rec.sample_rate,
                        std::span<const TimedRt>(rec.events), trial_length);
}

EpochResult preprocess_session(const SessionRecording& rec, const RtStats& stats,
                               const PreprocessConfig& cfg) {
    const std::vector<TimedRt> kept =
        remove_rt_outliers(std::span<const TimedRt>(rec.events), stats);
    const std::vector<TimedRt> smoothed = smooth_rts(kept, cfg.smooth_window_s);

    EpochResult epochs = epoch_events(rec.continuous_data, rec.sample_rate,
                                      smoothed, cfg.trial_length_s);
    for (Trial& trial : epochs.trials) {
        trial = bandpass_trial(trial, cfg.band_low_hz, cfg.band_high_hz,
                               rec.sample_rate, cfg.fir_order);
    }
    return epochs;
}

}  // namespace spdreg
