#pragma once

#include <Eigen/Dense>

namespace spdreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One multichannel EEG epoch (channels x samples) with its reaction-time
/// label in seconds and the stimulus onset time within the session.
struct Trial {
    Matrix data;             // channels x samples
    double label = 0.0;      // reaction time, seconds
    double onset_time = 0.0; // seconds from session start

    int channels() const { return static_cast<int>(data.rows()); }
    int samples() const { return static_cast<int>(data.cols()); }
};

}  // namespace spdreg
