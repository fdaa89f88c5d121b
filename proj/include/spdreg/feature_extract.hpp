#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spdreg/spatial_filter.hpp"
#include "spdreg/spd_manifold.hpp"
#include "spdreg/trial.hpp"

namespace spdreg {

enum class FeatureSet { FS1 = 1, FS2 = 2, FS3 = 3 };

std::string feature_set_name(FeatureSet set);     // "fs1" / "fs2" / "fs3"
FeatureSet feature_set_from_name(const std::string& name);

struct FeatureVector {
    Vector values;
    FeatureSet feature_set = FeatureSet::FS1;

    int dim() const { return static_cast<int>(values.size()); }
};

/// Welch estimation settings. Defaults: 1-second windows at 250 Hz, 50%
/// overlap, theta (4-8 Hz) and alpha (8-13 Hz) bands.
struct PsdConfig {
    double sample_rate = 250.0;
    int window_length = 250;  // samples per segment
    double overlap = 0.5;     // fraction of the window
    std::vector<std::pair<double, double>> bands = {{4.0, 8.0}, {8.0, 13.0}};
};

/// Hamming-tapered Welch PSD, integrated over each band (bins whose centre
/// frequency lies in [low, high)), reported as 10*log10(power). Power clamps
/// at 1e-15 from below, so silence reads -150 dB.
std::vector<double> welch_band_power(std::span<const double> channel,
                                     const PsdConfig& cfg);

/// Raw powerband features: band powers per channel, channel-major
/// (values[bands*c + b]). dim = bands * channels (2C with the defaults).
FeatureVector extract_fs1(const Trial& trial, const PsdConfig& cfg);

/// Powerband features after spatial filtering; dim = bands * K * F.
FeatureVector extract_fs2(const Trial& trial, const SpatialFilterBank& bank,
                          const PsdConfig& cfg);

/// Band-integrated cross-spectral matrix per configured band, estimated with
/// the same segmentation, taper and normalization as welch_band_power. The
/// band power of any spatially filtered row w^T X equals the quadratic form
/// w^T CSD_b w (before the dB floor), so banks can be swapped cheaply against
/// a per-trial cache without touching the time series again.
std::vector<Matrix> welch_band_csd(const Trial& trial, const PsdConfig& cfg);

/// extract_fs2 against a cached cross-spectral estimate; agrees with the
/// direct path to numerical roundoff.
FeatureVector extract_fs2_from_csd(std::span<const Matrix> band_csd,
                                   const SpatialFilterBank& bank);

/// Per-trial spatial covariance (1/S) X X^T, optionally trimming an edge
/// fraction from both ends first (filter transients) and diagonally loading
/// the result. Throws IllConditionedError when the result is not positive
/// definite and shrinkage is zero.
SpdMatrix trial_covariance(const Trial& trial, double shrinkage = 0.0,
                           double edge_guard = 0.0);

/// Frozen tangent-space coordinates: a filter bank plus the intrinsic mean of
/// the filtered training covariances and its cached inverse square root.
class TangentSpaceModel {
public:
    static TangentSpaceModel fit(std::span<const Trial> trials,
                                 const SpatialFilterBank& bank,
                                 const MeanConfig& cfg = {},
                                 double shrinkage = 0.0, double edge_guard = 0.0);

    /// Same, from precomputed filtered-space covariances (the fast path when
    /// covariances are cached across folds).
    static TangentSpaceModel fit_from_covariances(std::span<const SpdMatrix> covs,
                                                  const SpatialFilterBank& bank,
                                                  const MeanConfig& cfg = {},
                                                  double shrinkage = 0.0,
                                                  double edge_guard = 0.0);

    const SpdMatrix& reference_mean() const { return reference_mean_; }
    const SpatialFilterBank& filter_bank() const { return bank_; }
    const Matrix& invsqrt() const { return invsqrt_; }
    double shrinkage() const { return shrinkage_; }
    double edge_guard() const { return edge_guard_; }

    nlohmann::json to_json() const;
    static TangentSpaceModel from_json(const nlohmann::json& j);

private:
    TangentSpaceModel(SpdMatrix mean, SpatialFilterBank bank, double shrinkage,
                      double edge_guard);

    SpdMatrix reference_mean_;
    SpatialFilterBank bank_;
    Matrix invsqrt_;
    double shrinkage_ = 0.0;
    double edge_guard_ = 0.0;
};

/// Tangent features: filter the trial, estimate its covariance, and take the
/// weighted upper triangle of logm(mean^{-1/2} cov mean^{-1/2}).
/// dim = KF(KF+1)/2; the vector's Euclidean norm equals the geodesic distance
/// between the covariance and the reference mean.
FeatureVector extract_fs3(const Trial& trial, const TangentSpaceModel& model);

/// Same from an already-computed filtered-space covariance.
FeatureVector extract_fs3_from_cov(const SpdMatrix& cov,
                                   const TangentSpaceModel& model);

/// A stack of feature vectors with their labels.
struct FeatureMatrix {
    Matrix values;  // n_trials x dim
    std::vector<double> labels;
    FeatureSet feature_set = FeatureSet::FS1;

    int n() const { return static_cast<int>(values.rows()); }
    int dim() const { return static_cast<int>(values.cols()); }
};

/// CSV with header `fs<X>_0,...,fs<X>_<d-1>,label`, one row per trial.
void write_features_csv(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix read_features_csv(const std::filesystem::path& path);

/// Compact binary form (magic SPDFTR01, f64 payload).
void write_features_bin(const std::filesystem::path& path, const FeatureMatrix& fm);
FeatureMatrix read_features_bin(const std::filesystem::path& path);

}  // namespace spdreg
