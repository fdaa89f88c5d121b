#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "spdreg/feature_extract.hpp"
#include "spdreg/preprocess.hpp"
#include "spdreg/regression.hpp"
#include "spdreg/spatial_filter.hpp"
#include "spdreg/synth_data.hpp"

namespace spdreg {

/// Everything a repeated cross-validation experiment needs to be rerun
/// exactly: data, the (feature set x regressor) grid, fold/repeat counts, the
/// master seed, and per-feature-set filter shapes. Loadable from JSON (or the
/// TOML subset in config_io).
struct ExperimentSpec {
    std::vector<std::string> dataset_paths;
    std::vector<FeatureSet> feature_sets = {FeatureSet::FS1, FeatureSet::FS2,
                                            FeatureSet::FS3};
    std::vector<std::string> regressors = {"lasso", "knn"};
    int folds = 5;
    int repeats = 10;
    std::uint64_t seed = 0;
    std::map<FeatureSet, FilterConfig> filter_configs = {
        {FeatureSet::FS2, FilterConfig{3, 10}},
        {FeatureSet::FS3, FilterConfig{10, 3}}};
    double trial_length = 5.0;  // seconds
    double shrinkage = 0.0;
    double edge_guard = 0.0;
    PsdConfig psd = [] {
        PsdConfig p;
        p.window_length = 0;  // 0 = one second at the recording's sample rate
        return p;
    }();
    int knn_k = 5;
    int lasso_inner_folds = 5;
    int lasso_grid = 100;
    std::vector<int> sweep_filters;           // F sweep axis; at most one axis
    std::vector<double> sweep_trial_lengths;  // trial-length sweep axis

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentSpec from_json(const nlohmann::json& j);
};

struct RepeatMetrics {
    double rmse = 0.0;
    double cc = 0.0;
    bool degenerate = false;  // zero-variance predictions; cc forced to 0
};

/// One (subject, feature set, regressor) cell of the experiment grid.
struct CellResult {
    std::string subject_id;
    FeatureSet feature_set = FeatureSet::FS1;
    std::string regressor;
    double rmse = 0.0;  // mean over repeats
    double cc = 0.0;    // mean over repeats
    bool degenerate = false;
    std::vector<RepeatMetrics> per_repeat;
    std::vector<double> truth;  // labels in trial order, for prediction dumps
    std::vector<std::vector<double>> predictions;  // repeats x trials, trial order
    double train_time_s = 0.0;  // total fitting time across folds and repeats
    std::string error;          // sweep mode records per-cell failures here
};

/// Preprocessed trials for one subject plus everything reusable across folds:
/// labels, per-trial scatters (full and edge-guarded), and raw powerband
/// features, which depend on no fitted state.
struct SubjectData {
    std::string subject_id;
    double sample_rate = 250.0;
    std::vector<Trial> trials;
    std::vector<double> labels;
    std::vector<Matrix> scatters;          // X X^T over all samples
    std::vector<Matrix> guarded_scatters;  // same with the edge guard applied
    double guarded_samples = 0.0;          // divisor for the guarded scatters
    Matrix fs1;                            // trials x dim cached features
    std::vector<std::vector<Matrix>> band_csd;  // per trial, per band
    PsdConfig psd;                         // resolved (sample rate, window)
};

SubjectData prepare_subject(const SessionRecording& rec,
                            const ExperimentSpec& spec);

/// Parameters fitted from training folds only. fit_fold never sees held-out
/// rows, so anything reachable from a FittedFold is leakage-free by
/// construction; fingerprint() exposes every fitted byte for the canary test.
struct FittedFold {
    FeatureSet feature_set = FeatureSet::FS1;
    std::string regressor;
    std::optional<SpatialFilterBank> bank;
    std::optional<TangentSpaceModel> tangent;
    std::optional<LassoModel> lasso;
    std::optional<KnnModel> knn;

    std::string fingerprint() const;  // raw little-endian bytes of all params
};

FittedFold fit_fold(const SubjectData& data, std::span<const int> train_idx,
                    FeatureSet feature_set, const std::string& regressor,
                    const ExperimentSpec& spec);

std::vector<double> predict_fold(const FittedFold& fold, const SubjectData& data,
                                 std::span<const int> idx);

struct Metrics {
    double rmse = 0.0;
    double cc = 0.0;
    bool degenerate = false;
};

/// Pooled RMSE and Pearson correlation. Zero-variance predictions (or truth)
/// make the correlation undefined; it is reported as 0 with the degenerate
/// flag set so tables stay aggregatable.
Metrics compute_metrics(std::span<const double> truth,
                        std::span<const double> predictions);

/// Repeated k-fold cross-validation for one cell. Repeat r shuffles with seed
/// hash(spec.seed, subject_id, r), so subjects and repeats are independently
/// reproducible. Metrics are computed over each repeat's pooled held-out
/// predictions, then averaged across repeats.
CellResult run_cv(const SubjectData& data, const ExperimentSpec& spec,
                  FeatureSet feature_set, const std::string& regressor);

struct MatrixSummary {
    struct Average {
        FeatureSet feature_set = FeatureSet::FS1;
        std::string regressor;
        double rmse = 0.0;
        double cc = 0.0;
    };
    /// Percent change moving from the baseline set to the improved set,
    /// 100 * (improved / baseline - 1) of the cross-subject averages; negative
    /// rmse_pct and positive cc_pct mean the improved set wins.
    struct Improvement {
        std::string regressor;
        FeatureSet baseline = FeatureSet::FS1;
        FeatureSet improved = FeatureSet::FS1;
        double rmse_pct = 0.0;
        double cc_pct = 0.0;
    };
    std::vector<Average> averages;
    std::vector<Improvement> improvements;
};

MatrixSummary summarize_matrix(std::span<const CellResult> cells,
                               const ExperimentSpec& spec);

struct MatrixResult {
    std::vector<CellResult> cells;
    MatrixSummary summary;
};

/// Every (subject x feature set x regressor) cell; errors propagate.
MatrixResult run_matrix(std::span<const SubjectData> subjects,
                        const ExperimentSpec& spec);

/// results.csv, predictions/<cell>.csv, summary.json, and plot-data CSVs.
/// results.csv carries no timing, so identical specs give identical bytes.
void write_matrix_outputs(const std::filesystem::path& out_dir,
                          const MatrixResult& result, const ExperimentSpec& spec);

struct SweepRow {
    std::string axis;  // "filters_per_class" or "trial_length"
    double value = 0.0;
    FeatureSet feature_set = FeatureSet::FS1;
    std::string regressor;
    double rmse = 0.0;  // averages over subjects whose cell succeeded
    double cc = 0.0;
    int failed_cells = 0;       // numerical failures recorded, not raised
    std::string first_error;
};

/// Rerun the matrix per swept value with up to five repeats. A filter-count
/// sweep touches only the filtered feature sets and rejects F > channels up
/// front; per-cell numerical failures land in the table as data.
std::vector<SweepRow> run_sweep(std::span<const SessionRecording> recordings,
                                const ExperimentSpec& spec);

void write_sweep_csv(const std::filesystem::path& path,
                     std::span<const SweepRow> rows);

struct TimingConfig {
    int channels = 32;
    double sample_rate = 250.0;
    double trial_length = 5.0;
    FilterConfig filters{10, 3};
    std::uint64_t seed = 424242;
};

struct TimingFit {
    double intercept = 0.0;   // seconds
    double slope = 0.0;       // seconds per trial
    double r_squared = 0.0;
    std::vector<int> n_values;
    std::vector<double> seconds;
};

/// Wall time of full tangent-feature training (filter design, intrinsic mean,
/// tangent mapping) at each trial count, best of three, with a least-squares
/// line through (N, time). n_values must be ascending with at least 4 entries.
TimingFit time_training(std::span<const int> n_values,
                        const TimingConfig& cfg = {});

}  // namespace spdreg
