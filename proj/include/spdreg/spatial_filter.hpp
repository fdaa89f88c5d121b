#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "spdreg/spd_manifold.hpp"
#include "spdreg/trial.hpp"

namespace spdreg {

/// Fuzzy partition of a continuous label range into K overlapping classes.
/// Class anchors sit at the empirical percentiles of the training labels taken
/// at the evenly spaced points 100k/(K+1), k = 1..K. Memberships are
/// triangular: mu_k peaks at anchor P_k and falls linearly to zero at the
/// neighbouring anchors; the outermost classes have flat shoulders (mu = 1)
/// beyond their anchors, so the degrees sum to one everywhere.
struct FuzzyPartition {
    int k_classes = 0;
    std::vector<double> percentile_points;  // in (0, 100)
    std::vector<double> percentile_values;  // label units, nondecreasing

    /// Membership degrees (mu_1..mu_K) for a label value.
    Vector memberships(double y) const;
};

struct FilterConfig {
    int k_classes = 3;       // K
    int filters_per_class = 10;  // F, must not exceed the channel count
};

/// A trained bank of supervised spatial filters: K blocks of F column vectors,
/// concatenated into a channels x (K*F) matrix. Block k extremizes the
/// generalized Rayleigh quotient of class k's covariance against the sum of
/// the other classes' covariances; eigenvalues holds the attained quotient
/// values, descending within each block.
struct SpatialFilterBank {
    Matrix weights;  // C x (K*F)
    FilterConfig config;
    FuzzyPartition partition;
    std::vector<std::vector<double>> eigenvalues;  // K lists of F

    int channels() const { return static_cast<int>(weights.rows()); }
    int n_filters() const { return static_cast<int>(weights.cols()); }

    nlohmann::json to_json() const;
    static SpatialFilterBank from_json(const nlohmann::json& j);
};

/// Build the K-class fuzzy partition from training labels. Requires at least
/// k_classes + 1 distinct label values; throws DegenerateLabelsError
/// otherwise. Percentiles use midpoint-position linear interpolation.
FuzzyPartition build_partition(std::span<const double> labels, int k_classes);

/// Membership-weighted mean scatter per class:
/// cov_k = sum_n mu_k(y_n) X_n X_n^T / sum_n mu_k(y_n),
/// with the raw (unnormalized) per-trial scatter X_n X_n^T. An optional
/// shrinkage factor diagonally loads each result. Throws EmptyClassError when
/// a class collects less than 1e-9 total weight, and IllConditionedError when
/// a weighted scatter is not positive definite (rank-deficient trials).
std::vector<SpdMatrix> class_covariances(std::span<const Trial> trials,
                                         const FuzzyPartition& partition,
                                         double shrinkage = 0.0);

/// Same from cached per-trial scatters X_n X_n^T (the fast path when the
/// same trials are revisited across folds).
std::vector<SpdMatrix> class_covariances_from_scatters(
    std::span<const Matrix> scatters, std::span<const double> labels,
    const FuzzyPartition& partition, double shrinkage = 0.0);

/// Solve the K one-versus-rest generalized eigenproblems
/// cov_k v = lambda (sum_{i != k} cov_i) v via Cholesky whitening of the
/// rest-sum, keeping the f_per_class eigenvectors of largest eigenvalue per
/// class (descending order). Eigenvector signs are fixed so the first
/// non-negligible component is positive. The returned bank has an empty
/// partition; train_filter_bank fills it in. Throws IllConditionedError with
/// a shrinkage hint when a rest-sum matrix is numerically singular.
SpatialFilterBank solve_filters(const std::vector<SpdMatrix>& class_covs,
                                int f_per_class);

/// Project a trial through the bank: X' = W^T X, shape (K*F) x S. Label and
/// onset carry through unchanged.
Trial apply_filter(const SpatialFilterBank& bank, const Trial& trial);

/// End-to-end training: partition the labels, accumulate class covariances,
/// solve the filters.
SpatialFilterBank train_filter_bank(std::span<const Trial> trials,
                                    const FilterConfig& cfg,
                                    double shrinkage = 0.0);

/// End-to-end training from cached scatters and labels.
SpatialFilterBank train_filter_bank_from_scatters(
    std::span<const Matrix> scatters, std::span<const double> labels,
    const FilterConfig& cfg, double shrinkage = 0.0);

}  // namespace spdreg
