#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "spdreg/trial.hpp"

namespace spdreg {

/// Sparse linear model minimizing (1/2N) sum (y - b0 - b'x)^2 + lambda |b|_1.
/// Features are standardized internally; the stored intercept/coefficients
/// act on the original feature scale, with the fit-time standardization kept
/// for inspection and the KKT certificate.
struct LassoModel {
    double intercept = 0.0;
    Vector coefficients;
    double lambda = 0.0;
    Vector feature_means;
    Vector feature_scales;  // 1.0 for constant features (coefficient forced 0)

    nlohmann::json to_json() const;
    static LassoModel from_json(const nlohmann::json& j);
};

/// Critical penalty: the smallest lambda with an all-zero solution,
/// max_j |(1/N) sum_i x_std_ij (y_i - mean(y))|.
double lasso_lambda_max(const Matrix& x, const Vector& y);

/// Cyclic coordinate descent at a fixed penalty. Convergence when the largest
/// standardized-coefficient change in a sweep drops below 1e-7 (cap 1e4
/// sweeps). objective_trace, when given, records the penalized objective
/// after each sweep.
LassoModel lasso_fit(const Matrix& x, const Vector& y, double lambda,
                     std::vector<double>* objective_trace = nullptr);

struct LassoCvInfo {
    std::vector<double> lambda_grid;  // descending
    std::vector<double> mean_rmse;    // inner-fold mean per grid point
    double chosen_lambda = 0.0;
    double chosen_rmse = 0.0;
};

/// Pick lambda by contiguous k-fold cross-validation over a 100-point
/// log-spaced grid spanning [lambda_max * r, lambda_max] with r = 1e-2 for
/// overparameterized designs (d > n) and 1e-4 otherwise, warm-starting down
/// the path, then refit on everything at the winner. Ties prefer the larger
/// (sparser) lambda.
LassoModel lasso_fit_cv(const Matrix& x, const Vector& y, int fold_count = 5,
                        int grid_size = 100, LassoCvInfo* info = nullptr);

double lasso_predict(const LassoModel& model, const Vector& x);

/// Inverse-distance-weighted k-nearest-neighbour regressor. The dataset path
/// and row indices record where the stored rows came from, so the model
/// serializes as a reference instead of duplicating its training set.
struct KnnModel {
    int k = 5;
    Matrix train_features;  // rows are training points
    Vector train_labels;
    std::string dataset_path;
    std::vector<int> row_indices;

    nlohmann::json to_json() const;
    static KnnModel from_json(const nlohmann::json& j);
};

/// Weighted mean of the k nearest labels, weights 1/distance. Any training
/// point closer than 1e-12 short-circuits to the unweighted mean of all such
/// exact matches. Ties at the k-th distance keep the lowest row index.
double knn_predict(const KnnModel& model, const Vector& x);

}  // namespace spdreg
