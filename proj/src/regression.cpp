#include "spdreg/regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "spdreg/errors.hpp"
#include "spdreg/feature_extract.hpp"

namespace spdreg {

namespace {

constexpr double kCoordTol = 1e-7;
constexpr int kMaxSweeps = 10000;
// the cross-validation path only ranks lambdas, so it runs with the looser
// tolerance common in lasso-path solvers; the returned model is always refit
// at the tight tolerance above
constexpr double kPathTol = 1e-4;
constexpr int kPathMaxSweeps = 2000;
constexpr double kDeadScale = 1e-12;

void check_finite(const Matrix& x, const Vector& y) {
    if (!x.allFinite() || !y.allFinite()) {
        throw InvalidInputError("features and labels must be finite");
    }
    if (x.rows() != y.size()) {
        throw ShapeError("feature rows and label count disagree");
    }
    if (x.rows() < 2) throw InvalidInputError("need at least 2 training rows");
}

struct Standardized {
    Matrix x;        // dead (constant) columns zeroed
    Vector means;
    Vector scales;   // 1.0 for dead columns
    Vector y_centered;
    double y_mean = 0.0;
};

Standardized standardize(const Matrix& x, const Vector& y) {
    const auto n = static_cast<double>(x.rows());
    Standardized s;
    s.means = x.colwise().mean();
    s.x = x.rowwise() - s.means.transpose();
    s.scales.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double scale = std::sqrt(s.x.col(j).squaredNorm() / n);
        if (scale < kDeadScale) {
            s.scales(j) = 1.0;
            s.x.col(j).setZero();
        } else {
            s.scales(j) = scale;
            s.x.col(j) /= scale;
        }
    }
    s.y_mean = y.mean();
    s.y_centered = y.array() - s.y_mean;
    return s;
}

double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

// Cyclic passes over standardized columns ((1/N) x_j'x_j = 1 for live
// columns), maintaining the residual. beta arrives as the warm start. Full
// sweeps admit and verify coordinates; between them only the current nonzero
// set is iterated, which reaches the same fixed point in far fewer O(n d)
// passes. Converged means a full sweep moved nothing by tol or more.
void coordinate_descent(const Matrix& xs, const Vector& yc, double lambda,
                        Vector& beta, std::vector<double>* trace,
                        double tol = kCoordTol, int max_sweeps = kMaxSweeps) {
    const auto n = static_cast<double>(xs.rows());
    const Eigen::Index d = xs.cols();
    Vector residual = yc - xs * beta;

    std::vector<Eigen::Index> active;
    const auto sweep_over = [&](const std::vector<Eigen::Index>* cols) {
        double max_change = 0.0;
        const Eigen::Index count = cols ? static_cast<Eigen::Index>(cols->size()) : d;
        for (Eigen::Index i = 0; i < count; ++i) {
            const Eigen::Index j = cols ? (*cols)[static_cast<std::size_t>(i)] : i;
            const double old = beta(j);
            const double rho = xs.col(j).dot(residual) / n + old;
            const double updated = soft_threshold(rho, lambda);
            if (updated != old) {
                residual += xs.col(j) * (old - updated);
                beta(j) = updated;
                max_change = std::max(max_change, std::abs(updated - old));
            }
        }
        if (trace) {
            trace->push_back(residual.squaredNorm() / (2.0 * n) +
                             lambda * beta.lpNorm<1>());
        }
        return max_change;
    };

    int sweeps = 0;
    while (sweeps < max_sweeps) {
        ++sweeps;
        if (sweep_over(nullptr) < tol) return;
        active.clear();
        for (Eigen::Index j = 0; j < d; ++j) {
            if (beta(j) != 0.0) active.push_back(j);
        }
        while (sweeps < max_sweeps) {
            ++sweeps;
            if (sweep_over(&active) < tol) break;
        }
    }
}

LassoModel destandardize(const Standardized& s, const Vector& beta_std,
                         double lambda) {
    LassoModel model;
    model.lambda = lambda;
    model.feature_means = s.means;
    model.feature_scales = s.scales;
    model.coefficients = beta_std.array() / s.scales.array();
    model.intercept = s.y_mean - model.coefficients.dot(s.means);
    return model;
}

std::vector<double> lambda_grid(double lambda_max, int size, double min_ratio) {
    if (lambda_max <= 0.0) lambda_max = 1e-12;  // constant labels: no signal
    std::vector<double> grid(static_cast<std::size_t>(size));
    if (size == 1) {
        grid[0] = lambda_max;
        return grid;
    }
    const double lo = std::log(lambda_max * min_ratio);
    const double hi = std::log(lambda_max);
    for (int i = 0; i < size; ++i) {
        grid[i] = std::exp(hi + (lo - hi) * i / (size - 1));  // descending
    }
    return grid;
}

}  // namespace

double lasso_lambda_max(const Matrix& x, const Vector& y) {
    check_finite(x, y);
    const Standardized s = standardize(x, y);
    const auto n = static_cast<double>(x.rows());
    // per-column dots, bit-identical to the first coordinate-descent sweep,
    // so fitting at exactly this penalty yields the empty model
    double max_corr = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        max_corr = std::max(max_corr, std::abs(s.x.col(j).dot(s.y_centered) / n));
    }
    return max_corr;
}

LassoModel lasso_fit(const Matrix& x, const Vector& y, double lambda,
                     std::vector<double>* objective_trace) {
    check_finite(x, y);
    if (lambda < 0.0) throw InvalidInputError("lambda must be nonnegative");
    const Standardized s = standardize(x, y);
    Vector beta = Vector::Zero(x.cols());
    coordinate_descent(s.x, s.y_centered, lambda, beta, objective_trace);
    return destandardize(s, beta, lambda);
}

LassoModel lasso_fit_cv(const Matrix& x, const Vector& y, int fold_count,
                        int grid_size, LassoCvInfo* info) {
    check_finite(x, y);
    if (fold_count < 2) throw InvalidInputError("need at least 2 folds");
    if (grid_size < 1) throw InvalidInputError("lambda grid must be nonempty");
    const auto n = static_cast<int>(x.rows());
    if (n < fold_count) {
        std::ostringstream msg;
        msg << fold_count << " folds over " << n << " rows leaves empty folds";
        throw FoldTooSmallError(msg.str());
    }

    // in the overparameterized regime the dense end of the path is both
    // meaningless and the most expensive to solve, so stop at 1% of the
    // maximal lambda there (the usual lasso-path convention)
    const double min_ratio = x.cols() > x.rows() ? 1e-2 : 1e-4;
    const std::vector<double> grid =
        lambda_grid(lasso_lambda_max(x, y), grid_size, min_ratio);
    std::vector<double> rmse_sum(grid.size(), 0.0);

    for (int fold = 0; fold < fold_count; ++fold) {
        const int lo = fold * n / fold_count;
        const int hi = (fold + 1) * n / fold_count;
        const int n_val = hi - lo;
        const int n_train = n - n_val;

        Matrix x_train(n_train, x.cols());
        Vector y_train(n_train);
        int row = 0;
        for (int i = 0; i < n; ++i) {
            if (i < lo || i >= hi) {
                x_train.row(row) = x.row(i);
                y_train(row) = y(i);
                ++row;
            }
        }

        const Standardized s = standardize(x_train, y_train);
        Vector beta = Vector::Zero(x.cols());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            coordinate_descent(s.x, s.y_centered, grid[g], beta, nullptr,
                               kPathTol, kPathMaxSweeps);
            double sse = 0.0;
            for (int i = lo; i < hi; ++i) {
                double pred = s.y_mean;
                for (Eigen::Index j = 0; j < x.cols(); ++j) {
                    pred += beta(j) * (x(i, j) - s.means(j)) / s.scales(j);
                }
                sse += (pred - y(i)) * (pred - y(i));
            }
            rmse_sum[g] += std::sqrt(sse / n_val);
        }
    }

    std::size_t best = 0;  // grid descends, so strict < keeps the larger lambda
    for (std::size_t g = 1; g < grid.size(); ++g) {
        if (rmse_sum[g] < rmse_sum[best]) best = g;
    }
    if (info) {
        info->lambda_grid = grid;
        info->mean_rmse.clear();
        for (double v : rmse_sum) info->mean_rmse.push_back(v / fold_count);
        info->chosen_lambda = grid[best];
        info->chosen_rmse = rmse_sum[best] / fold_count;
    }
    return lasso_fit(x, y, grid[best]);
}

double lasso_predict(const LassoModel& model, const Vector& x) {
    if (x.size() != model.coefficients.size()) {
        std::ostringstream msg;
        msg << "feature vector of length " << x.size()
            << " does not match model dimension " << model.coefficients.size();
        throw ShapeError(msg.str());
    }
    return model.intercept + model.coefficients.dot(x);
}

double knn_predict(const KnnModel& model, const Vector& x) {
    const auto n = static_cast<int>(model.train_features.rows());
    if (n < 1) throw InvalidInputError("kNN model has no training rows");
    if (model.k < 1 || model.k > n) {
        throw InvalidInputError("k must lie in [1, training rows]");
    }
    if (x.size() != model.train_features.cols()) {
        std::ostringstream msg;
        msg << "query of length " << x.size() << " does not match feature dimension "
            << model.train_features.cols();
        throw ShapeError(msg.str());
    }
    if (n != model.train_labels.size()) {
        throw ShapeError("kNN training rows and labels disagree");
    }

    Vector dist(n);
    for (int i = 0; i < n; ++i) {
        dist(i) = (model.train_features.row(i).transpose() - x).norm();
    }

    // exact matches short-circuit the (undefined) inverse weighting
    double zero_sum = 0.0;
    int zero_count = 0;
    for (int i = 0; i < n; ++i) {
        if (dist(i) < 1e-12) {
            zero_sum += model.train_labels(i);
            ++zero_count;
        }
    }
    if (zero_count > 0) return zero_sum / zero_count;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + model.k, order.end(),
                      [&](int a, int b) {
                          if (dist(a) != dist(b)) return dist(a) < dist(b);
                          return a < b;  // deterministic tie break
                      });

    double weight_sum = 0.0, value_sum = 0.0;
    for (int i = 0; i < model.k; ++i) {
        const double w = 1.0 / dist(order[i]);
        weight_sum += w;
        value_sum += w * model.train_labels(order[i]);
    }
    return value_sum / weight_sum;
}

nlohmann::json LassoModel::to_json() const {
    nlohmann::json j;
    j["intercept"] = intercept;
    j["lambda"] = lambda;
    j["coefficients"] = std::vector<double>(
        coefficients.data(), coefficients.data() + coefficients.size());
    j["feature_means"] = std::vector<double>(
        feature_means.data(), feature_means.data() + feature_means.size());
    j["feature_scales"] = std::vector<double>(
        feature_scales.data(), feature_scales.data() + feature_scales.size());
    return j;
}

LassoModel LassoModel::from_json(const nlohmann::json& j) {
    try {
        LassoModel model;
        model.intercept = j.at("intercept").get<double>();
        model.lambda = j.at("lambda").get<double>();
        const auto coef = j.at("coefficients").get<std::vector<double>>();
        const auto means = j.at("feature_means").get<std::vector<double>>();
        const auto scales = j.at("feature_scales").get<std::vector<double>>();
        if (means.size() != coef.size() || scales.size() != coef.size()) {
            throw IoError("lasso model field lengths disagree");
        }
        model.coefficients = Eigen::Map<const Vector>(coef.data(), coef.size());
        model.feature_means = Eigen::Map<const Vector>(means.data(), means.size());
        model.feature_scales = Eigen::Map<const Vector>(scales.data(), scales.size());
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed lasso model JSON: ") + e.what());
    }
}

nlohmann::json KnnModel::to_json() const {
    if (dataset_path.empty() ||
        row_indices.size() != static_cast<std::size_t>(train_features.rows())) {
        throw InvalidInputError(
            "kNN serialization needs dataset_path and one row index per "
            "training row");
    }
    nlohmann::json j;
    j["k"] = k;
    j["dataset_path"] = dataset_path;
    j["row_indices"] = row_indices;
    return j;
}

KnnModel KnnModel::from_json(const nlohmann::json& j) {
    try {
        KnnModel model;
        model.k = j.at("k").get<int>();
        model.dataset_path = j.at("dataset_path").get<std::string>();
        model.row_indices = j.at("row_indices").get<std::vector<int>>();

        const std::filesystem::path path = model.dataset_path;
        const FeatureMatrix fm = path.extension() == ".csv"
                                     ? read_features_csv(path)
                                     : read_features_bin(path);
        model.train_features.resize(
            static_cast<Eigen::Index>(model.row_indices.size()), fm.dim());
        model.train_labels.resize(
            static_cast<Eigen::Index>(model.row_indices.size()));
        for (std::size_t i = 0; i < model.row_indices.size(); ++i) {
            const int r = model.row_indices[i];
            if (r < 0 || r >= fm.n()) {
                throw IoError("kNN row index out of range for " + model.dataset_path);
            }
            model.train_features.row(static_cast<Eigen::Index>(i)) = fm.values.row(r);
            model.train_labels(static_cast<Eigen::Index>(i)) = fm.labels[r];
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed kNN model JSON: ") + e.what());
    }
}

}  // namespace spdreg
