#include "spdreg/spatial_filter.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "spdreg/errors.hpp"

namespace spdreg {

namespace {

// Percentile with midpoint plotting positions: sorted value i (1-based) sits
// at percentile 100*(i - 0.5)/n, linear interpolation in between, clamped to
// the extremes outside.
double percentile(const std::vector<double>& sorted, double p) {
    const auto n = static_cast<double>(sorted.size());
    const double pos = p / 100.0 * n + 0.5;  // 1-based fractional index
    if (pos <= 1.0) return sorted.front();
    if (pos >= n) return sorted.back();
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1]);
}

void fix_sign(Eigen::Ref<Vector> v) {
    const double amax = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-12 * amax) {
            if (v(i) < 0.0) v = -v;
            return;
        }
    }
}

}  // namespace

Vector FuzzyPartition::memberships(double y) const {
    if (k_classes < 1 || static_cast<int>(percentile_values.size()) != k_classes) {
        throw InvalidInputError("fuzzy partition is not initialized");
    }
    if (!std::isfinite(y)) throw InvalidInputError("label value is not finite");

    Vector mu = Vector::Zero(k_classes);
    const auto& pv = percentile_values;
    if (y <= pv.front()) {  // left shoulder
        mu(0) = 1.0;
        return mu;
    }
    if (y >= pv.back()) {  // right shoulder
        mu(k_classes - 1) = 1.0;
        return mu;
    }
    const auto it = std::upper_bound(pv.begin(), pv.end(), y);
    const auto k = static_cast<int>(it - pv.begin()) - 1;
    const double width = pv[k + 1] - pv[k];
    if (width <= 0.0) {  // coincident anchors; all weight on the lower class
        mu(k) = 1.0;
        return mu;
    }
    const double t = (y - pv[k]) / width;
    mu(k) = 1.0 - t;
    mu(k + 1) = t;
    return mu;
}

FuzzyPartition build_partition(std::span<const double> labels, int k_classes) {
    if (k_classes < 1) throw InvalidInputError("k_classes must be positive");
    if (labels.empty()) throw InvalidInputError("label list is empty");
    for (double y : labels) {
        if (!std::isfinite(y)) throw InvalidInputError("label value is not finite");
    }

    std::vector<double> sorted(labels.begin(), labels.end());
    std::sort(sorted.begin(), sorted.end());
    const auto distinct =
        static_cast<int>(std::set<double>(sorted.begin(), sorted.end()).size());
    if (distinct < k_classes + 1) {
        std::ostringstream msg;
        msg << "need at least " << k_classes + 1 << " distinct label values for "
            << k_classes << " fuzzy classes, got " << distinct;
        throw DegenerateLabelsError(msg.str());
    }

    FuzzyPartition part;
    part.k_classes = k_classes;
    part.percentile_points.reserve(k_classes);
    part.percentile_values.reserve(k_classes);
    for (int k = 1; k <= k_classes; ++k) {
        const double p = 100.0 * static_cast<double>(k) / (k_classes + 1);
        part.percentile_points.push_back(p);
        part.percentile_values.push_back(percentile(sorted, p));
    }
    return part;
}

namespace {

// shared accumulation core for the trial-based and cached-scatter entry points
template <typename ScatterAt, typename LabelAt>
std::vector<SpdMatrix> accumulate_class_covariances(
    std::size_t count, int channels, const FuzzyPartition& partition,
    double shrinkage, ScatterAt&& scatter_at, LabelAt&& label_at) {
    const int k = partition.k_classes;
    if (k < 1) throw InvalidInputError("fuzzy partition is not initialized");

    std::vector<Matrix> acc(k, Matrix::Zero(channels, channels));
    std::vector<double> weight(k, 0.0);
    for (std::size_t n = 0; n < count; ++n) {
        const Vector mu = partition.memberships(label_at(n));
        for (int i = 0; i < k; ++i) {
            if (mu(i) > 0.0) {
                acc[i] += mu(i) * scatter_at(n);
                weight[i] += mu(i);
            }
        }
    }

    std::vector<SpdMatrix> covs;
    covs.reserve(k);
    for (int i = 0; i < k; ++i) {
        if (weight[i] < 1e-9) {
            std::ostringstream msg;
            msg << "fuzzy class " << i + 1 << " collected total membership weight "
                << weight[i] << "; no trials fall in its support";
            throw EmptyClassError(msg.str());
        }
        try {
            covs.emplace_back(acc[i] / weight[i], shrinkage);
        } catch (const InvalidInputError&) {
            std::ostringstream msg;
            msg << "class covariance " << i + 1
                << " is not positive definite (rank-deficient trials?); "
                   "apply shrinkage";
            throw IllConditionedError(msg.str());
        }
    }
    return covs;
}

}  // namespace

std::vector<SpdMatrix> class_covariances(std::span<const Trial> trials,
                                         const FuzzyPartition& partition,
                                         double shrinkage) {
    if (trials.empty()) throw InvalidInputError("no trials given");
    const int channels = trials.front().channels();
    for (const Trial& trial : trials) {
        if (trial.channels() != channels) {
            throw ShapeError("trials disagree on channel count");
        }
        if (trial.samples() < 1) throw InvalidInputError("trial has no samples");
    }
    return accumulate_class_covariances(
        trials.size(), channels, partition, shrinkage,
        [&](std::size_t n) { return trials[n].data * trials[n].data.transpose(); },
        [&](std::size_t n) { return trials[n].label; });
}

std::vector<SpdMatrix> class_covariances_from_scatters(
    std::span<const Matrix> scatters, std::span<const double> labels,
    const FuzzyPartition& partition, double shrinkage) {
    if (scatters.empty()) throw InvalidInputError("no scatters given");
    if (scatters.size() != labels.size()) {
        throw ShapeError("scatter and label counts disagree");
    }
    const auto channels = static_cast<int>(scatters.front().rows());
    for (const Matrix& s : scatters) {
        if (s.rows() != channels || s.cols() != channels) {
            throw ShapeError("scatters disagree on size");
        }
    }
    return accumulate_class_covariances(
        scatters.size(), channels, partition, shrinkage,
        [&](std::size_t n) -> const Matrix& { return scatters[n]; },
        [&](std::size_t n) { return labels[n]; });
}

SpatialFilterBank solve_filters(const std::vector<SpdMatrix>& class_covs,
                                int f_per_class) {
    const auto k = static_cast<int>(class_covs.size());
    if (k < 2) throw InvalidInputError("one-versus-rest needs at least 2 classes");
    const int channels = class_covs.front().dim();
    for (const SpdMatrix& cov : class_covs) {
        if (cov.dim() != channels) throw ShapeError("class covariances disagree on size");
    }
    if (f_per_class < 1) throw InvalidInputError("filters_per_class must be positive");
    if (f_per_class > channels) {
        std::ostringstream msg;
        msg << "filters_per_class " << f_per_class << " exceeds channel count "
            << channels;
        throw InvalidInputError(msg.str());
    }

    SpatialFilterBank bank;
    bank.config.k_classes = k;
    bank.config.filters_per_class = f_per_class;
    bank.weights.resize(channels, k * f_per_class);
    bank.eigenvalues.assign(k, {});

    for (int c = 0; c < k; ++c) {
        Matrix rest = Matrix::Zero(channels, channels);
        for (int i = 0; i < k; ++i) {
            if (i != c) rest += class_covs[i].value();
        }

        Eigen::SelfAdjointEigenSolver<Matrix> cond(rest, Eigen::EigenvaluesOnly);
        const double lo = cond.eigenvalues().minCoeff();
        const double hi = cond.eigenvalues().maxCoeff();
        if (!(lo > 1e-12 * hi)) {
            std::ostringstream msg;
            msg << "rest-sum covariance for class " << c + 1
                << " is numerically singular (eigenvalue spread " << hi << " vs "
                << lo << "); apply shrinkage to the class covariances";
            throw IllConditionedError(msg.str());
        }

        Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(
            class_covs[c].value(), rest);
        if (solver.info() != Eigen::Success) {
            throw IllConditionedError(
                "generalized eigensolver failed; apply shrinkage to the class "
                "covariances");
        }

        bank.eigenvalues[c].reserve(f_per_class);
        for (int f = 0; f < f_per_class; ++f) {
            const int idx = channels - 1 - f;  // eigenvalues come back ascending
            Vector v = solver.eigenvectors().col(idx);
            fix_sign(v);
            bank.weights.col(c * f_per_class + f) = v;
            bank.eigenvalues[c].push_back(solver.eigenvalues()(idx));
        }
    }
    return bank;
}

Trial apply_filter(const SpatialFilterBank& bank, const Trial& trial) {
    if (trial.channels() != bank.channels()) {
        std::ostringstream msg;
        msg << "trial has " << trial.channels() << " channels but the filter bank "
            << "expects " << bank.channels();
        throw ShapeError(msg.str());
    }
    return Trial{bank.weights.transpose() * trial.data, trial.label,
                 trial.onset_time};
}

SpatialFilterBank train_filter_bank(std::span<const Trial> trials,
                                    const FilterConfig& cfg, double shrinkage) {
    std::vector<double> labels;
    labels.reserve(trials.size());
    for (const Trial& trial : trials) labels.push_back(trial.label);

    FuzzyPartition partition = build_partition(labels, cfg.k_classes);
    const std::vector<SpdMatrix> covs =
        class_covariances(trials, partition, shrinkage);
    SpatialFilterBank bank = solve_filters(covs, cfg.filters_per_class);
    bank.partition = std::move(partition);
    return bank;
}

SpatialFilterBank train_filter_bank_from_scatters(
    std::span<const Matrix> scatters, std::span<const double> labels,
    const FilterConfig& cfg, double shrinkage) {
    FuzzyPartition partition = build_partition(labels, cfg.k_classes);
    const std::vector<SpdMatrix> covs =
        class_covariances_from_scatters(scatters, labels, partition, shrinkage);
    SpatialFilterBank bank = solve_filters(covs, cfg.filters_per_class);
    bank.partition = std::move(partition);
    return bank;
}

nlohmann::json SpatialFilterBank::to_json() const {
    nlohmann::json j;
    j["config"] = {{"k_classes", config.k_classes},
                   {"filters_per_class", config.filters_per_class}};
    j["partition"] = {{"k_classes", partition.k_classes},
                      {"percentile_points", partition.percentile_points},
                      {"percentile_values", partition.percentile_values}};
    j["rows"] = weights.rows();
    j["cols"] = weights.cols();
    std::vector<double> flat;  // row-major
    flat.reserve(static_cast<std::size_t>(weights.size()));
    for (Eigen::Index r = 0; r < weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < weights.cols(); ++c) {
            flat.push_back(weights(r, c));
        }
    }
    j["weights"] = flat;
    j["eigenvalues"] = eigenvalues;
    return j;
}

SpatialFilterBank SpatialFilterBank::from_json(const nlohmann::json& j) {
    SpatialFilterBank bank;
    try {
        bank.config.k_classes = j.at("config").at("k_classes").get<int>();
        bank.config.filters_per_class =
            j.at("config").at("filters_per_class").get<int>();
        const auto& jp = j.at("partition");
        bank.partition.k_classes = jp.at("k_classes").get<int>();
        bank.partition.percentile_points =
            jp.at("percentile_points").get<std::vector<double>>();
        bank.partition.percentile_values =
            jp.at("percentile_values").get<std::vector<double>>();
        const auto rows = j.at("rows").get<Eigen::Index>();
        const auto cols = j.at("cols").get<Eigen::Index>();
        const auto flat = j.at("weights").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
            throw IoError("filter bank weights length does not match rows*cols");
        }
        bank.weights.resize(rows, cols);
        std::size_t pos = 0;
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                bank.weights(r, c) = flat[pos++];
            }
        }
        bank.eigenvalues =
            j.at("eigenvalues").get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed filter bank JSON: ") + e.what());
    }
    if (bank.weights.cols() !=
        static_cast<Eigen::Index>(bank.config.k_classes) *
            bank.config.filters_per_class) {
        throw IoError("filter bank column count does not match k_classes*filters_per_class");
    }
    return bank;
}

}  // namespace spdreg
