#include "spdreg/eval_harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "spdreg/errors.hpp"
#include "spdreg/rng.hpp"

namespace spdreg {

namespace {

constexpr double kVarianceFloor = 1e-20;  // below this, correlation is moot

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(std::numeric_limits<double>::max_digits10);
    os << v;
    return os.str();
}

void append_bytes(std::string& out, const void* data, std::size_t n) {
    out.append(static_cast<const char*>(data), n);
}

void append_doubles(std::string& out, const double* data, std::size_t n) {
    append_bytes(out, data, n * sizeof(double));
}

void append_matrix(std::string& out, const Matrix& m) {
    const auto rows = m.rows(), cols = m.cols();
    append_bytes(out, &rows, sizeof(rows));
    append_bytes(out, &cols, sizeof(cols));
    append_doubles(out, m.data(), static_cast<std::size_t>(m.size()));
}

void append_vector(std::string& out, const Vector& v) {
    const auto n = v.size();
    append_bytes(out, &n, sizeof(n));
    append_doubles(out, v.data(), static_cast<std::size_t>(v.size()));
}

std::uint64_t repeat_seed(const ExperimentSpec& spec, const std::string& subject,
                          int repeat) {
    return hash_combine(hash_combine(spec.seed, hash_string(subject)),
                        static_cast<std::uint64_t>(repeat));
}

const FilterConfig& filter_config_for(const ExperimentSpec& spec, FeatureSet fs) {
    const auto it = spec.filter_configs.find(fs);
    if (it == spec.filter_configs.end()) {
        throw InvalidInputError("no filter configuration for " +
                                feature_set_name(fs));
    }
    return it->second;
}

SpdMatrix filtered_covariance(const SubjectData& data,
                              const SpatialFilterBank& bank, int idx,
                              double shrinkage) {
    const Matrix projected = bank.weights.transpose() *
                             data.guarded_scatters[static_cast<std::size_t>(idx)] *
                             bank.weights / data.guarded_samples;
    try {
        return SpdMatrix(projected, shrinkage);
    } catch (const InvalidInputError&) {
        std::ostringstream msg;
        msg << "filtered covariance of trial " << idx
            << " is not positive definite (" << bank.n_filters() << " filters on "
            << bank.channels() << " channels); reduce filters or apply shrinkage";
        throw IllConditionedError(msg.str());
    }
}

std::string cell_key(const CellResult& cell) {
    return cell.subject_id + "_" + feature_set_name(cell.feature_set) + "_" +
           cell.regressor;
}

}  // namespace

void ExperimentSpec::validate() const {
    if (folds < 2) throw InvalidInputError("folds must be at least 2");
    if (repeats < 1) throw InvalidInputError("repeats must be at least 1");
    if (feature_sets.empty()) throw InvalidInputError("no feature sets selected");
    if (regressors.empty()) throw InvalidInputError("no regressors selected");
    for (const auto& r : regressors) {
        if (r != "lasso" && r != "knn") {
            throw InvalidInputError("unknown regressor '" + r + "'");
        }
    }
    if (trial_length <= 0.0) throw InvalidInputError("trial_length must be positive");
    if (shrinkage < 0.0) throw InvalidInputError("shrinkage must be nonnegative");
    if (edge_guard < 0.0 || edge_guard >= 0.5) {
        throw InvalidInputError("edge_guard must lie in [0, 0.5)");
    }
    if (knn_k < 1) throw InvalidInputError("knn_k must be positive");
    if (lasso_inner_folds < 2) {
        throw InvalidInputError("lasso_inner_folds must be at least 2");
    }
    if (lasso_grid < 1) throw InvalidInputError("lasso_grid must be positive");
    if (!sweep_filters.empty() && !sweep_trial_lengths.empty()) {
        throw InvalidInputError("choose one sweep axis, not both");
    }
    for (int f : sweep_filters) {
        if (f < 1) throw InvalidInputError("swept filter counts must be positive");
    }
    for (double l : sweep_trial_lengths) {
        if (l <= 0.0) throw InvalidInputError("swept trial lengths must be positive");
    }
}

nlohmann::json ExperimentSpec::to_json() const {
    nlohmann::json j;
    j["dataset_paths"] = dataset_paths;
    std::vector<std::string> fs_names;
    for (FeatureSet fs : feature_sets) fs_names.push_back(feature_set_name(fs));
    j["feature_sets"] = fs_names;
    j["regressors"] = regressors;
    j["folds"] = folds;
    j["repeats"] = repeats;
    j["seed"] = seed;
    nlohmann::json fc;
    for (const auto& [fs, cfg] : filter_configs) {
        fc[feature_set_name(fs)] = {{"k_classes", cfg.k_classes},
                                    {"filters_per_class", cfg.filters_per_class}};
    }
    j["filter_configs"] = fc;
    j["trial_length"] = trial_length;
    j["shrinkage"] = shrinkage;
    j["edge_guard"] = edge_guard;
    j["psd"] = {{"window_length", psd.window_length},
                {"overlap", psd.overlap},
                {"bands", psd.bands}};
    j["knn_k"] = knn_k;
    j["lasso_inner_folds"] = lasso_inner_folds;
    j["lasso_grid"] = lasso_grid;
    if (!sweep_filters.empty()) j["sweep"] = {{"filters_per_class", sweep_filters}};
    if (!sweep_trial_lengths.empty()) {
        j["sweep"] = {{"trial_length", sweep_trial_lengths}};
    }
    return j;
}

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j) {
    ExperimentSpec spec;
    try {
        if (j.contains("dataset_paths")) {
            spec.dataset_paths = j["dataset_paths"].get<std::vector<std::string>>();
        }
        if (j.contains("feature_sets")) {
            spec.feature_sets.clear();
            for (const auto& name : j["feature_sets"]) {
                spec.feature_sets.push_back(
                    feature_set_from_name(name.get<std::string>()));
            }
        }
        if (j.contains("regressors")) {
            spec.regressors = j["regressors"].get<std::vector<std::string>>();
        }
        if (j.contains("folds")) spec.folds = j["folds"].get<int>();
        if (j.contains("repeats")) spec.repeats = j["repeats"].get<int>();
        if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("filter_configs")) {
            for (const auto& [name, cfg] : j["filter_configs"].items()) {
                FilterConfig fc;
                fc.k_classes = cfg.at("k_classes").get<int>();
                fc.filters_per_class = cfg.at("filters_per_class").get<int>();
                spec.filter_configs[feature_set_from_name(name)] = fc;
            }
        }
        if (j.contains("trial_length")) {
            spec.trial_length = j["trial_length"].get<double>();
        }
        if (j.contains("shrinkage")) spec.shrinkage = j["shrinkage"].get<double>();
        if (j.contains("edge_guard")) spec.edge_guard = j["edge_guard"].get<double>();
        if (j.contains("psd")) {
            const auto& p = j["psd"];
            if (p.contains("window_length")) {
                spec.psd.window_length = p["window_length"].get<int>();
            }
            if (p.contains("overlap")) spec.psd.overlap = p["overlap"].get<double>();
            if (p.contains("bands")) {
                spec.psd.bands =
                    p["bands"].get<std::vector<std::pair<double, double>>>();
            }
        }
        if (j.contains("knn_k")) spec.knn_k = j["knn_k"].get<int>();
        if (j.contains("lasso_inner_folds")) {
            spec.lasso_inner_folds = j["lasso_inner_folds"].get<int>();
        }
        if (j.contains("lasso_grid")) spec.lasso_grid = j["lasso_grid"].get<int>();
        if (j.contains("sweep")) {
            const auto& s = j["sweep"];
            if (s.contains("filters_per_class")) {
                spec.sweep_filters = s["filters_per_class"].get<std::vector<int>>();
            }
            if (s.contains("trial_length")) {
                spec.sweep_trial_lengths =
                    s["trial_length"].get<std::vector<double>>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed experiment spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

SubjectData prepare_subject(const SessionRecording& rec,
                            const ExperimentSpec& spec) {
    spec.validate();
    SubjectData data;
    data.subject_id = rec.subject_id;
    data.sample_rate = rec.sample_rate;

    const RtStats stats = RtStats::compute(rec.events);
    PreprocessConfig pc;
    pc.trial_length_s = spec.trial_length;
    data.trials = preprocess_session(rec, stats, pc).trials;
    if (data.trials.empty()) {
        throw InvalidInputError("no usable trials in session " + rec.subject_id);
    }

    data.psd = spec.psd;
    data.psd.sample_rate = rec.sample_rate;
    if (data.psd.window_length <= 0) {
        data.psd.window_length = static_cast<int>(std::lround(rec.sample_rate));
    }

    const auto n = data.trials.size();
    const int samples = static_cast<int>(data.trials.front().samples());
    const int trim = static_cast<int>(spec.edge_guard * samples);
    data.guarded_samples = static_cast<double>(samples - 2 * trim);
    data.labels.reserve(n);
    data.scatters.reserve(n);
    data.guarded_scatters.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Trial& t = data.trials[i];
        data.labels.push_back(t.label);
        data.scatters.push_back(t.data * t.data.transpose());
        if (trim > 0) {
            const Matrix mid = t.data.middleCols(trim, samples - 2 * trim);
            data.guarded_scatters.push_back(mid * mid.transpose());
        } else {
            data.guarded_scatters.push_back(data.scatters.back());
        }
        const FeatureVector fv = extract_fs1(t, data.psd);
        if (i == 0) data.fs1.resize(static_cast<Eigen::Index>(n), fv.dim());
        data.fs1.row(static_cast<Eigen::Index>(i)) = fv.values.transpose();
        data.band_csd.push_back(welch_band_csd(t, data.psd));
    }
    return data;
}

std::string FittedFold::fingerprint() const {
    std::string bytes;
    bytes += feature_set_name(feature_set);
    bytes += '|';
    bytes += regressor;
    bytes += '|';
    if (bank) {
        append_matrix(bytes, bank->weights);
        append_doubles(bytes, bank->partition.percentile_values.data(),
                       bank->partition.percentile_values.size());
        for (const auto& evs : bank->eigenvalues) {
            append_doubles(bytes, evs.data(), evs.size());
        }
    }
    if (tangent) {
        append_matrix(bytes, tangent->reference_mean().value());
        append_matrix(bytes, tangent->invsqrt());
    }
    if (lasso) {
        append_doubles(bytes, &lasso->intercept, 1);
        append_doubles(bytes, &lasso->lambda, 1);
        append_vector(bytes, lasso->coefficients);
        append_vector(bytes, lasso->feature_means);
        append_vector(bytes, lasso->feature_scales);
    }
    if (knn) {
        append_bytes(bytes, &knn->k, sizeof(knn->k));
        append_matrix(bytes, knn->train_features);
        append_vector(bytes, knn->train_labels);
    }
    return bytes;
}

FittedFold fit_fold(const SubjectData& data, std::span<const int> train_idx,
                    FeatureSet feature_set, const std::string& regressor,
                    const ExperimentSpec& spec) {
    if (train_idx.empty()) throw InvalidInputError("empty training fold");
    const auto n_total = static_cast<int>(data.trials.size());
    for (int i : train_idx) {
        if (i < 0 || i >= n_total) throw InvalidInputError("train index out of range");
    }

    FittedFold fold;
    fold.feature_set = feature_set;
    fold.regressor = regressor;

    const auto n = static_cast<Eigen::Index>(train_idx.size());
    Vector y(n);
    std::vector<double> train_labels(train_idx.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        y(i) = data.labels[static_cast<std::size_t>(train_idx[i])];
        train_labels[static_cast<std::size_t>(i)] = y(i);
    }

    Matrix feats;
    switch (feature_set) {
        case FeatureSet::FS1: {
            feats.resize(n, data.fs1.cols());
            for (Eigen::Index i = 0; i < n; ++i) feats.row(i) = data.fs1.row(train_idx[i]);
            break;
        }
        case FeatureSet::FS2: {
            std::vector<Matrix> train_scatters(train_idx.size());
            for (std::size_t i = 0; i < train_idx.size(); ++i) {
                train_scatters[i] = data.scatters[static_cast<std::size_t>(train_idx[i])];
            }
            fold.bank = train_filter_bank_from_scatters(
                train_scatters, train_labels, filter_config_for(spec, feature_set),
                spec.shrinkage);
            for (Eigen::Index i = 0; i < n; ++i) {
                const FeatureVector fv = extract_fs2_from_csd(
                    data.band_csd[static_cast<std::size_t>(train_idx[i])],
                    *fold.bank);
                if (i == 0) feats.resize(n, fv.dim());
                feats.row(i) = fv.values.transpose();
            }
            break;
        }
        case FeatureSet::FS3: {
            std::vector<Matrix> train_scatters(train_idx.size());
            for (std::size_t i = 0; i < train_idx.size(); ++i) {
                train_scatters[i] = data.scatters[static_cast<std::size_t>(train_idx[i])];
            }
            fold.bank = train_filter_bank_from_scatters(
                train_scatters, train_labels, filter_config_for(spec, feature_set),
                spec.shrinkage);
            std::vector<SpdMatrix> covs;
            covs.reserve(train_idx.size());
            for (int idx : train_idx) {
                covs.push_back(filtered_covariance(data, *fold.bank, idx,
                                                   spec.shrinkage));
            }
            fold.tangent = TangentSpaceModel::fit_from_covariances(
                covs, *fold.bank, MeanConfig{}, spec.shrinkage, spec.edge_guard);
            for (Eigen::Index i = 0; i < n; ++i) {
                const FeatureVector fv = extract_fs3_from_cov(
                    covs[static_cast<std::size_t>(i)], *fold.tangent);
                if (i == 0) feats.resize(n, fv.dim());
                feats.row(i) = fv.values.transpose();
            }
            break;
        }
    }

    if (regressor == "lasso") {
        fold.lasso = lasso_fit_cv(feats, y, spec.lasso_inner_folds, spec.lasso_grid);
    } else if (regressor == "knn") {
        KnnModel model;
        model.k = spec.knn_k;
        model.train_features = std::move(feats);
        model.train_labels = std::move(y);
        fold.knn = std::move(model);
    } else {
        throw InvalidInputError("unknown regressor '" + regressor + "'");
    }
    return fold;
}

std::vector<double> predict_fold(const FittedFold& fold, const SubjectData& data,
                                 std::span<const int> idx) {
    const auto n_total = static_cast<int>(data.trials.size());
    std::vector<double> out;
    out.reserve(idx.size());
    for (int i : idx) {
        if (i < 0 || i >= n_total) throw InvalidInputError("index out of range");
        Vector features;
        switch (fold.feature_set) {
            case FeatureSet::FS1:
                features = data.fs1.row(i).transpose();
                break;
            case FeatureSet::FS2:
                features =
                    extract_fs2_from_csd(data.band_csd[static_cast<std::size_t>(i)],
                                         *fold.bank)
                        .values;
                break;
            case FeatureSet::FS3:
                features =
                    extract_fs3_from_cov(
                        filtered_covariance(data, *fold.bank, i,
                                            fold.tangent->shrinkage()),
                        *fold.tangent)
                        .values;
                break;
        }
        if (fold.lasso) {
            out.push_back(lasso_predict(*fold.lasso, features));
        } else {
            out.push_back(knn_predict(*fold.knn, features));
        }
    }
    return out;
}

Metrics compute_metrics(std::span<const double> truth,
                        std::span<const double> predictions) {
    if (truth.size() != predictions.size()) {
        throw ShapeError("truth and prediction counts disagree");
    }
    if (truth.size() < 2) throw InvalidInputError("need at least 2 predictions");
    const auto n = static_cast<double>(truth.size());

    Metrics m;
    double se = 0.0, my = 0.0, mp = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = predictions[i] - truth[i];
        se += d * d;
        my += truth[i];
        mp += predictions[i];
    }
    m.rmse = std::sqrt(se / n);
    my /= n;
    mp /= n;

    double syy = 0.0, spp = 0.0, syp = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double dy = truth[i] - my;
        const double dp = predictions[i] - mp;
        syy += dy * dy;
        spp += dp * dp;
        syp += dy * dp;
    }
    if (spp <= kVarianceFloor || syy <= kVarianceFloor) {
        m.cc = 0.0;
        m.degenerate = true;
    } else {
        m.cc = syp / std::sqrt(syy * spp);
    }
    return m;
}

CellResult run_cv(const SubjectData& data, const ExperimentSpec& spec,
                  FeatureSet feature_set, const std::string& regressor) {
    spec.validate();
    const auto n = static_cast<int>(data.trials.size());
    if (n / spec.folds < 2) {
        std::ostringstream msg;
        msg << spec.folds << " folds over " << n
            << " trials would leave a test fold with fewer than 2 points";
        throw FoldTooSmallError(msg.str());
    }

    CellResult cell;
    cell.subject_id = data.subject_id;
    cell.feature_set = feature_set;
    cell.regressor = regressor;
    cell.truth = data.labels;

    using clock = std::chrono::steady_clock;
    for (int r = 0; r < spec.repeats; ++r) {
        Rng rng(repeat_seed(spec, data.subject_id, r));
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);

        std::vector<double> pooled(static_cast<std::size_t>(n), 0.0);
        for (int f = 0; f < spec.folds; ++f) {
            const int lo = f * n / spec.folds;
            const int hi = (f + 1) * n / spec.folds;
            std::vector<int> test(order.begin() + lo, order.begin() + hi);
            std::vector<int> train;
            train.reserve(static_cast<std::size_t>(n - (hi - lo)));
            train.insert(train.end(), order.begin(), order.begin() + lo);
            train.insert(train.end(), order.begin() + hi, order.end());

            const auto t0 = clock::now();
            const FittedFold fold = fit_fold(data, train, feature_set, regressor, spec);
            cell.train_time_s +=
                std::chrono::duration<double>(clock::now() - t0).count();

            const std::vector<double> preds = predict_fold(fold, data, test);
            for (std::size_t i = 0; i < test.size(); ++i) {
                pooled[static_cast<std::size_t>(test[i])] = preds[i];
            }
        }
        const Metrics m = compute_metrics(data.labels, pooled);
        cell.per_repeat.push_back({m.rmse, m.cc, m.degenerate});
        cell.predictions.push_back(std::move(pooled));
        cell.rmse += m.rmse / spec.repeats;
        cell.cc += m.cc / spec.repeats;
        cell.degenerate = cell.degenerate || m.degenerate;
    }
    return cell;
}

MatrixSummary summarize_matrix(std::span<const CellResult> cells,
                               const ExperimentSpec& spec) {
    MatrixSummary summary;
    for (const auto& regressor : spec.regressors) {
        for (FeatureSet fs : spec.feature_sets) {
            MatrixSummary::Average avg;
            avg.feature_set = fs;
            avg.regressor = regressor;
            int count = 0;
            for (const CellResult& cell : cells) {
                if (cell.feature_set == fs && cell.regressor == regressor &&
                    cell.error.empty()) {
                    avg.rmse += cell.rmse;
                    avg.cc += cell.cc;
                    ++count;
                }
            }
            if (count > 0) {
                avg.rmse /= count;
                avg.cc /= count;
            }
            summary.averages.push_back(avg);
        }
    }
    const auto average_of = [&](FeatureSet fs, const std::string& regressor)
        -> const MatrixSummary::Average& {
        for (const auto& a : summary.averages) {
            if (a.feature_set == fs && a.regressor == regressor) return a;
        }
        throw InvalidInputError("missing average");  // unreachable
    };
    for (const auto& regressor : spec.regressors) {
        for (std::size_t i = 0; i < spec.feature_sets.size(); ++i) {
            for (std::size_t k = i + 1; k < spec.feature_sets.size(); ++k) {
                const auto& base = average_of(spec.feature_sets[i], regressor);
                const auto& better = average_of(spec.feature_sets[k], regressor);
                MatrixSummary::Improvement imp;
                imp.regressor = regressor;
                imp.baseline = spec.feature_sets[i];
                imp.improved = spec.feature_sets[k];
                imp.rmse_pct =
                    base.rmse > 0.0 ? 100.0 * (better.rmse / base.rmse - 1.0) : 0.0;
                imp.cc_pct = base.cc != 0.0
                                 ? 100.0 * (better.cc / base.cc - 1.0)
                                 : 0.0;
                summary.improvements.push_back(imp);
            }
        }
    }
    return summary;
}

MatrixResult run_matrix(std::span<const SubjectData> subjects,
                        const ExperimentSpec& spec) {
    spec.validate();
    if (subjects.empty()) throw InvalidInputError("no subjects given");

    struct PlannedCell {
        const SubjectData* subject;
        FeatureSet feature_set;
        const std::string* regressor;
    };
    std::vector<PlannedCell> plan;
    for (const SubjectData& subject : subjects) {
        for (FeatureSet fs : spec.feature_sets) {
            for (const auto& regressor : spec.regressors) {
                plan.push_back({&subject, fs, &regressor});
            }
        }
    }

    MatrixResult result;
    result.cells.resize(plan.size());

    // independent cells over a small work pool; each slot is written by
    // exactly one worker, so the aggregate is schedule-independent
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < plan.size();
             i = next.fetch_add(1)) {
            const PlannedCell& p = plan[i];
            try {
                result.cells[i] = run_cv(*p.subject, spec, p.feature_set,
                                         *p.regressor);
            } catch (const std::exception& e) {
                CellResult cell;
                cell.subject_id = p.subject->subject_id;
                cell.feature_set = p.feature_set;
                cell.regressor = *p.regressor;
                cell.rmse = std::numeric_limits<double>::quiet_NaN();
                cell.cc = std::numeric_limits<double>::quiet_NaN();
                cell.error = e.what();
                result.cells[i] = std::move(cell);
            }
        }
    };
    const unsigned n_workers = std::min<unsigned>(
        std::max(1u, std::thread::hardware_concurrency()),
        static_cast<unsigned>(plan.size()));
    if (n_workers > 1) {
        std::vector<std::thread> pool;
        pool.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    } else {
        worker();
    }

    result.summary = summarize_matrix(result.cells, spec);
    return result;
}

void write_matrix_outputs(const std::filesystem::path& out_dir,
                          const MatrixResult& result, const ExperimentSpec& spec) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "predictions");
    fs::create_directories(out_dir / "plots");

    {
        std::ofstream out(out_dir / "results.csv");
        if (!out) throw IoError("cannot write results.csv");
        out << "subject,feature_set,regressor,rmse,cc,degenerate\n";
        for (const CellResult& cell : result.cells) {
            out << cell.subject_id << ',' << feature_set_name(cell.feature_set)
                << ',' << cell.regressor << ',' << fmt(cell.rmse) << ','
                << fmt(cell.cc) << ',' << (cell.degenerate ? 1 : 0) << '\n';
        }
    }

    for (const CellResult& cell : result.cells) {
        if (!cell.error.empty()) continue;
        std::ofstream out(out_dir / "predictions" / (cell_key(cell) + ".csv"));
        if (!out) throw IoError("cannot write prediction CSV");
        out << "repeat,trial,truth,prediction\n";
        for (std::size_t r = 0; r < cell.predictions.size(); ++r) {
            for (std::size_t i = 0; i < cell.predictions[r].size(); ++i) {
                out << r << ',' << i << ',' << fmt(cell.truth[i]) << ','
                    << fmt(cell.predictions[r][i]) << '\n';
            }
        }
    }

    {
        nlohmann::json j;
        j["spec"] = spec.to_json();
        nlohmann::json cells = nlohmann::json::array();
        for (const CellResult& cell : result.cells) {
            nlohmann::json c;
            c["subject"] = cell.subject_id;
            c["feature_set"] = feature_set_name(cell.feature_set);
            c["regressor"] = cell.regressor;
            c["rmse"] = cell.rmse;
            c["cc"] = cell.cc;
            c["degenerate"] = cell.degenerate;
            c["train_time_s"] = cell.train_time_s;
            if (!cell.error.empty()) c["error"] = cell.error;
            nlohmann::json reps = nlohmann::json::array();
            for (const RepeatMetrics& m : cell.per_repeat) {
                reps.push_back({{"rmse", m.rmse}, {"cc", m.cc}});
            }
            c["per_repeat"] = reps;
            cells.push_back(c);
        }
        j["cells"] = cells;
        nlohmann::json avgs = nlohmann::json::array();
        for (const auto& a : result.summary.averages) {
            avgs.push_back({{"feature_set", feature_set_name(a.feature_set)},
                            {"regressor", a.regressor},
                            {"rmse", a.rmse},
                            {"cc", a.cc}});
        }
        j["averages"] = avgs;
        nlohmann::json imps = nlohmann::json::array();
        for (const auto& imp : result.summary.improvements) {
            imps.push_back({{"regressor", imp.regressor},
                            {"baseline", feature_set_name(imp.baseline)},
                            {"improved", feature_set_name(imp.improved)},
                            {"rmse_pct", imp.rmse_pct},
                            {"cc_pct", imp.cc_pct}});
        }
        j["improvements"] = imps;
        std::ofstream out(out_dir / "summary.json");
        if (!out) throw IoError("cannot write summary.json");
        out << j.dump(2) << '\n';
    }

    // per-subject bar data, one approach per column
    std::vector<std::string> approaches;
    std::vector<std::string> subjects;
    for (const CellResult& cell : result.cells) {
        const std::string approach =
            feature_set_name(cell.feature_set) + "_" + cell.regressor;
        if (std::find(approaches.begin(), approaches.end(), approach) ==
            approaches.end()) {
            approaches.push_back(approach);
        }
        if (std::find(subjects.begin(), subjects.end(), cell.subject_id) ==
            subjects.end()) {
            subjects.push_back(cell.subject_id);
        }
    }
    const auto cell_metric = [&](const std::string& subject,
                                 const std::string& approach, bool want_rmse) {
        for (const CellResult& cell : result.cells) {
            if (cell.subject_id == subject &&
                feature_set_name(cell.feature_set) + "_" + cell.regressor ==
                    approach) {
                return want_rmse ? cell.rmse : cell.cc;
            }
        }
        return std::numeric_limits<double>::quiet_NaN();
    };
    for (const bool want_rmse : {true, false}) {
        std::ofstream out(out_dir / "plots" /
                          (want_rmse ? "per_subject_rmse.csv" : "per_subject_cc.csv"));
        if (!out) throw IoError("cannot write plot CSV");
        out << "subject";
        for (const auto& a : approaches) out << ',' << a;
        out << '\n';
        for (const auto& s : subjects) {
            out << s;
            for (const auto& a : approaches) out << ',' << fmt(cell_metric(s, a, want_rmse));
            out << '\n';
        }
    }
    {
        std::ofstream out(out_dir / "plots" / "improvements.csv");
        if (!out) throw IoError("cannot write improvements.csv");
        out << "regressor,baseline,improved,rmse_pct,cc_pct\n";
        for (const auto& imp : result.summary.improvements) {
            out << imp.regressor << ',' << feature_set_name(imp.baseline) << ','
                << feature_set_name(imp.improved) << ',' << fmt(imp.rmse_pct) << ','
                << fmt(imp.cc_pct) << '\n';
        }
    }
}

std::vector<SweepRow> run_sweep(std::span<const SessionRecording> recordings,
                                const ExperimentSpec& spec) {
    spec.validate();
    if (recordings.empty()) throw InvalidInputError("no recordings given");
    if (spec.sweep_filters.empty() && spec.sweep_trial_lengths.empty()) {
        throw InvalidInputError("no sweep axis defined");
    }
    const bool filter_axis = !spec.sweep_filters.empty();

    int min_channels = std::numeric_limits<int>::max();
    for (const auto& rec : recordings) {
        min_channels = std::min(min_channels, rec.channels());
    }
    if (filter_axis) {
        for (int f : spec.sweep_filters) {
            if (f > min_channels) {
                std::ostringstream msg;
                msg << "swept filter count " << f << " exceeds the channel count "
                    << min_channels;
                throw InvalidInputError(msg.str());
            }
        }
    }

    std::vector<FeatureSet> sets;
    for (FeatureSet fs : spec.feature_sets) {
        if (!filter_axis || fs != FeatureSet::FS1) sets.push_back(fs);
    }
    if (sets.empty()) {
        throw InvalidInputError("a filter sweep needs a filtered feature set");
    }

    ExperimentSpec base = spec;
    base.repeats = std::min(spec.repeats, 5);
    base.sweep_filters.clear();
    base.sweep_trial_lengths.clear();

    std::vector<SweepRow> rows;
    const std::size_t n_values = filter_axis ? spec.sweep_filters.size()
                                             : spec.sweep_trial_lengths.size();

    std::vector<SubjectData> cached;  // reusable across filter-count values
    if (filter_axis) {
        for (const auto& rec : recordings) cached.push_back(prepare_subject(rec, base));
    }

    for (std::size_t vi = 0; vi < n_values; ++vi) {
        ExperimentSpec current = base;
        double value = 0.0;
        if (filter_axis) {
            value = spec.sweep_filters[vi];
            for (FeatureSet fs : sets) {
                current.filter_configs[fs].filters_per_class = spec.sweep_filters[vi];
            }
        } else {
            value = spec.sweep_trial_lengths[vi];
            current.trial_length = value;
            cached.clear();
            for (const auto& rec : recordings) {
                cached.push_back(prepare_subject(rec, current));
            }
        }

        for (FeatureSet fs : sets) {
            for (const auto& regressor : current.regressors) {
                SweepRow row;
                row.axis = filter_axis ? "filters_per_class" : "trial_length";
                row.value = value;
                row.feature_set = fs;
                row.regressor = regressor;
                int succeeded = 0;
                for (const SubjectData& subject : cached) {
                    try {
                        const CellResult cell = run_cv(subject, current, fs, regressor);
                        row.rmse += cell.rmse;
                        row.cc += cell.cc;
                        ++succeeded;
                    } catch (const std::exception& e) {
                        ++row.failed_cells;
                        if (row.first_error.empty()) row.first_error = e.what();
                    }
                }
                if (succeeded > 0) {
                    row.rmse /= succeeded;
                    row.cc /= succeeded;
                } else {
                    row.rmse = std::numeric_limits<double>::quiet_NaN();
                    row.cc = std::numeric_limits<double>::quiet_NaN();
                }
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

void write_sweep_csv(const std::filesystem::path& path,
                     std::span<const SweepRow> rows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "axis,value,feature_set,regressor,rmse,cc,failed_cells,first_error\n";
    for (const SweepRow& row : rows) {
        std::string err = row.first_error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << row.axis << ',' << fmt(row.value) << ','
            << feature_set_name(row.feature_set) << ',' << row.regressor << ','
            << fmt(row.rmse) << ',' << fmt(row.cc) << ',' << row.failed_cells
            << ',' << err << '\n';
    }
}

TimingFit time_training(std::span<const int> n_values, const TimingConfig& cfg) {
    if (n_values.size() < 4) {
        throw InvalidInputError("need at least 4 trial counts for a timing fit");
    }
    for (std::size_t i = 0; i < n_values.size(); ++i) {
        if (n_values[i] < 20) {
            throw InvalidInputError("trial counts must be at least 20");
        }
        if (i > 0 && n_values[i] < n_values[i - 1]) {
            throw InvalidInputError("trial counts must be ascending");
        }
    }
    const int n_max = n_values.back();

    // one real synthetic pool, cycled out to the largest requested count;
    // duplicates change no per-trial cost, only the count
    std::vector<Trial> trials;
    {
        GeneratorConfig gen;
        gen.channels = cfg.channels;
        gen.sample_rate = cfg.sample_rate;
        gen.session_length = 740.0;
        gen.event_rate = 6.0;
        gen.coupling = 0.75;
        gen.seed = cfg.seed;
        const SynthSession session = generate_session(gen, "timing");
        const RtStats stats = RtStats::compute(session.recording.events);
        PreprocessConfig pc;
        pc.trial_length_s = cfg.trial_length;
        std::vector<Trial> pool =
            preprocess_session(session.recording, stats, pc).trials;
        if (pool.empty()) throw InvalidInputError("timing pool came out empty");
        trials.reserve(static_cast<std::size_t>(n_max));
        for (int i = 0; i < n_max; ++i) {
            trials.push_back(pool[static_cast<std::size_t>(i) % pool.size()]);
        }
    }

    using clock = std::chrono::steady_clock;
    TimingFit fit;
    for (const int n : n_values) {
        const std::span<const Trial> subset(trials.data(),
                                            static_cast<std::size_t>(n));
        double best = std::numeric_limits<double>::infinity();
        for (int attempt = 0; attempt < 3; ++attempt) {
            const auto t0 = clock::now();
            const SpatialFilterBank bank = train_filter_bank(subset, cfg.filters);
            const TangentSpaceModel model = TangentSpaceModel::fit(subset, bank);
            for (const Trial& t : subset) {
                volatile double sink = extract_fs3(t, model).values(0);
                (void)sink;
            }
            best = std::min(best,
                            std::chrono::duration<double>(clock::now() - t0).count());
        }
        fit.n_values.push_back(n);
        fit.seconds.push_back(best);
    }

    const auto n = static_cast<double>(fit.n_values.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < fit.n_values.size(); ++i) {
        mx += fit.n_values[i];
        my += fit.seconds[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < fit.n_values.size(); ++i) {
        const double dx = fit.n_values[i] - mx;
        const double dy = fit.seconds[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0) {
        throw InvalidInputError("need at least two distinct trial counts");
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < fit.n_values.size(); ++i) {
        const double r = fit.seconds[i] - (fit.intercept + fit.slope * fit.n_values[i]);
        ss_res += r * r;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

}  // namespace spdreg
