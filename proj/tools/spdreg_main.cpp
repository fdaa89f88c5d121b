#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "spdreg/config_io.hpp"
#include "spdreg/errors.hpp"
#include "spdreg/eval_harness.hpp"
#include "spdreg/session_io.hpp"
#include "spdreg/synth_data.hpp"

namespace fs = std::filesystem;
using namespace spdreg;

namespace {

std::vector<FeatureSet> parse_feature_sets(const std::vector<std::string>& names) {
    std::vector<FeatureSet> sets;
    for (const auto& name : names) sets.push_back(feature_set_from_name(name));
    return sets;
}

struct SpecOverrides {
    std::string config_path;
    std::uint64_t seed = 0;
    int folds = 0;
    int repeats = 0;
    double edge_guard = 0.0;
    std::vector<std::string> feature_sets;
    std::vector<std::string> regressors;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* folds_opt = nullptr;
    CLI::Option* repeats_opt = nullptr;
    CLI::Option* edge_opt = nullptr;
    CLI::Option* sets_opt = nullptr;
    CLI::Option* reg_opt = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path,
                        "experiment spec, TOML or JSON")
            ->check(CLI::ExistingFile);
        seed_opt = cmd->add_option("--seed", seed, "master random seed");
        folds_opt = cmd->add_option("--folds", folds, "cross-validation folds");
        repeats_opt = cmd->add_option("--repeats", repeats, "shuffled repeats");
        edge_opt = cmd->add_option("--edge-guard", edge_guard,
                                   "fraction trimmed from each trial edge");
        sets_opt = cmd->add_option("--feature-sets", feature_sets,
                                   "subset of fs1,fs2,fs3")
                       ->delimiter(',');
        reg_opt = cmd->add_option("--regressors", regressors,
                                  "subset of lasso,knn")
                      ->delimiter(',');
    }

    ExperimentSpec resolve() const {
        ExperimentSpec spec;
        if (!config_path.empty()) {
            spec = ExperimentSpec::from_json(load_config(config_path));
        }
        if (seed_opt->count()) spec.seed = seed;
        if (folds_opt->count()) spec.folds = folds;
        if (repeats_opt->count()) spec.repeats = repeats;
        if (edge_opt->count()) spec.edge_guard = edge_guard;
        if (sets_opt->count()) spec.feature_sets = parse_feature_sets(feature_sets);
        if (reg_opt->count()) spec.regressors = regressors;
        spec.validate();
        return spec;
    }
};

std::vector<SessionRecording> load_sessions(const ExperimentSpec& spec,
                                            const std::vector<std::string>& extra) {
    std::vector<std::string> paths = spec.dataset_paths;
    paths.insert(paths.end(), extra.begin(), extra.end());
    if (paths.empty()) {
        throw InvalidInputError(
            "no input sessions: pass paths or dataset_paths in the config");
    }
    std::vector<SessionRecording> recordings;
    recordings.reserve(paths.size());
    for (const auto& p : paths) recordings.push_back(read_session(p));
    return recordings;
}

void print_matrix(const MatrixResult& result) {
    std::printf("%-8s %-4s %-6s %9s %8s\n", "subject", "set", "model", "rmse",
                "cc");
    for (const CellResult& cell : result.cells) {
        if (!cell.error.empty()) {
            std::printf("%-8s %-4s %-6s   failed: %s\n", cell.subject_id.c_str(),
                        feature_set_name(cell.feature_set).c_str(),
                        cell.regressor.c_str(), cell.error.c_str());
            continue;
        }
        std::printf("%-8s %-4s %-6s %9.4f %8.4f%s\n", cell.subject_id.c_str(),
                    feature_set_name(cell.feature_set).c_str(),
                    cell.regressor.c_str(), cell.rmse, cell.cc,
                    cell.degenerate ? "  (degenerate)" : "");
    }
    std::printf("\naverages across subjects:\n");
    for (const auto& avg : result.summary.averages) {
        std::printf("  %-4s %-6s rmse %.4f  cc %.4f\n",
                    feature_set_name(avg.feature_set).c_str(),
                    avg.regressor.c_str(), avg.rmse, avg.cc);
    }
    if (!result.summary.improvements.empty()) {
        std::printf("\npairwise change (negative rmse%%, positive cc%% = better):\n");
        for (const auto& imp : result.summary.improvements) {
            std::printf("  %s: %s -> %s  rmse %+.1f%%  cc %+.1f%%\n",
                        imp.regressor.c_str(),
                        feature_set_name(imp.baseline).c_str(),
                        feature_set_name(imp.improved).c_str(), imp.rmse_pct,
                        imp.cc_pct);
        }
    }
}

int cmd_synth(const GeneratorConfig& cfg, int subjects, const fs::path& out) {
    fs::create_directories(out);
    const std::vector<SynthSession> sessions = generate_benchmark(cfg, subjects);
    nlohmann::json manifest;
    std::vector<std::string> paths;
    for (const SynthSession& session : sessions) {
        const fs::path path = out / (session.recording.subject_id + ".bin");
        write_synth_session(path, session);
        paths.push_back(path.string());
        std::printf("%s: %zu events, %.0f s at %.0f Hz\n",
                    session.recording.subject_id.c_str(),
                    session.recording.events.size(),
                    session.recording.duration(), session.recording.sample_rate);
    }
    manifest["dataset_paths"] = paths;
    std::ofstream mf(out / "manifest.json");
    mf << manifest.dump(2) << '\n';
    std::printf("wrote %zu sessions + manifest.json to %s\n", sessions.size(),
                out.string().c_str());
    return 0;
}

int cmd_preprocess(const std::vector<std::string>& inputs,
                   const PreprocessConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    for (const auto& input : inputs) {
        const SessionRecording rec = read_session(input);
        const RtStats stats = RtStats::compute(rec.events);
        const EpochResult result = preprocess_session(rec, stats, cfg);
        const fs::path path = out / (fs::path(input).stem().string() + ".trials.bin");
        write_trials(path, result.trials, rec.sample_rate, rec.subject_id);
        std::printf("%s: %zu trials (%d skipped), rt threshold %.3f s -> %s\n",
                    rec.subject_id.c_str(), result.trials.size(), result.skipped,
                    stats.threshold, path.string().c_str());
    }
    return 0;
}

int cmd_features(const std::string& input, const ExperimentSpec& spec,
                 const fs::path& out) {
    fs::create_directories(out);
    const TrialSet set = read_trials(input);
    if (set.trials.empty()) throw InvalidInputError("no trials in " + input);
    PsdConfig psd = spec.psd;
    psd.sample_rate = set.sample_rate;
    if (psd.window_length <= 0) {
        psd.window_length = static_cast<int>(std::lround(set.sample_rate));
    }
    const std::string stem = fs::path(input).stem().string();

    for (FeatureSet fs_tag : spec.feature_sets) {
        FeatureMatrix fm;
        fm.feature_set = fs_tag;
        SpatialFilterBank bank;
        TangentSpaceModel* tangent = nullptr;
        std::optional<TangentSpaceModel> tangent_store;
        if (fs_tag != FeatureSet::FS1) {
            bank = train_filter_bank(set.trials, spec.filter_configs.at(fs_tag),
                                     spec.shrinkage);
        }
        if (fs_tag == FeatureSet::FS3) {
            tangent_store = TangentSpaceModel::fit(set.trials, bank, MeanConfig{},
                                                   spec.shrinkage, spec.edge_guard);
            tangent = &*tangent_store;
        }
        for (std::size_t i = 0; i < set.trials.size(); ++i) {
            const Trial& t = set.trials[i];
            FeatureVector fv;
            switch (fs_tag) {
                case FeatureSet::FS1: fv = extract_fs1(t, psd); break;
                case FeatureSet::FS2: fv = extract_fs2(t, bank, psd); break;
                case FeatureSet::FS3: fv = extract_fs3(t, *tangent); break;
            }
            if (i == 0) fm.values.resize(set.trials.size(), fv.dim());
            fm.values.row(static_cast<Eigen::Index>(i)) = fv.values.transpose();
            fm.labels.push_back(t.label);
        }
        const fs::path path =
            out / (stem + "_" + feature_set_name(fs_tag) + ".csv");
        write_features_csv(path, fm);
        std::printf("%s: %d x %d -> %s\n", feature_set_name(fs_tag).c_str(),
                    fm.n(), fm.dim(), path.string().c_str());
    }
    if (spec.feature_sets.size() > 1 ||
        spec.feature_sets.front() != FeatureSet::FS1) {
        std::printf(
            "note: filter banks here are fit on the full input; use `eval` for "
            "leakage-free scoring\n");
    }
    return 0;
}

int cmd_train(const std::string& input, const ExperimentSpec& spec,
              FeatureSet fs_tag, const std::string& regressor,
              const fs::path& out) {
    fs::create_directories(out);
    const TrialSet set = read_trials(input);
    if (set.trials.empty()) throw InvalidInputError("no trials in " + input);
    PsdConfig psd = spec.psd;
    psd.sample_rate = set.sample_rate;
    if (psd.window_length <= 0) {
        psd.window_length = static_cast<int>(std::lround(set.sample_rate));
    }

    nlohmann::json model_json;
    model_json["feature_set"] = feature_set_name(fs_tag);
    model_json["regressor"] = regressor;

    std::optional<SpatialFilterBank> bank;
    std::optional<TangentSpaceModel> tangent;
    if (fs_tag != FeatureSet::FS1) {
        bank = train_filter_bank(set.trials, spec.filter_configs.at(fs_tag),
                                 spec.shrinkage);
    }
    if (fs_tag == FeatureSet::FS3) {
        tangent = TangentSpaceModel::fit(set.trials, *bank, MeanConfig{},
                                         spec.shrinkage, spec.edge_guard);
        model_json["tangent"] = tangent->to_json();
    } else if (bank) {
        model_json["filter_bank"] = bank->to_json();
    }

    FeatureMatrix fm;
    fm.feature_set = fs_tag;
    for (std::size_t i = 0; i < set.trials.size(); ++i) {
        const Trial& t = set.trials[i];
        FeatureVector fv;
        switch (fs_tag) {
            case FeatureSet::FS1: fv = extract_fs1(t, psd); break;
            case FeatureSet::FS2: fv = extract_fs2(t, *bank, psd); break;
            case FeatureSet::FS3: fv = extract_fs3(t, *tangent); break;
        }
        if (i == 0) fm.values.resize(set.trials.size(), fv.dim());
        fm.values.row(static_cast<Eigen::Index>(i)) = fv.values.transpose();
        fm.labels.push_back(t.label);
    }

    Vector y(fm.n());
    for (int i = 0; i < fm.n(); ++i) y(i) = fm.labels[static_cast<std::size_t>(i)];
    if (regressor == "lasso") {
        const LassoModel lasso =
            lasso_fit_cv(fm.values, y, spec.lasso_inner_folds, spec.lasso_grid);
        model_json["model"] = lasso.to_json();
        std::printf("lasso: lambda %.6g, %d of %d coefficients active\n",
                    lasso.lambda,
                    static_cast<int>((lasso.coefficients.array() != 0.0).count()),
                    fm.dim());
    } else {
        const fs::path features_path = out / "train_features.bin";
        write_features_bin(features_path, fm);
        KnnModel knn;
        knn.k = spec.knn_k;
        knn.train_features = fm.values;
        knn.train_labels = y;
        knn.dataset_path = features_path.string();
        knn.row_indices.resize(static_cast<std::size_t>(fm.n()));
        for (int i = 0; i < fm.n(); ++i) {
            knn.row_indices[static_cast<std::size_t>(i)] = i;
        }
        model_json["model"] = knn.to_json();
        std::printf("knn: k=%d over %d training trials -> %s\n", knn.k, fm.n(),
                    features_path.string().c_str());
    }

    const fs::path model_path = out / "model.json";
    std::ofstream mf(model_path);
    mf << model_json.dump(2) << '\n';
    std::printf("wrote %s\n", model_path.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatial-covariance regression workbench"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark");
    GeneratorConfig gen;
    int synth_subjects = 16;
    std::string synth_out = "synth_out";
    synth->add_option("--subjects", synth_subjects, "number of subjects");
    synth->add_option("--channels", gen.channels, "sensor channels");
    synth->add_option("--sample-rate", gen.sample_rate, "Hz");
    synth->add_option("--length", gen.session_length, "session seconds");
    synth->add_option("--event-rate", gen.event_rate, "mean seconds between events");
    synth->add_option("--coupling", gen.coupling, "latent-to-signal coupling in [0,1]");
    synth->add_option("--noise-floor", gen.noise_floor, "noise scale");
    synth->add_option("--seed", gen.seed, "master random seed");
    synth->add_option("--out", synth_out, "output directory");

    // preprocess
    auto* prep = app.add_subcommand("preprocess",
                                    "outlier-clean, smooth, epoch, band-pass");
    std::vector<std::string> prep_inputs;
    PreprocessConfig prep_cfg;
    std::string prep_out = "trials_out";
    prep->add_option("sessions", prep_inputs, "session files")
        ->required()
        ->check(CLI::ExistingFile);
    prep->add_option("--trial-length", prep_cfg.trial_length_s, "epoch seconds");
    prep->add_option("--low-hz", prep_cfg.band_low_hz, "band-pass low edge");
    prep->add_option("--high-hz", prep_cfg.band_high_hz, "band-pass high edge");
    prep->add_option("--smooth-window", prep_cfg.smooth_window_s,
                     "rt smoothing window seconds");
    prep->add_option("--out", prep_out, "output directory");

    // features
    auto* feat = app.add_subcommand("features", "extract and dump feature sets");
    std::string feat_input;
    std::string feat_out = "features_out";
    SpecOverrides feat_spec;
    feat->add_option("trials", feat_input, "preprocessed trials file")
        ->required()
        ->check(CLI::ExistingFile);
    feat->add_option("--out", feat_out, "output directory");
    feat_spec.attach(feat);

    // train
    auto* train = app.add_subcommand("train", "fit one model on a trial set");
    std::string train_input;
    std::string train_fs = "fs3";
    std::string train_regressor = "lasso";
    std::string train_out = "model_out";
    SpecOverrides train_spec;
    train->add_option("trials", train_input, "preprocessed trials file")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--feature-set", train_fs, "fs1, fs2 or fs3");
    train->add_option("--regressor", train_regressor, "lasso or knn");
    train->add_option("--out", train_out, "output directory");
    train_spec.attach(train);

    // eval
    auto* eval = app.add_subcommand("eval",
                                    "repeated cross-validated model comparison");
    std::vector<std::string> eval_inputs;
    std::string eval_out = "eval_out";
    bool strict = false;
    SpecOverrides eval_spec;
    eval->add_option("sessions", eval_inputs, "session files (adds to config)")
        ->check(CLI::ExistingFile);
    eval->add_option("--out", eval_out, "output directory");
    eval->add_flag("--strict", strict, "exit nonzero when any cell fails");
    eval_spec.attach(eval);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "parameter sweep over the grid");
    std::vector<std::string> sweep_inputs;
    std::string sweep_out = "sweep_out";
    std::vector<int> sweep_filters;
    std::vector<double> sweep_lengths;
    SpecOverrides sweep_spec;
    sweep->add_option("sessions", sweep_inputs, "session files (adds to config)")
        ->check(CLI::ExistingFile);
    sweep->add_option("--out", sweep_out, "output directory");
    sweep->add_option("--filters", sweep_filters,
                      "filters-per-class values to sweep")
        ->delimiter(',');
    sweep->add_option("--trial-lengths", sweep_lengths,
                      "trial lengths (s) to sweep")
        ->delimiter(',');
    sweep_spec.attach(sweep);

    // bench
    auto* bench = app.add_subcommand("bench", "training-time scaling fit");
    std::vector<int> bench_n{100, 200, 400, 800};
    TimingConfig bench_cfg;
    std::string bench_out;
    bench->add_option("--n-values", bench_n, "trial counts, ascending")
        ->delimiter(',');
    bench->add_option("--channels", bench_cfg.channels, "sensor channels");
    bench->add_option("--sample-rate", bench_cfg.sample_rate, "Hz");
    bench->add_option("--trial-length", bench_cfg.trial_length, "epoch seconds");
    bench->add_option("--k-classes", bench_cfg.filters.k_classes, "filter classes");
    bench->add_option("--filters-per-class", bench_cfg.filters.filters_per_class,
                      "filters per class");
    bench->add_option("--seed", bench_cfg.seed, "master random seed");
    bench->add_option("--out", bench_out, "output directory (optional)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(synth)) {
            return cmd_synth(gen, synth_subjects, synth_out);
        }
        if (app.got_subcommand(prep)) {
            return cmd_preprocess(prep_inputs, prep_cfg, prep_out);
        }
        if (app.got_subcommand(feat)) {
            return cmd_features(feat_input, feat_spec.resolve(), feat_out);
        }
        if (app.got_subcommand(train)) {
            return cmd_train(train_input, train_spec.resolve(),
                             feature_set_from_name(train_fs), train_regressor,
                             train_out);
        }
        if (app.got_subcommand(eval)) {
            const ExperimentSpec spec = eval_spec.resolve();
            std::vector<SubjectData> subjects;
            for (const SessionRecording& rec : load_sessions(spec, eval_inputs)) {
                subjects.push_back(prepare_subject(rec, spec));
            }
            const MatrixResult result = run_matrix(subjects, spec);
            write_matrix_outputs(eval_out, result, spec);
            print_matrix(result);
            int failed = 0;
            for (const auto& cell : result.cells) {
                if (!cell.error.empty()) ++failed;
            }
            std::printf("\nwrote results.csv, predictions/, summary.json to %s\n",
                        eval_out.c_str());
            if (failed > 0) {
                std::fprintf(stderr, "%d cell(s) failed\n", failed);
                return strict ? 1 : 0;
            }
            return 0;
        }
        if (app.got_subcommand(sweep)) {
            ExperimentSpec spec = sweep_spec.resolve();
            if (!sweep_filters.empty()) {
                spec.sweep_filters = sweep_filters;
                spec.sweep_trial_lengths.clear();
            }
            if (!sweep_lengths.empty()) {
                spec.sweep_trial_lengths = sweep_lengths;
                if (!sweep_filters.empty()) {
                    throw InvalidInputError("choose one sweep axis, not both");
                }
            }
            spec.validate();
            const auto recordings = load_sessions(spec, sweep_inputs);
            const std::vector<SweepRow> rows = run_sweep(recordings, spec);
            fs::create_directories(sweep_out);
            const fs::path csv = fs::path(sweep_out) / "sweep.csv";
            write_sweep_csv(csv, rows);
            for (const SweepRow& row : rows) {
                std::printf("%s=%-6g %-4s %-6s rmse %.4f  cc %.4f%s\n",
                            row.axis.c_str(), row.value,
                            feature_set_name(row.feature_set).c_str(),
                            row.regressor.c_str(), row.rmse, row.cc,
                            row.failed_cells
                                ? ("  [" + std::to_string(row.failed_cells) +
                                   " failed: " + row.first_error + "]")
                                      .c_str()
                                : "");
            }
            std::printf("wrote %s\n", csv.string().c_str());
            return 0;
        }
        if (app.got_subcommand(bench)) {
            const TimingFit fit = time_training(bench_n, bench_cfg);
            for (std::size_t i = 0; i < fit.n_values.size(); ++i) {
                std::printf("N=%-5d %.4f s\n", fit.n_values[i], fit.seconds[i]);
            }
            std::printf("time ~ %.4f + %.6f * N seconds (R^2 = %.4f)\n",
                        fit.intercept, fit.slope, fit.r_squared);
            if (!bench_out.empty()) {
                fs::create_directories(bench_out);
                std::ofstream csv(fs::path(bench_out) / "timing.csv");
                csv << "n,seconds\n";
                for (std::size_t i = 0; i < fit.n_values.size(); ++i) {
                    csv << fit.n_values[i] << ',' << fit.seconds[i] << '\n';
                }
                nlohmann::json j{{"intercept", fit.intercept},
                                 {"slope", fit.slope},
                                 {"r_squared", fit.r_squared}};
                std::ofstream jf(fs::path(bench_out) / "timing.json");
                jf << j.dump(2) << '\n';
                std::printf("wrote timing.csv, timing.json to %s\n",
                            bench_out.c_str());
            }
            return 0;
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
