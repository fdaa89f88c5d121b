#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <vector>

#include "spdreg/errors.hpp"
#include "spdreg/feature_extract.hpp"
#include "spdreg/preprocess.hpp"
#include "spdreg/regression.hpp"
#include "spdreg/session_io.hpp"
#include "spdreg/spatial_filter.hpp"
#include "spdreg/spd_manifold.hpp"
#include "spdreg/synth_data.hpp"

namespace py = pybind11;
using namespace spdreg;

namespace {

std::vector<SpdMatrix> as_spd(const std::vector<Matrix>& mats, double shrinkage) {
    std::vector<SpdMatrix> out;
    out.reserve(mats.size());
    for (const auto& m : mats) out.emplace_back(m, shrinkage);
    return out;
}

}  // namespace

PYBIND11_MODULE(spdreg, m) {
    m.doc() = "Spatial-covariance regression toolkit: Riemannian geometry of "
              "SPD matrices, supervised spatial filtering, band-power and "
              "tangent-space features, and sparse/neighbour regressors.";

    py::register_exception<Error>(m, "Error");

    // ---- manifold ----------------------------------------------------------
    m.def("riemannian_distance",
          [](const Matrix& a, const Matrix& b) {
              return riemannian_distance(SpdMatrix(a), SpdMatrix(b));
          },
          py::arg("a"), py::arg("b"),
          "Affine-invariant geodesic distance between two SPD matrices.");
    m.def("matrix_log", [](const Matrix& a) { return matrix_log(SpdMatrix(a)); },
          py::arg("a"), "Principal matrix logarithm of an SPD matrix.");
    m.def("matrix_exp", [](const Matrix& a) { return matrix_exp(a).value(); },
          py::arg("a"), "Matrix exponential of a symmetric matrix (SPD result).");
    m.def("log_map",
          [](const Matrix& base, const Matrix& x) {
              return log_map(SpdMatrix(base), SpdMatrix(x));
          },
          py::arg("base"), py::arg("x"),
          "Project x onto the tangent space at base.");
    m.def("exp_map",
          [](const Matrix& base, const Matrix& v) {
              return exp_map(SpdMatrix(base), v).value();
          },
          py::arg("base"), py::arg("v"), "Inverse of log_map.");
    m.def("tangent_vectorize",
          [](const Matrix& base, const Matrix& x) {
              return tangent_vectorize(SpdMatrix(base), SpdMatrix(x)).entries();
          },
          py::arg("base"), py::arg("x"),
          "Weighted upper-triangular tangent coordinates; the Euclidean norm "
          "equals the geodesic distance.");
    m.def("tangent_dim", &tangent_dim, py::arg("r"));
    m.def("intrinsic_mean",
          [](const std::vector<Matrix>& mats, double tolerance,
             int max_iterations, double shrinkage) {
              MeanConfig cfg;
              cfg.tolerance = tolerance;
              cfg.max_iterations = max_iterations;
              const auto spd = as_spd(mats, shrinkage);
              return intrinsic_mean(spd, cfg).value();
          },
          py::arg("mats"), py::arg("tolerance") = 1e-8,
          py::arg("max_iterations") = 50, py::arg("shrinkage") = 0.0,
          "Karcher mean of a list of SPD matrices.");

    // ---- trials and preprocessing -----------------------------------------
    py::class_<Trial>(m, "Trial")
        .def(py::init([](Matrix data, double label, double onset_time) {
                 Trial t;
                 t.data = std::move(data);
                 t.label = label;
                 t.onset_time = onset_time;
                 return t;
             }),
             py::arg("data"), py::arg("label") = 0.0, py::arg("onset_time") = 0.0)
        .def_readwrite("data", &Trial::data)
        .def_readwrite("label", &Trial::label)
        .def_readwrite("onset_time", &Trial::onset_time)
        .def_property_readonly("channels", &Trial::channels)
        .def_property_readonly("samples", &Trial::samples)
        .def("__repr__", [](const Trial& t) {
            return "Trial(" + std::to_string(t.channels()) + "x" +
                   std::to_string(t.samples()) + ", label=" +
                   std::to_string(t.label) + ")";
        });

    py::class_<TimedRt>(m, "TimedRt")
        .def(py::init([](double time, double rt) { return TimedRt{time, rt}; }),
             py::arg("time"), py::arg("rt"))
        .def_readwrite("time", &TimedRt::time)
        .def_readwrite("rt", &TimedRt::rt);

    py::class_<SessionRecording>(m, "SessionRecording")
        .def(py::init<>())
        .def_readwrite("sample_rate", &SessionRecording::sample_rate)
        .def_readwrite("continuous_data", &SessionRecording::continuous_data)
        .def_readwrite("events", &SessionRecording::events)
        .def_readwrite("subject_id", &SessionRecording::subject_id)
        .def_property_readonly("channels", &SessionRecording::channels)
        .def_property_readonly("duration", &SessionRecording::duration);

    py::class_<RtStats>(m, "RtStats")
        .def_readonly("mean", &RtStats::mean)
        .def_readonly("std", &RtStats::std)
        .def_readonly("threshold", &RtStats::threshold)
        .def_static("compute",
                    [](const std::vector<double>& rts) {
                        return RtStats::compute(std::span<const double>(rts));
                    },
                    py::arg("rts"));

    py::class_<PreprocessConfig>(m, "PreprocessConfig")
        .def(py::init<>())
        .def_readwrite("band_low_hz", &PreprocessConfig::band_low_hz)
        .def_readwrite("band_high_hz", &PreprocessConfig::band_high_hz)
        .def_readwrite("fir_order", &PreprocessConfig::fir_order)
        .def_readwrite("smooth_window_s", &PreprocessConfig::smooth_window_s)
        .def_readwrite("trial_length_s", &PreprocessConfig::trial_length_s);

    m.def("bandpass_trial", &bandpass_trial, py::arg("trial"), py::arg("low_hz"),
          py::arg("high_hz"), py::arg("sample_rate"), py::arg("order") = 0,
          "Zero-phase FIR band-pass per channel.");
    m.def("preprocess_session",
          [](const SessionRecording& rec, const PreprocessConfig& cfg) {
              const auto stats = RtStats::compute(rec.events);
              auto result = preprocess_session(rec, stats, cfg);
              return py::make_tuple(std::move(result.trials), result.skipped);
          },
          py::arg("recording"), py::arg("config") = PreprocessConfig{},
          "Outlier removal, smoothing, epoching and band-pass for one session; "
          "returns (trials, n_skipped).");

    // ---- spatial filters ---------------------------------------------------
    py::class_<FilterConfig>(m, "FilterConfig")
        .def(py::init([](int k_classes, int filters_per_class) {
                 return FilterConfig{k_classes, filters_per_class};
             }),
             py::arg("k_classes") = 3, py::arg("filters_per_class") = 10)
        .def_readwrite("k_classes", &FilterConfig::k_classes)
        .def_readwrite("filters_per_class", &FilterConfig::filters_per_class);

    py::class_<FuzzyPartition>(m, "FuzzyPartition")
        .def_readonly("k_classes", &FuzzyPartition::k_classes)
        .def_readonly("percentile_points", &FuzzyPartition::percentile_points)
        .def_readonly("percentile_values", &FuzzyPartition::percentile_values)
        .def("memberships", &FuzzyPartition::memberships, py::arg("y"));

    py::class_<SpatialFilterBank>(m, "SpatialFilterBank")
        .def_readonly("weights", &SpatialFilterBank::weights)
        .def_readonly("config", &SpatialFilterBank::config)
        .def_readonly("partition", &SpatialFilterBank::partition)
        .def_readonly("eigenvalues", &SpatialFilterBank::eigenvalues)
        .def_property_readonly("channels", &SpatialFilterBank::channels)
        .def_property_readonly("n_filters", &SpatialFilterBank::n_filters)
        .def("to_json", [](const SpatialFilterBank& b) { return b.to_json().dump(); })
        .def_static("from_json", [](const std::string& s) {
            return SpatialFilterBank::from_json(nlohmann::json::parse(s));
        });

    m.def("build_partition",
          [](const std::vector<double>& labels, int k_classes) {
              return build_partition(labels, k_classes);
          },
          py::arg("labels"), py::arg("k_classes"));
    m.def("train_filter_bank",
          [](const std::vector<Trial>& trials, const FilterConfig& cfg,
             double shrinkage) {
              return train_filter_bank(trials, cfg, shrinkage);
          },
          py::arg("trials"), py::arg("config") = FilterConfig{},
          py::arg("shrinkage") = 0.0,
          "Fuzzy-partition the labels and solve the one-versus-rest "
          "Rayleigh-quotient filters.");
    m.def("apply_filter", &apply_filter, py::arg("bank"), py::arg("trial"));

    // ---- features ----------------------------------------------------------
    py::class_<PsdConfig>(m, "PsdConfig")
        .def(py::init<>())
        .def_readwrite("sample_rate", &PsdConfig::sample_rate)
        .def_readwrite("window_length", &PsdConfig::window_length)
        .def_readwrite("overlap", &PsdConfig::overlap)
        .def_readwrite("bands", &PsdConfig::bands);

    m.def("welch_band_power",
          [](const Vector& channel, const PsdConfig& cfg) {
              return welch_band_power(
                  std::span<const double>(channel.data(),
                                          static_cast<std::size_t>(channel.size())),
                  cfg);
          },
          py::arg("channel"), py::arg("config") = PsdConfig{},
          "Band-integrated Welch power per configured band, in dB.");
    m.def("trial_covariance",
          [](const Trial& t, double shrinkage, double edge_guard) {
              return trial_covariance(t, shrinkage, edge_guard).value();
          },
          py::arg("trial"), py::arg("shrinkage") = 0.0, py::arg("edge_guard") = 0.0);
    m.def("extract_fs1",
          [](const Trial& t, const PsdConfig& cfg) { return extract_fs1(t, cfg).values; },
          py::arg("trial"), py::arg("config") = PsdConfig{},
          "Raw per-channel band-power features (dB).");
    m.def("extract_fs2",
          [](const Trial& t, const SpatialFilterBank& bank, const PsdConfig& cfg) {
              return extract_fs2(t, bank, cfg).values;
          },
          py::arg("trial"), py::arg("bank"), py::arg("config") = PsdConfig{},
          "Band-power features after spatial filtering (dB).");

    py::class_<TangentSpaceModel>(m, "TangentSpaceModel")
        .def_static("fit",
                    [](const std::vector<Trial>& trials, const SpatialFilterBank& bank,
                       double shrinkage, double edge_guard) {
                        return TangentSpaceModel::fit(trials, bank, MeanConfig{},
                                                      shrinkage, edge_guard);
                    },
                    py::arg("trials"), py::arg("bank"), py::arg("shrinkage") = 0.0,
                    py::arg("edge_guard") = 0.0,
                    "Freeze the filter bank plus the intrinsic mean of the "
                    "filtered training covariances.")
        .def_property_readonly("reference_mean",
                               [](const TangentSpaceModel& m_) {
                                   return m_.reference_mean().value();
                               })
        .def_property_readonly("filter_bank", &TangentSpaceModel::filter_bank)
        .def_property_readonly("shrinkage", &TangentSpaceModel::shrinkage)
        .def_property_readonly("edge_guard", &TangentSpaceModel::edge_guard)
        .def("to_json", [](const TangentSpaceModel& m_) { return m_.to_json().dump(); })
        .def_static("from_json", [](const std::string& s) {
            return TangentSpaceModel::from_json(nlohmann::json::parse(s));
        });

    m.def("extract_fs3",
          [](const Trial& t, const TangentSpaceModel& model) {
              return extract_fs3(t, model).values;
          },
          py::arg("trial"), py::arg("model"),
          "Tangent-space features of the filtered trial covariance.");

    // ---- regressors --------------------------------------------------------
    py::class_<LassoModel>(m, "LassoModel")
        .def_readonly("intercept", &LassoModel::intercept)
        .def_readonly("coefficients", &LassoModel::coefficients)
        .def_readonly("lambda_", &LassoModel::lambda)
        .def_readonly("feature_means", &LassoModel::feature_means)
        .def_readonly("feature_scales", &LassoModel::feature_scales)
        .def("predict",
             [](const LassoModel& model, const Vector& x) {
                 return lasso_predict(model, x);
             },
             py::arg("x"))
        .def("to_json", [](const LassoModel& m_) { return m_.to_json().dump(); })
        .def_static("from_json", [](const std::string& s) {
            return LassoModel::from_json(nlohmann::json::parse(s));
        });

    m.def("lasso_lambda_max", &lasso_lambda_max, py::arg("x"), py::arg("y"));
    m.def("lasso_fit",
          [](const Matrix& x, const Vector& y, double lambda) {
              return lasso_fit(x, y, lambda);
          },
          py::arg("x"), py::arg("y"), py::arg("lambda_"));
    m.def("lasso_fit_cv",
          [](const Matrix& x, const Vector& y, int fold_count, int grid_size) {
              return lasso_fit_cv(x, y, fold_count, grid_size);
          },
          py::arg("x"), py::arg("y"), py::arg("fold_count") = 5,
          py::arg("grid_size") = 100,
          "Cross-validated penalty choice along the regularization path, then "
          "a refit on everything at the winner.");

    py::class_<KnnModel>(m, "KnnModel")
        .def(py::init([](int k, Matrix train_features, Vector train_labels) {
                 KnnModel model;
                 model.k = k;
                 model.train_features = std::move(train_features);
                 model.train_labels = std::move(train_labels);
                 return model;
             }),
             py::arg("k"), py::arg("train_features"), py::arg("train_labels"))
        .def_readwrite("k", &KnnModel::k)
        .def_readwrite("train_features", &KnnModel::train_features)
        .def_readwrite("train_labels", &KnnModel::train_labels)
        .def("predict",
             [](const KnnModel& model, const Vector& x) { return knn_predict(model, x); },
             py::arg("x"));

    // ---- synthetic sessions and IO ----------------------------------------
    py::class_<GeneratorConfig>(m, "GeneratorConfig")
        .def(py::init<>())
        .def_readwrite("channels", &GeneratorConfig::channels)
        .def_readwrite("sample_rate", &GeneratorConfig::sample_rate)
        .def_readwrite("session_length", &GeneratorConfig::session_length)
        .def_readwrite("event_rate", &GeneratorConfig::event_rate)
        .def_readwrite("coupling", &GeneratorConfig::coupling)
        .def_readwrite("noise_floor", &GeneratorConfig::noise_floor)
        .def_readwrite("latent_resolution", &GeneratorConfig::latent_resolution)
        .def_readwrite("seed", &GeneratorConfig::seed);

    py::class_<GroundTruth>(m, "GroundTruth")
        .def_readonly("latent_times", &GroundTruth::latent_times)
        .def_readonly("latent_path", &GroundTruth::latent_path)
        .def_readonly("true_rts", &GroundTruth::true_rts)
        .def_readonly("mixing", &GroundTruth::mixing);

    py::class_<SynthSession>(m, "SynthSession")
        .def_readonly("recording", &SynthSession::recording)
        .def_readonly("truth", &SynthSession::truth);

    m.def("generate_session", &generate_session, py::arg("config"),
          py::arg("subject_id") = "synth",
          "One synthetic vigilance session with ground truth.");
    m.def("write_session", &write_session, py::arg("path"), py::arg("recording"));
    m.def("read_session", &read_session, py::arg("path"));
    m.def("write_trials",
          [](const std::filesystem::path& path, const std::vector<Trial>& trials,
             double sample_rate, const std::string& subject_id) {
              write_trials(path, trials, sample_rate, subject_id);
          },
          py::arg("path"), py::arg("trials"), py::arg("sample_rate"),
          py::arg("subject_id"));
    m.def("read_trials",
          [](const std::filesystem::path& path) {
              auto set = read_trials(path);
              return py::make_tuple(std::move(set.trials), set.sample_rate,
                                    set.subject_id);
          },
          py::arg("path"), "Returns (trials, sample_rate, subject_id).");
}
