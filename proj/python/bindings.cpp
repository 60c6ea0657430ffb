#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ercfuse/audio_dsp.hpp"
#include "ercfuse/classifiers.hpp"
#include "ercfuse/corpus.hpp"
#include "ercfuse/evaluation.hpp"
#include "ercfuse/fusion.hpp"
#include "ercfuse/pipeline.hpp"
#include "ercfuse/synthetic.hpp"
#include "ercfuse/text_features.hpp"

namespace py = pybind11;
using namespace ercfuse;
namespace fs = std::filesystem;

namespace {

std::vector<ProbabilityDistribution> to_dists(const std::vector<std::vector<double>>& rows) {
    std::vector<ProbabilityDistribution> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        out.emplace_back(r);
    }
    return out;
}

FrameConfig frame_config(int sample_rate, const py::kwargs& kw) {
    auto cfg = FrameConfig::standard(sample_rate);
    for (const auto& [key, value] : kw) {
        const auto k = key.cast<std::string>();
        if (k == "frame_length") cfg.frame_length = value.cast<std::size_t>();
        else if (k == "hop") cfg.hop = value.cast<std::size_t>();
        else if (k == "n_fft") cfg.n_fft = value.cast<std::size_t>();
        else if (k == "n_mels") cfg.n_mels = value.cast<std::size_t>();
        else if (k == "n_mfcc") cfg.n_mfcc = value.cast<std::size_t>();
        else if (k == "pre_emphasis") cfg.pre_emphasis = value.cast<double>();
        else if (k == "fmin") cfg.fmin = value.cast<double>();
        else if (k == "fmax") cfg.fmax = value.cast<double>();
        else if (k == "log_floor") cfg.log_floor = value.cast<double>();
        else throw py::type_error("unknown frame option '" + k + "'");
    }
    return cfg;
}

py::dict report_dict(const EvaluationReport& r) {
    py::dict d;
    d["model_name"] = r.model_name;
    d["n"] = r.n;
    d["accuracy"] = r.accuracy;
    d["macro_f1"] = r.macro_f1;
    d["labels"] = r.labels;
    d["confusion"] = r.confusion;
    d["timing_seconds"] = r.timing_seconds ? py::cast(*r.timing_seconds) : py::none();
    d["config_hash"] = r.config_hash;
    d["seed"] = r.seed;
    return d;
}

std::vector<std::vector<double>> frames_to_rows(const FrameMatrix& m) {
    std::vector<std::vector<double>> rows(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        rows[r].assign(m.row(r).begin(), m.row(r).end());
    }
    return rows;
}

}  // namespace

PYBIND11_MODULE(_ercfuse, m) {
    m.doc() = "Native core of ercfuse";

    static py::exception<Error> base_error(m, "ErcfuseError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            PyErr_SetString(base_error.ptr(), e.what());
        }
    });

    // text
    m.def("tokenize", &tokenize, py::arg("text"));

    py::class_<Vocabulary>(m, "Vocabulary")
        .def_property_readonly("terms", &Vocabulary::terms)
        .def_property_readonly("df", &Vocabulary::df)
        .def_property_readonly("n_docs", &Vocabulary::n_docs)
        .def("idf", &Vocabulary::idf)
        .def("to_json", &Vocabulary::to_json)
        .def_static("from_json", [](const std::string& s) { return Vocabulary::from_json(s); })
        .def("__len__", &Vocabulary::size);

    m.def(
        "build_vocabulary",
        [](const std::vector<TokenList>& docs, std::size_t min_df, std::size_t max_terms) {
            return build_vocabulary(docs, {min_df, max_terms});
        },
        py::arg("docs"), py::arg("min_df") = 2, py::arg("max_terms") = 20000);
    m.def("tfidf_vector", &tfidf_vector, py::arg("tokens"), py::arg("vocab"));

    // audio
    m.def(
        "decode_wav",
        [](py::bytes data) {
            const std::string raw = data;
            const auto w = decode_wav(
                std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
            return py::make_tuple(w.samples, w.sample_rate);
        },
        py::arg("data"), "Returns (samples, sample_rate).");
    m.def(
        "read_wav",
        [](const fs::path& p) {
            const auto w = read_wav(p);
            return py::make_tuple(w.samples, w.sample_rate);
        },
        py::arg("path"));
    m.def(
        "write_wav",
        [](const fs::path& p, std::vector<double> samples, int rate) {
            write_wav_pcm16(Waveform{std::move(samples), rate}, p);
        },
        py::arg("path"), py::arg("samples"), py::arg("sample_rate"));
    m.def(
        "resample",
        [](std::vector<double> samples, int rate, int target) {
            return resample(Waveform{std::move(samples), rate}, target).samples;
        },
        py::arg("samples"), py::arg("sample_rate"), py::arg("target_rate"));
    m.def(
        "mfcc",
        [](std::vector<double> samples, int rate, const py::kwargs& kw) {
            return frames_to_rows(mfcc(Waveform{std::move(samples), rate}, frame_config(rate, kw)));
        },
        py::arg("samples"), py::arg("sample_rate"), "Frames x coefficients; frame options as keywords.");
    m.def(
        "audio_features",
        [](std::vector<double> samples, int rate, int target, const py::kwargs& kw) {
            return audio_features(Waveform{std::move(samples), rate}, frame_config(target, kw), target);
        },
        py::arg("samples"), py::arg("sample_rate"), py::arg("target_rate") = 16000);
    m.def(
        "mel_filterbank",
        [](int rate, const py::kwargs& kw) {
            const auto cfg = frame_config(rate, kw);
            const auto flat = mel_filterbank(cfg, rate);
            const std::size_t bins = cfg.n_fft / 2 + 1;
            std::vector<std::vector<double>> rows(cfg.n_mels);
            for (std::size_t i = 0; i < cfg.n_mels; ++i) {
                rows[i].assign(flat.begin() + i * bins, flat.begin() + (i + 1) * bins);
            }
            return rows;
        },
        py::arg("sample_rate") = 16000);

    // classifiers
    py::class_<SoftmaxModel>(m, "SoftmaxModel")
        .def_property_readonly("labels", [](const SoftmaxModel& s) { return s.label_set.labels(); })
        .def_readonly("feature_dim", &SoftmaxModel::feature_dim)
        .def_readonly("weights", &SoftmaxModel::weights)
        .def_readonly("bias", &SoftmaxModel::bias)
        .def_readonly("loss_trace", &SoftmaxModel::loss_trace)
        .def("logits", [](const SoftmaxModel& s, const FeatureVector& x) { return s.logits(x); })
        .def("predict_proba", [](const SoftmaxModel& s, const FeatureVector& x) { return predict_proba(s, x).probs(); })
        .def("save", [](const SoftmaxModel& s, const fs::path& p) { save_model(s, p); })
        .def_static("load", [](const fs::path& p) { return load_model(p); })
        .def_static("zeros", [](const std::vector<std::string>& labels, std::size_t dim) {
            return SoftmaxModel::zeros(LabelSet(labels), dim);
        });

    m.def(
        "train_softmax",
        [](const std::vector<FeatureVector>& xs, const std::vector<LabelIndex>& ys,
           const std::vector<std::string>& labels, double lr, std::size_t epochs, std::size_t batch_size, double l2,
           std::uint64_t seed, bool shuffle, bool class_weighting, bool standardize) {
            TrainConfig cfg{lr, epochs, batch_size, l2, seed, shuffle, class_weighting, standardize};
            py::gil_scoped_release release;
            return train_softmax(xs, ys, LabelSet(labels), cfg);
        },
        py::arg("features"), py::arg("labels"), py::arg("label_names"), py::arg("learning_rate") = 0.1,
        py::arg("epochs") = 50, py::arg("batch_size") = 32, py::arg("l2") = 1e-4, py::arg("seed") = 0,
        py::arg("shuffle") = true, py::arg("class_weighting") = false, py::arg("standardize") = false);

    m.def(
        "loss_and_gradient",
        [](const SoftmaxModel& model, const std::vector<FeatureVector>& xs, const std::vector<LabelIndex>& ys,
           double l2) {
            if (xs.size() != ys.size()) {
                throw DimensionError("features and labels differ in length");
            }
            std::vector<Example> batch;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                batch.push_back({xs[i], ys[i]});
            }
            auto r = loss_and_gradient(model, batch, l2);
            return py::make_tuple(r.loss, r.grad.weights, r.grad.bias);
        },
        py::arg("model"), py::arg("features"), py::arg("labels"), py::arg("l2") = 0.0,
        "Returns (loss, weight_gradient, bias_gradient).");

    m.def(
        "load_predictions",
        [](const fs::path& p, const std::vector<std::string>& labels) {
            const auto t = load_external_predictions(p, LabelSet(labels));
            std::map<std::string, std::vector<double>> rows;
            for (const auto& [id, d] : t.rows) {
                rows.emplace(id, d.probs());
            }
            return py::make_tuple(t.model_name, rows);
        },
        py::arg("path"), py::arg("label_names"), "Returns (model_name, {id: probabilities}).");

    // fusion
    m.def(
        "weighted_average",
        [](const std::vector<std::vector<double>>& dists, const std::vector<double>& weights) {
            return weighted_average(to_dists(dists), weights).probs();
        },
        py::arg("dists"), py::arg("weights"));
    m.def(
        "plurality_vote", [](const std::vector<std::vector<double>>& dists) { return plurality_vote(to_dists(dists)); },
        py::arg("dists"));
    m.def("simplex_grid", &simplex_grid, py::arg("parts"), py::arg("units"));

    // evaluation
    m.def("accuracy", &accuracy, py::arg("pred"), py::arg("gold"));
    m.def("macro_f1", &macro_f1, py::arg("pred"), py::arg("gold"), py::arg("n_labels"));
    m.def("confusion_matrix", &confusion_matrix, py::arg("pred"), py::arg("gold"), py::arg("n_labels"));
    m.def("reference_baselines", [] {
        py::list out;
        for (const auto& e : ReferenceBaselines::published().entries()) {
            py::dict d;
            d["name"] = e.name;
            d["modality"] = e.modality;
            d["accuracy"] = e.accuracy;
            d["execution_seconds"] = e.execution_seconds ? py::cast(*e.execution_seconds) : py::none();
            d["source"] = e.source;
            out.append(d);
        }
        return out;
    });
    m.def(
        "read_report", [](const fs::path& p) { return report_dict(read_report(p)); }, py::arg("path"));

    // corpus
    m.def(
        "stratified_split",
        [](const fs::path& manifest, double ratio, std::uint64_t seed) {
            const auto s = stratified_split(load_manifest(manifest), ratio, seed);
            return py::make_tuple(s.train_ids, s.test_ids);
        },
        py::arg("manifest"), py::arg("ratio") = 0.8, py::arg("seed") = 42, "Returns (train_ids, test_ids).");
    m.def(
        "label_histogram", [](const fs::path& manifest) { return label_histogram(load_manifest(manifest)); },
        py::arg("manifest"));

    // pipeline
    m.def(
        "validate",
        [](const fs::path& manifest, bool audio) {
            RunConfig cfg;
            cfg.manifest = manifest;
            cfg.audio_enabled = audio;
            std::ostringstream out;
            const int code = cmd_validate(cfg, out);
            return py::make_tuple(code, out.str());
        },
        py::arg("manifest"), py::arg("audio") = true, "Returns (exit_code, summary_text).");
    m.def(
        "run",
        [](const fs::path& config, std::optional<std::uint64_t> seed, std::optional<fs::path> out_dir) {
            auto cfg = RunConfig::load(config);
            if (seed) {
                cfg.override_seed(*seed);
            }
            if (out_dir) {
                cfg.out_dir = *out_dir;
            }
            std::ostringstream log;
            RunResult result;
            {
                py::gil_scoped_release release;
                result = cmd_run(cfg, log);
            }
            py::dict d;
            d["config_hash"] = result.config_hash;
            std::vector<std::string> artifacts;
            for (const auto& a : result.artifacts) {
                artifacts.push_back(a.generic_string());
            }
            d["artifacts"] = artifacts;
            py::list reports;
            for (const auto& r : result.reports) {
                reports.append(report_dict(r));
            }
            d["reports"] = reports;
            d["out_dir"] = cfg.out_dir;
            d["log"] = log.str();
            return d;
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("out_dir") = py::none());

    m.def(
        "write_complementary_corpus",
        [](const fs::path& dir, std::size_t per_class, std::uint64_t seed) {
            synthetic::ComplementaryOptions opts;
            opts.per_class = per_class;
            opts.seed = seed;
            return synthetic::write_complementary_corpus(dir, opts).manifest;
        },
        py::arg("dir"), py::arg("per_class") = 20, py::arg("seed") = 7, "Returns the manifest path.");
}
