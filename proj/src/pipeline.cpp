#include "ercfuse/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "io_util.hpp"

namespace ercfuse {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFeatureMagic = "ercfuse-features/1";
constexpr const char* kTextModel = "text_tfidf_softmax";
constexpr const char* kAudioModel = "audio_mfcc_softmax";

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; })) {
            throw ValidationError("unknown config key '" + where + key + "'");
        }
    }
}

TrainConfig train_from_json(const json& j, TrainConfig base, const std::string& where) {
    reject_unknown_keys(j,
                        {"learning_rate", "epochs", "batch_size", "l2", "seed", "shuffle", "class_weighting",
                         "standardize"},
                        where);
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.epochs = j.value("epochs", base.epochs);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.l2 = j.value("l2", base.l2);
    base.seed = j.value("seed", base.seed);
    base.shuffle = j.value("shuffle", base.shuffle);
    base.class_weighting = j.value("class_weighting", base.class_weighting);
    base.standardize = j.value("standardize", base.standardize);
    return base;
}

json train_to_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
            {"batch_size", c.batch_size},       {"l2", c.l2},
            {"seed", c.seed},                   {"shuffle", c.shuffle},
            {"class_weighting", c.class_weighting}, {"standardize", c.standardize}};
}

json frame_to_json(const FrameConfig& f) {
    return {{"frame_length", f.frame_length}, {"hop", f.hop},           {"n_fft", f.n_fft},
            {"n_mels", f.n_mels},             {"n_mfcc", f.n_mfcc},     {"pre_emphasis", f.pre_emphasis},
            {"fmin", f.fmin},                 {"fmax", f.fmax},         {"log_floor", f.log_floor}};
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return (path.is_absolute() || base.empty() ? path : base / path).lexically_normal();
}

// Adds run provenance to an artifact's JSON text.
std::string stamp(const std::string& json_text, const std::string& config_hash, std::uint64_t seed, int indent) {
    json doc = json::parse(json_text);
    doc["config_hash"] = config_hash;
    doc["seed"] = seed;
    return doc.dump(indent) + "\n";
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view json_text, const fs::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("malformed config JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        throw ValidationError("config must be a JSON object");
    }
    try {
        reject_unknown_keys(doc, {"manifest", "split", "text", "audio", "fusion", "external", "out", "jobs"}, "");
        RunConfig cfg;
        if (!doc.contains("manifest")) {
            throw ValidationError("config requires 'manifest'");
        }
        cfg.manifest = resolve(base_dir, doc.at("manifest").get<std::string>());
        if (auto it = doc.find("split"); it != doc.end()) {
            reject_unknown_keys(*it, {"ratio", "seed"}, "split.");
            cfg.split_ratio = it->value("ratio", cfg.split_ratio);
            cfg.split_seed = it->value("seed", cfg.split_seed);
        }
        if (auto it = doc.find("text"); it != doc.end()) {
            reject_unknown_keys(*it, {"enabled", "min_df", "max_terms", "train"}, "text.");
            cfg.text_enabled = it->value("enabled", cfg.text_enabled);
            cfg.vocab.min_df = it->value("min_df", cfg.vocab.min_df);
            cfg.vocab.max_terms = it->value("max_terms", cfg.vocab.max_terms);
            if (auto t = it->find("train"); t != it->end()) {
                cfg.text_train = train_from_json(*t, cfg.text_train, "text.train.");
            }
        }
        if (auto it = doc.find("audio"); it != doc.end()) {
            reject_unknown_keys(*it,
                                {"enabled", "sample_rate", "frame_length", "hop", "n_fft", "n_mels", "n_mfcc",
                                 "pre_emphasis", "fmin", "fmax", "log_floor", "train"},
                                "audio.");
            cfg.audio_enabled = it->value("enabled", cfg.audio_enabled);
            cfg.audio_rate = it->value("sample_rate", cfg.audio_rate);
            cfg.frame = FrameConfig::standard(cfg.audio_rate);
            auto& f = cfg.frame;
            f.frame_length = it->value("frame_length", f.frame_length);
            f.hop = it->value("hop", f.hop);
            f.n_fft = it->value("n_fft", f.n_fft);
            f.n_mels = it->value("n_mels", f.n_mels);
            f.n_mfcc = it->value("n_mfcc", f.n_mfcc);
            f.pre_emphasis = it->value("pre_emphasis", f.pre_emphasis);
            f.fmin = it->value("fmin", f.fmin);
            f.fmax = it->value("fmax", f.fmax);
            f.log_floor = it->value("log_floor", f.log_floor);
            if (auto t = it->find("train"); t != it->end()) {
                cfg.audio_train = train_from_json(*t, cfg.audio_train, "audio.train.");
            }
        }
        if (auto it = doc.find("fusion"); it != doc.end() && !it->is_null()) {
            reject_unknown_keys(*it, {"method", "weights", "step"}, "fusion.");
            FusionConfig fc;
            fc.method = it->value("method", fc.method);
            fc.weights = it->value("weights", fc.weights);
            fc.step = it->value("step", fc.step);
            cfg.fusion = fc;
        }
        if (auto it = doc.find("external"); it != doc.end()) {
            for (const auto& e : *it) {
                reject_unknown_keys(e, {"name", "path"}, "external[].");
                cfg.external.push_back({e.at("name").get<std::string>(), resolve(base_dir, e.at("path").get<std::string>())});
            }
        }
        if (auto it = doc.find("out"); it != doc.end()) {
            cfg.out_dir = resolve(base_dir, it->get<std::string>());
        }
        cfg.jobs = doc.value("jobs", cfg.jobs);
        return cfg;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid config: ") + e.what());
    }
}

RunConfig RunConfig::load(const fs::path& path) {
    std::string text;
    try {
        text = detail::read_text_file(path);
    } catch (const Error& e) {
        throw ValidationError(e.what());
    }
    return from_json(text, path.parent_path());
}

std::string RunConfig::canonical_json() const {
    json doc;
    doc["manifest"] = manifest.generic_string();
    doc["split"] = {{"ratio", split_ratio}, {"seed", split_seed}};
    doc["text"] = {{"enabled", text_enabled},
                   {"min_df", vocab.min_df},
                   {"max_terms", vocab.max_terms},
                   {"train", train_to_json(text_train)}};
    json audio = frame_to_json(frame);
    audio["enabled"] = audio_enabled;
    audio["sample_rate"] = audio_rate;
    audio["train"] = train_to_json(audio_train);
    doc["audio"] = audio;
    if (fusion) {
        doc["fusion"] = {{"method", fusion->method}, {"weights", fusion->weights}, {"step", fusion->step}};
    } else {
        doc["fusion"] = nullptr;
    }
    json ext = json::array();
    for (const auto& e : external) {
        ext.push_back({{"name", e.name}, {"path", e.path.generic_string()}});
    }
    doc["external"] = ext;
    return doc.dump();
}

std::string RunConfig::hash() const { return detail::hex64(detail::fnv1a64(canonical_json())); }

void RunConfig::override_seed(std::uint64_t seed) {
    split_seed = seed;
    text_train.seed = seed;
    audio_train.seed = seed;
}

void FeatureCache::write(const fs::path& path) const {
    std::string out = json{{"magic", kFeatureMagic}, {"modality", modality}, {"config_hash", config_hash}, {"dim", dim}}
                          .dump() +
                      "\n";
    for (const auto& [id, values] : rows) {
        out += json{{"id", id}, {"values", values}}.dump() + "\n";
    }
    detail::write_text_file(path, out);
}

FeatureCache FeatureCache::read(const fs::path& path) {
    std::istringstream in(detail::read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) {
        throw SchemaError(path.string() + ": empty feature cache");
    }
    FeatureCache cache;
    try {
        const json header = json::parse(line);
        if (header.value("magic", std::string{}) != kFeatureMagic) {
            throw SchemaError(path.string() + ": not a feature cache (bad magic)");
        }
        cache.modality = header.at("modality").get<std::string>();
        cache.config_hash = header.at("config_hash").get<std::string>();
        cache.dim = header.at("dim").get<std::size_t>();
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            const json rec = json::parse(line);
            auto values = rec.at("values").get<FeatureVector>();
            if (values.size() != cache.dim) {
                throw SchemaError(path.string() + ": record dimension mismatch");
            }
            cache.rows.emplace(rec.at("id").get<std::string>(), std::move(values));
        }
    } catch (const json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    return cache;
}

std::string text_feature_hash(const Vocabulary& vocab) {
    return detail::hex64(detail::fnv1a64("tfidf/1\n" + vocab.to_json()));
}

std::string audio_feature_hash(const FrameConfig& frame, int rate) {
    json j = frame_to_json(frame);
    j["sample_rate"] = rate;
    j["pooling"] = "mean+std/1";
    return detail::hex64(detail::fnv1a64(j.dump()));
}

LabelMap gold_labels(const Corpus& corpus, const std::set<std::string>& ids) {
    LabelMap gold;
    for (const auto& u : corpus.utterances()) {
        if (!ids.empty() && ids.count(u.id) == 0) {
            continue;
        }
        if (!u.label) {
            if (!ids.empty()) {
                throw MetricError("utterance '" + u.id + "' has no gold label");
            }
            continue;
        }
        gold.emplace(u.id, *u.label);
    }
    if (!ids.empty() && gold.size() != ids.size()) {
        for (const auto& id : ids) {
            if (gold.count(id) == 0) {
                throw MetricError("no gold label for id '" + id + "'");
            }
        }
    }
    return gold;
}

std::string slug(const std::string& name) {
    std::string s;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        s.push_back(ok ? c : '_');
    }
    while (!s.empty() && s.back() == '_') {
        s.pop_back();
    }
    return s.empty() ? "model" : s;
}

LabelSet read_prediction_labels(const fs::path& path) {
    std::ifstream in(path);
    std::string header;
    if (!in || !std::getline(in, header)) {
        throw PredictionFormatError("cannot read header of '" + path.string() + "'");
    }
    if (!header.empty() && header.back() == '\r') {
        header.pop_back();
    }
    std::vector<std::string> cols;
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) {
        cols.push_back(col);
    }
    if (cols.size() < 2 || cols.front() != "id") {
        throw PredictionFormatError(path.string() + ": header must be 'id,<label>...'");
    }
    return LabelSet(std::vector<std::string>(cols.begin() + 1, cols.end()));
}

namespace {

template <typename F>
auto stage(const char* name, F&& body) {
    try {
        return body();
    } catch (const ValidationError&) {
        throw;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

struct Pipeline {
    const RunConfig& cfg;
    std::ostream& out;
    std::string hash;
    Corpus corpus;
    SplitAssignment split;
    std::set<std::string> fit_ids;  // training ids the models see
    std::set<std::string> val_ids;  // held-out slice for weight search
    std::map<std::string, FeatureVector> text_features;
    std::map<std::string, FeatureVector> audio_features;
    std::vector<SoftmaxModel> models;
    std::vector<std::string> model_names;
    std::vector<PredictionTable> members;  // rows for val ∪ test
    std::vector<EvaluationReport> reports;
    std::set<fs::path> artifacts;

    Pipeline(const RunConfig& c, std::ostream& o) : cfg(c), out(o), hash(c.hash()) {}

    bool searching() const { return cfg.fusion && cfg.fusion->method == "search"; }

    std::size_t member_count() const {
        return (cfg.text_enabled ? 1 : 0) + (cfg.audio_enabled ? 1 : 0) + cfg.external.size();
    }

    void emit(const fs::path& rel, const std::string& contents) {
        detail::write_text_file(cfg.out_dir / rel, contents);
        artifacts.insert(rel);
    }

    void check_config() {
        if (!(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0)) {
            throw ValidationError("split ratio must lie in (0, 1)");
        }
        if (!fs::exists(cfg.manifest)) {
            throw ValidationError("manifest '" + cfg.manifest.string() + "' does not exist");
        }
        for (const auto& e : cfg.external) {
            if (!fs::exists(e.path)) {
                throw ValidationError("external predictions '" + e.path.string() + "' for '" + e.name +
                                      "' do not exist");
            }
        }
        try {
            if (cfg.text_enabled) {
                cfg.text_train.validate();
            }
            if (cfg.audio_enabled) {
                cfg.audio_train.validate();
                cfg.frame.validate(cfg.audio_rate);
            }
        } catch (const Error& e) {
            throw ValidationError(e.what());
        }
        if (cfg.fusion) {
            const auto& f = *cfg.fusion;
            if (f.method == "search") {
                if (member_count() < 2) {
                    throw ValidationError("fusion 'search' requires at least two members, config has " +
                                          std::to_string(member_count()));
                }
                if (!(f.step > 0.0 && f.step <= 0.5)) {
                    throw ValidationError("fusion step must lie in (0, 0.5]");
                }
            } else if (f.method == "weighted_average") {
                if (!f.weights.empty()) {
                    try {
                        check_weights(f.weights, member_count());
                    } catch (const FusionError& e) {
                        throw ValidationError(e.what());
                    }
                }
            } else if (f.method != "vote") {
                throw ValidationError("unknown fusion method '" + f.method + "'");
            }
        }
    }

    void load() {
        try {
            corpus = load_manifest(cfg.manifest);
        } catch (const ManifestError& e) {
            throw ValidationError(e.what());
        }
        if (cfg.audio_enabled) {
            const auto report = validate_alignment(corpus);
            if (report.audio_missing_file > 0) {
                std::string msg = std::to_string(report.audio_missing_file) +
                                  " utterance(s) lack usable audio while the audio modality is enabled:";
                for (std::size_t i = 0; i < report.issues.size() && i < 10; ++i) {
                    msg += " " + report.issues[i].id;
                }
                throw ValidationError(msg);
            }
        }
    }

    void do_split() {
        stage("split", [&] {
            split = stratified_split(corpus, cfg.split_ratio, cfg.split_seed);
            emit("split.json", stamp(split_to_json(split), hash, cfg.split_seed, 2));
            fit_ids = split.train_ids;
            val_ids.clear();
            if (searching()) {
                const auto inner = stratified_split(corpus.subset(split.train_ids), 0.9, cfg.split_seed + 1);
                fit_ids = inner.train_ids;
                val_ids = inner.test_ids;
                if (val_ids.empty()) {
                    throw Error("training split too small to hold out a validation slice for weight search");
                }
                emit("validation_split.json", stamp(split_to_json(inner), hash, cfg.split_seed + 1, 2));
            }
        });
    }

    void featurize_text() {
        stage("featurize", [&] {
            std::map<std::string, TokenList> tokens;
            std::vector<TokenList> train_docs;
            for (const auto& u : corpus.utterances()) {
                auto t = tokenize(u.text);
                if (fit_ids.count(u.id) != 0) {
                    train_docs.push_back(t);
                }
                tokens.emplace(u.id, std::move(t));
            }
            const Vocabulary vocab = build_vocabulary(train_docs, cfg.vocab);
            if (vocab.empty()) {
                throw Error("text vocabulary is empty; lower text.min_df");
            }
            emit("vocabulary.json", stamp(vocab.to_json(), hash, cfg.split_seed, -1));

            const auto feature_hash = text_feature_hash(vocab);
            const fs::path rel = "features/text.jsonl";
            if (auto cached = try_cache(rel, "text", feature_hash)) {
                text_features = std::move(cached->rows);
                artifacts.insert(rel);
                return;
            }
            FeatureCache cache{"text", feature_hash, vocab.size(), {}};
            for (const auto& [id, t] : tokens) {
                cache.rows.emplace(id, tfidf_vector(t, vocab));
            }
            cache.write(cfg.out_dir / rel);
            artifacts.insert(rel);
            text_features = std::move(cache.rows);
        });
    }

    std::optional<FeatureCache> try_cache(const fs::path& rel, const std::string& modality, const std::string& h) {
        const auto path = cfg.out_dir / rel;
        if (!fs::exists(path)) {
            return std::nullopt;
        }
        try {
            auto cache = FeatureCache::read(path);
            if (cache.modality != modality || cache.config_hash != h) {
                return std::nullopt;
            }
            for (const auto& u : corpus.utterances()) {
                if (cache.rows.count(u.id) == 0) {
                    return std::nullopt;
                }
            }
            out << "reusing cached " << modality << " features (" << rel.generic_string() << ")\n";
            return cache;
        } catch (const Error&) {
            return std::nullopt;
        }
    }

    void featurize_audio() {
        stage("featurize", [&] {
            const auto feature_hash = audio_feature_hash(cfg.frame, cfg.audio_rate);
            const fs::path rel = "features/audio.jsonl";
            if (auto cached = try_cache(rel, "audio", feature_hash)) {
                audio_features = std::move(cached->rows);
                artifacts.insert(rel);
                return;
            }
            const auto& utts = corpus.utterances();
            std::vector<FeatureVector> results(utts.size());
            std::atomic<std::size_t> next{0};
            std::exception_ptr failure;
            std::mutex failure_mutex;
            auto worker = [&] {
                for (std::size_t i = next++; i < utts.size(); i = next++) {
                    try {
                        const auto w = read_wav(corpus.resolve_audio(utts[i]));
                        results[i] = ercfuse::audio_features(w, cfg.frame, cfg.audio_rate);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) {
                            failure = std::current_exception();
                        }
                    }
                }
            };
            const std::size_t n_threads = std::max<std::size_t>(1, std::min(cfg.jobs, utts.size()));
            std::vector<std::thread> threads;
            for (std::size_t t = 1; t < n_threads; ++t) {
                threads.emplace_back(worker);
            }
            worker();
            for (auto& t : threads) {
                t.join();
            }
            if (failure) {
                std::rethrow_exception(failure);
            }
            FeatureCache cache{"audio", feature_hash, 2 * cfg.frame.n_mfcc, {}};
            for (std::size_t i = 0; i < utts.size(); ++i) {
                cache.rows.emplace(utts[i].id, std::move(results[i]));
            }
            cache.write(cfg.out_dir / rel);
            artifacts.insert(rel);
            audio_features = std::move(cache.rows);
        });
    }

    void featurize() {
        if (cfg.text_enabled) {
            featurize_text();
        }
        if (cfg.audio_enabled) {
            featurize_audio();
        }
    }

    void train_one(const std::string& name, const std::map<std::string, FeatureVector>& features,
                   const TrainConfig& tc) {
        std::vector<FeatureVector> xs;
        std::vector<LabelIndex> ys;
        for (const auto& id : fit_ids) {
            xs.push_back(features.at(id));
            ys.push_back(*corpus.find(id)->label);
        }
        auto [model, seconds] = measure([&] { return train_softmax(xs, ys, corpus.label_set(), tc); });
        model.config_hash = hash;
        emit("models/" + name + ".json", stamp(model_to_json(model), hash, tc.seed, -1));
        out << "trained " << name << " on " << xs.size() << " utterances in " << seconds << " s (final loss "
            << model.loss_trace.back() << ")\n";
        models.push_back(std::move(model));
        model_names.push_back(name);
    }

    void train() {
        stage("train", [&] {
            if (cfg.text_enabled) {
                train_one(kTextModel, text_features, cfg.text_train);
            }
            if (cfg.audio_enabled) {
                train_one(kAudioModel, audio_features, cfg.audio_train);
            }
        });
    }

    std::set<std::string> eval_ids() const {
        std::set<std::string> ids = split.test_ids;
        ids.insert(val_ids.begin(), val_ids.end());
        return ids;
    }

    void predict() {
        stage("predict", [&] {
            const auto ids = eval_ids();
            for (std::size_t m = 0; m < models.size(); ++m) {
                const auto& features = model_names[m] == kTextModel ? text_features : audio_features;
                std::map<std::string, FeatureVector> subset;
                for (const auto& id : ids) {
                    subset.emplace(id, features.at(id));
                }
                members.push_back(predict_table(models[m], subset, model_names[m]));
            }
            for (const auto& e : cfg.external) {
                auto table = load_external_predictions(e.path, corpus.label_set()).restricted_to(ids);
                table.model_name = e.name;
                members.push_back(std::move(table));
            }
            for (const auto& t : members) {
                write_table("predictions/" + slug(t.model_name) + ".csv", t.restricted_to(split.test_ids));
            }
        });
    }

    void write_table(const fs::path& rel, const PredictionTable& table) {
        emit(rel, predictions_to_csv(table));
        json meta{{"model_name", table.model_name},
                  {"timing_seconds", table.timing_seconds ? json(*table.timing_seconds) : json(nullptr)},
                  {"config_hash", hash},
                  {"seed", cfg.split_seed}};
        auto meta_rel = rel;
        meta_rel += ".meta.json";
        emit(meta_rel, meta.dump(2) + "\n");
    }

    void report(const PredictionTable& table) {
        const auto test = table.restricted_to(split.test_ids);
        auto r = evaluate(table.model_name, test.argmax_labels(), gold_labels(corpus, split.test_ids),
                          corpus.label_set());
        r.timing_seconds = table.timing_seconds;
        r.config_hash = hash;
        r.seed = cfg.split_seed;
        r.reference = compare_to_reference(r);
        const auto base = "reports/" + slug(r.model_name);
        emit(base + ".json", report_to_json(r));
        emit(base + ".confusion.csv", confusion_to_csv(r));
        out << summary_table(r);
        reports.push_back(std::move(r));
    }

    void evaluate_members() {
        stage("evaluate", [&] {
            for (const auto& t : members) {
                report(t);
            }
        });
    }

    void fuse() {
        if (members.size() < 2) {
            if (cfg.fusion) {
                out << "fusion skipped: only " << members.size() << " member table\n";
            }
            return;
        }
        stage("fuse", [&] {
            std::vector<std::string> names;
            for (const auto& t : members) {
                names.push_back(t.model_name);
            }
            std::vector<std::pair<std::string, FusionSpec>> specs;
            const std::string method = cfg.fusion ? cfg.fusion->method : "weighted_average";
            if (method == "vote") {
                specs.emplace_back("vote", FusionSpec::vote(names));
            } else if (method == "weighted_average" && cfg.fusion && !cfg.fusion->weights.empty()) {
                FusionSpec spec;
                spec.weights = cfg.fusion->weights;
                spec.member_names = names;
                specs.emplace_back("weighted", spec);
            } else {
                specs.emplace_back("equal", FusionSpec::equal_weights(names));
            }
            if (method == "search") {
                std::vector<PredictionTable> val_tables;
                for (const auto& t : members) {
                    val_tables.push_back(t.restricted_to(val_ids));
                }
                auto [found, seconds] = measure(
                    [&] { return search_weights(val_tables, gold_labels(corpus, val_ids), cfg.fusion->step); });
                json w{{"members", names},
                       {"weights", found.weights},
                       {"validation_accuracy", found.accuracy},
                       {"candidates", found.candidates},
                       {"step", cfg.fusion->step},
                       {"config_hash", hash},
                       {"seed", cfg.split_seed + 1}};
                emit("fusion_weights.json", w.dump(2) + "\n");
                FusionSpec spec;
                spec.weights = found.weights;
                spec.member_names = names;
                specs.emplace_back("searched", spec);
            }
            for (const auto& [tag, spec] : specs) {
                auto [fused, seconds] = measure([&] { return fuse_tables(members, spec); });
                if (spec.method == FusionMethod::WeightedAverage) {
                    fused.model_name.insert(fused.model_name.size() - 1, ";" + tag);
                }
                double total = seconds;
                for (const auto& t : members) {
                    total += t.timing_seconds.value_or(0.0);
                }
                fused.timing_seconds = total;
                write_table("predictions/ensemble_" + tag + ".csv", fused.restricted_to(split.test_ids));
                report(fused);
            }
        });
    }

    void finish(RunResult& result) {
        artifacts.insert("artifacts.json");
        std::vector<std::string> listed;
        for (const auto& a : artifacts) {
            listed.push_back(a.generic_string());
        }
        json manifest{{"config_hash", hash}, {"seed", cfg.split_seed}, {"config", json::parse(cfg.canonical_json())},
                      {"artifacts", listed}};
        detail::write_text_file(cfg.out_dir / "artifacts.json", manifest.dump(2) + "\n");
        result.config_hash = hash;
        result.artifacts.assign(artifacts.begin(), artifacts.end());
        result.reports = reports;
    }
};

}  // namespace

int cmd_validate(const RunConfig& cfg, std::ostream& out) {
    Corpus corpus;
    try {
        corpus = load_manifest(cfg.manifest);
    } catch (const ManifestError& e) {
        out << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    const auto report = validate_alignment(corpus);
    out << "utterances:          " << report.total << "\n"
        << "fully_aligned:       " << report.fully_aligned << "\n"
        << "text_only:           " << report.text_only << "\n"
        << "audio_missing_file:  " << report.audio_missing_file << "\n"
        << "empty_text:          " << report.empty_text << "\n";
    for (const auto& issue : report.issues) {
        out << "  " << issue.id << ": " << issue.reason << "\n";
    }
    const auto hist = label_histogram(corpus);
    std::size_t unlabeled = corpus.size();
    out << "label histogram:\n";
    for (const auto& label : corpus.label_set().labels()) {
        const auto it = hist.find(label);
        const std::size_t n = it == hist.end() ? 0 : it->second;
        unlabeled -= n;
        out << "  " << label << ": " << n << "\n";
    }
    if (unlabeled > 0) {
        out << "  (unlabeled): " << unlabeled << "\n";
    }
    bool fatal = report.audio_referenced_missing > 0;
    if (cfg.audio_enabled && report.audio_missing_file > 0) {
        fatal = true;
    }
    for (const auto& e : cfg.external) {
        if (!fs::exists(e.path)) {
            out << "missing external predictions for '" << e.name << "': " << e.path.string() << "\n";
            fatal = true;
        }
    }
    out << (fatal ? "validation FAILED\n" : "validation ok\n");
    return fatal ? kExitValidation : kExitOk;
}

SplitAssignment cmd_split(const RunConfig& cfg, std::ostream& out) {
    Pipeline p(cfg, out);
    p.check_config();
    p.load();
    p.do_split();
    out << "split: " << p.split.train_ids.size() << " train, " << p.split.test_ids.size() << " test (seed "
        << cfg.split_seed << ")\n";
    return p.split;
}

void cmd_featurize(const RunConfig& cfg, std::ostream& out) {
    Pipeline p(cfg, out);
    p.check_config();
    p.load();
    p.do_split();
    p.featurize();
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
    Pipeline p(cfg, out);
    p.check_config();
    p.load();
    p.do_split();
    p.featurize();
    p.train();
}

RunResult cmd_run(const RunConfig& cfg, std::ostream& out) {
    Pipeline p(cfg, out);
    p.check_config();
    p.load();
    p.do_split();
    p.featurize();
    p.train();
    p.predict();
    p.evaluate_members();
    p.fuse();
    RunResult result;
    p.finish(result);
    return result;
}

PredictionTable cmd_predict(const PredictArgs& args, std::ostream& out) {
    const auto model = load_model(args.model);
    const auto cache = FeatureCache::read(args.features);
    std::map<std::string, FeatureVector> features;
    if (args.split) {
        const auto split = read_split(*args.split);
        for (const auto& id : split.test_ids) {
            auto it = cache.rows.find(id);
            if (it == cache.rows.end()) {
                throw Error("feature cache has no row for test id '" + id + "'");
            }
            features.emplace(id, it->second);
        }
    } else {
        features = cache.rows;
    }
    const auto name = args.name.empty() ? args.model.stem().string() : args.name;
    auto table = predict_table(model, features, name);
    write_predictions(table, args.out);
    out << "wrote " << table.size() << " predictions to " << args.out.string() << "\n";
    return table;
}

PredictionTable cmd_fuse(const FuseArgs& args, std::ostream& out) {
    if (args.predictions.size() < 2) {
        throw FusionError("fuse needs at least two prediction files");
    }
    std::optional<Corpus> corpus;
    if (args.manifest) {
        corpus = load_manifest(*args.manifest);
    }
    const LabelSet labels = corpus ? corpus->label_set() : read_prediction_labels(args.predictions.front());
    std::vector<PredictionTable> tables;
    std::vector<std::string> names;
    for (const auto& p : args.predictions) {
        tables.push_back(load_external_predictions(p, labels));
        names.push_back(tables.back().model_name);
    }
    std::set<std::string> distinct(names.begin(), names.end());
    if (distinct.size() != names.size()) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            names[i] += "#" + std::to_string(i);
        }
    }

    FusionSpec spec;
    std::string tag;
    if (args.method == "vote") {
        if (!args.weights.empty()) {
            throw FusionError("--weights cannot be combined with --method vote");
        }
        spec = FusionSpec::vote(names);
    } else if (args.method == "weighted_average") {
        if (args.weights.empty()) {
            spec = FusionSpec::equal_weights(names);
            tag = "equal";
        } else {
            spec.weights = args.weights;
            spec.member_names = names;
            tag = "weighted";
        }
    } else if (args.method == "search") {
        if (!corpus) {
            throw FusionError("--method search needs --manifest for gold labels");
        }
        std::set<std::string> ids;
        for (const auto& [id, _] : tables.front().rows) {
            ids.insert(id);
        }
        const auto found = search_weights(tables, gold_labels(*corpus, ids), args.step);
        out << "searched weights:";
        for (double w : found.weights) {
            out << " " << w;
        }
        out << " (accuracy " << found.accuracy << " over " << found.candidates << " candidates)\n";
        spec.weights = found.weights;
        spec.member_names = names;
        tag = "searched";
    } else {
        throw FusionError("unknown fusion method '" + args.method + "'");
    }

    auto [fused, seconds] = measure([&] { return fuse_tables(tables, spec); });
    if (!tag.empty()) {
        fused.model_name.insert(fused.model_name.size() - 1, ";" + tag);
    }
    fused.timing_seconds = seconds;
    write_predictions(fused, args.out);
    out << "wrote fused predictions (" << fused.size() << " rows) to " << args.out.string() << "\n";

    if (corpus) {
        PredictionTable scored = fused;
        if (args.split) {
            scored = fused.restricted_to(read_split(*args.split).test_ids);
        }
        std::set<std::string> ids;
        for (const auto& [id, _] : scored.rows) {
            ids.insert(id);
        }
        auto r = evaluate(scored.model_name, scored.argmax_labels(), gold_labels(*corpus, ids), labels);
        r.timing_seconds = fused.timing_seconds;
        r.reference = compare_to_reference(r);
        if (args.report) {
            write_report(r, *args.report);
        }
        out << summary_table(r);
    }
    return fused;
}

EvaluationReport cmd_evaluate(const EvaluateArgs& args, std::ostream& out) {
    const auto corpus = load_manifest(args.manifest);
    auto table = load_external_predictions(args.predictions, corpus.label_set());
    if (args.split) {
        table = table.restricted_to(read_split(*args.split).test_ids);
    }
    std::set<std::string> ids;
    for (const auto& [id, _] : table.rows) {
        ids.insert(id);
    }
    auto r = evaluate(table.model_name, table.argmax_labels(), gold_labels(corpus, ids), corpus.label_set());
    r.timing_seconds = table.timing_seconds;
    r.config_hash = args.config_hash;
    r.seed = args.seed;
    r.reference = compare_to_reference(r);
    write_report(r, args.out);
    out << summary_table(r);
    return r;
}

void cmd_report(const std::vector<fs::path>& reports, std::ostream& out) {
    for (const auto& p : reports) {
        out << summary_table(read_report(p)) << "\n";
    }
}

}  // namespace ercfuse
