#include "ercfuse/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <json.hpp>

#include "ercfuse/rng.hpp"
#include "io_util.hpp"

namespace ercfuse {

using nlohmann::json;

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) {
        throw Error("label set must not be empty");
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i].empty()) {
            throw Error("label set contains an empty label");
        }
        if (!index_.emplace(labels_[i], i).second) {
            throw Error("duplicate label '" + labels_[i] + "' in label set");
        }
    }
}

LabelSet LabelSet::defaults() {
    return LabelSet({"anger", "disgust", "fear", "joy", "sadness", "surprise", "neutral"});
}

std::optional<LabelIndex> LabelSet::find(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

LabelIndex LabelSet::index(std::string_view label) const {
    if (auto i = find(label)) {
        return *i;
    }
    throw Error("label '" + std::string(label) + "' is not in the label set");
}

Corpus::Corpus(LabelSet label_set, std::vector<Utterance> utterances, std::filesystem::path root)
    : label_set_(std::move(label_set)), utterances_(std::move(utterances)), root_(std::move(root)) {
    by_id_.reserve(utterances_.size());
    for (std::size_t i = 0; i < utterances_.size(); ++i) {
        const auto& u = utterances_[i];
        if (u.id.empty()) {
            throw ManifestError("utterance at position " + std::to_string(i) + " has an empty id");
        }
        if (!by_id_.emplace(u.id, i).second) {
            throw ManifestError("duplicate utterance id '" + u.id + "' at position " + std::to_string(i));
        }
        if (u.label && *u.label >= label_set_.size()) {
            throw ManifestError("utterance '" + u.id + "' has a label index outside the label set");
        }
    }
}

const Utterance* Corpus::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &utterances_[it->second];
}

std::filesystem::path Corpus::resolve_audio(const Utterance& u) const {
    if (!u.audio_path) {
        return {};
    }
    std::filesystem::path p(*u.audio_path);
    return p.is_absolute() ? p : root_ / p;
}

Corpus Corpus::subset(const std::set<std::string>& ids) const {
    std::vector<Utterance> kept;
    for (const auto& u : utterances_) {
        if (ids.count(u.id) != 0) {
            kept.push_back(u);
        }
    }
    return Corpus(label_set_, std::move(kept), root_);
}

namespace {

std::string optional_string(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        return {};
    }
    if (!it->is_string()) {
        throw ManifestError(where + ": field '" + key + "' must be a string");
    }
    return it->get<std::string>();
}

}  // namespace

Corpus parse_manifest(std::string_view json_text, const std::filesystem::path& root) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ManifestError(std::string("malformed manifest JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        throw ManifestError("manifest must be a JSON object");
    }

    LabelSet labels = LabelSet::defaults();
    if (auto it = doc.find("labels"); it != doc.end() && !it->is_null()) {
        if (!it->is_array()) {
            throw ManifestError("manifest 'labels' must be an array of strings");
        }
        std::vector<std::string> names;
        for (const auto& l : *it) {
            if (!l.is_string()) {
                throw ManifestError("manifest 'labels' must be an array of strings");
            }
            names.push_back(l.get<std::string>());
        }
        try {
            labels = LabelSet(std::move(names));
        } catch (const Error& e) {
            throw ManifestError(std::string("manifest header: ") + e.what());
        }
    }

    auto uit = doc.find("utterances");
    if (uit == doc.end() || !uit->is_array()) {
        throw ManifestError("manifest must contain an 'utterances' array");
    }

    std::vector<Utterance> utterances;
    utterances.reserve(uit->size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < uit->size(); ++i) {
        const json& row = (*uit)[i];
        std::string where = "utterances[" + std::to_string(i) + "]";
        if (!row.is_object()) {
            throw ManifestError(where + " is not an object");
        }
        Utterance u;
        auto id_it = row.find("id");
        if (id_it == row.end() || !id_it->is_string() || id_it->get<std::string>().empty()) {
            throw ManifestError(where + ": missing or empty string 'id'");
        }
        u.id = id_it->get<std::string>();
        where += " (id '" + u.id + "')";
        if (!seen.insert(u.id).second) {
            throw ManifestError(where + ": duplicate utterance id '" + u.id + "'");
        }
        u.conversation_id = optional_string(row, "conversation_id", where);
        u.speaker = optional_string(row, "speaker", where);
        u.text = optional_string(row, "text", where);
        if (auto a = row.find("audio"); a != row.end() && !a->is_null()) {
            if (!a->is_string()) {
                throw ManifestError(where + ": field 'audio' must be a string or null");
            }
            u.audio_path = a->get<std::string>();
        }
        if (auto l = row.find("label"); l != row.end() && !l->is_null()) {
            if (!l->is_string()) {
                throw ManifestError(where + ": field 'label' must be a string or null");
            }
            const auto name = l->get<std::string>();
            auto idx = labels.find(name);
            if (!idx) {
                throw ManifestError(where + ": label '" + name + "' is not declared in the manifest labels");
            }
            u.label = *idx;
        }
        utterances.push_back(std::move(u));
    }
    return Corpus(std::move(labels), std::move(utterances), root);
}

Corpus load_manifest(const std::filesystem::path& path) {
    std::string text;
    try {
        text = detail::read_text_file(path);
    } catch (const Error& e) {
        throw ManifestError(e.what());
    }
    try {
        return parse_manifest(text, path.parent_path());
    } catch (const ManifestError& e) {
        throw ManifestError(path.string() + ": " + e.what());
    }
}

namespace {

bool has_wav_extension(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".wav";
}

}  // namespace

AlignmentReport validate_alignment(const Corpus& corpus) {
    AlignmentReport r;
    r.total = corpus.size();
    for (const auto& u : corpus.utterances()) {
        const bool has_text = !u.text.empty();
        std::string audio_problem;
        if (!u.audio_path) {
            audio_problem = "no audio path";
        } else {
            const auto p = corpus.resolve_audio(u);
            std::error_code ec;
            if (!has_wav_extension(p)) {
                audio_problem = "audio '" + *u.audio_path + "' is not a .wav file";
            } else if (!std::filesystem::is_regular_file(p, ec)) {
                audio_problem = "audio file '" + *u.audio_path + "' not found";
            }
            if (!audio_problem.empty()) {
                ++r.audio_referenced_missing;
            }
        }

        if (!has_text) {
            ++r.empty_text;
        }
        if (!audio_problem.empty()) {
            ++r.audio_missing_file;
            if (has_text) {
                ++r.text_only;
            }
        }
        if (has_text && audio_problem.empty()) {
            ++r.fully_aligned;
        } else {
            std::string reason = audio_problem;
            if (!has_text) {
                reason = reason.empty() ? "empty text" : "empty text; " + reason;
            }
            r.issues.push_back({u.id, std::move(reason)});
        }
    }
    return r;
}

std::size_t stratified_test_count(std::size_t count, double ratio) {
    // The epsilon absorbs binary representation error of (1 - ratio), e.g.
    // 5 * (1 - 0.9) = 0.4999... must still round up as an exact half.
    const double exact = static_cast<double>(count) * (1.0 - ratio);
    const auto rounded = static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));
    return std::min(rounded, count);
}

SplitAssignment stratified_split(const Corpus& corpus, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw Error("split ratio must lie in (0, 1), got " + detail::format_double(ratio));
    }
    std::vector<std::vector<std::string>> by_label(corpus.label_set().size());
    for (const auto& u : corpus.utterances()) {
        if (!u.label) {
            throw Error("cannot split: utterance '" + u.id + "' is unlabeled");
        }
        by_label[*u.label].push_back(u.id);
    }

    SplitAssignment split;
    split.seed = seed;
    split.ratio = ratio;
    Xorshift64Star rng(seed);
    for (auto& ids : by_label) {
        if (ids.empty()) {
            continue;
        }
        rng.shuffle(std::span<std::string>(ids));
        const std::size_t n_test = stratified_test_count(ids.size(), ratio);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            (i < n_test ? split.test_ids : split.train_ids).insert(ids[i]);
        }
    }
    return split;
}

std::map<std::string, std::size_t> label_histogram(const Corpus& corpus) {
    std::map<std::string, std::size_t> hist;
    for (const auto& u : corpus.utterances()) {
        if (u.label) {
            ++hist[corpus.label_set().name(*u.label)];
        }
    }
    return hist;
}

std::string split_to_json(const SplitAssignment& split) {
    json doc;
    doc["format"] = "ercfuse-split/1";
    doc["seed"] = split.seed;
    doc["ratio"] = split.ratio;
    doc["train"] = split.train_ids;
    doc["test"] = split.test_ids;
    return doc.dump(2) + "\n";
}

SplitAssignment split_from_json(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("malformed split JSON: ") + e.what());
    }
    if (doc.value("format", std::string{}) != "ercfuse-split/1") {
        throw SchemaError("split file has unknown format '" + doc.value("format", std::string{}) + "'");
    }
    SplitAssignment split;
    split.seed = doc.at("seed").get<std::uint64_t>();
    split.ratio = doc.at("ratio").get<double>();
    split.train_ids = doc.at("train").get<std::set<std::string>>();
    split.test_ids = doc.at("test").get<std::set<std::string>>();
    for (const auto& id : split.test_ids) {
        if (split.train_ids.count(id) != 0) {
            throw SchemaError("split file lists '" + id + "' in both train and test");
        }
    }
    return split;
}

void write_split(const SplitAssignment& split, const std::filesystem::path& path) {
    detail::write_text_file(path, split_to_json(split));
}

SplitAssignment read_split(const std::filesystem::path& path) {
    return split_from_json(detail::read_text_file(path));
}

}  // namespace ercfuse
