#include "ercfuse/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "io_util.hpp"

namespace ercfuse {

using nlohmann::json;

namespace {

void check_pair(const LabelMap& pred, const LabelMap& gold) {
    if (gold.empty()) {
        throw MetricError("cannot score an empty prediction set");
    }
    if (pred.size() != gold.size()) {
        throw MetricError("prediction and gold id sets differ in size (" + std::to_string(pred.size()) + " vs " +
                          std::to_string(gold.size()) + ")");
    }
    for (auto p = pred.begin(), g = gold.begin(); p != pred.end(); ++p, ++g) {
        if (p->first != g->first) {
            throw MetricError("id mismatch between predictions and gold: '" + p->first + "' vs '" + g->first + "'");
        }
    }
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

double accuracy(const LabelMap& pred, const LabelMap& gold) {
    check_pair(pred, gold);
    std::size_t correct = 0;
    for (const auto& [id, label] : gold) {
        correct += pred.at(id) == label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(gold.size());
}

std::vector<std::vector<std::size_t>> confusion_matrix(const LabelMap& pred, const LabelMap& gold,
                                                       std::size_t n_labels) {
    check_pair(pred, gold);
    std::vector<std::vector<std::size_t>> m(n_labels, std::vector<std::size_t>(n_labels, 0));
    for (const auto& [id, g] : gold) {
        const auto p = pred.at(id);
        if (g >= n_labels || p >= n_labels) {
            throw MetricError("label index out of range for id '" + id + "'");
        }
        ++m[g][p];
    }
    return m;
}

std::vector<LabelMetrics> per_label_metrics(const std::vector<std::vector<std::size_t>>& confusion,
                                            const LabelSet& labels) {
    const std::size_t k = confusion.size();
    std::vector<LabelMetrics> out(k);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t tp = confusion[c][c];
        std::size_t gold_c = 0;
        std::size_t pred_c = 0;
        for (std::size_t j = 0; j < k; ++j) {
            gold_c += confusion[c][j];
            pred_c += confusion[j][c];
        }
        auto& m = out[c];
        m.label = c < labels.size() ? labels.name(c) : std::to_string(c);
        m.support = gold_c;
        m.precision = pred_c ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
        m.recall = gold_c ? static_cast<double>(tp) / static_cast<double>(gold_c) : 0.0;
        const double denom = m.precision + m.recall;
        m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
    }
    return out;
}

double macro_f1(const LabelMap& pred, const LabelMap& gold, std::size_t n_labels) {
    if (n_labels == 0) {
        throw MetricError("macro-F1 over an empty label set");
    }
    const auto cm = confusion_matrix(pred, gold, n_labels);
    double sum = 0.0;
    for (const auto& m : per_label_metrics(cm, LabelSet{})) {
        sum += m.f1;
    }
    return sum / static_cast<double>(n_labels);
}

const ReferenceBaselines& ReferenceBaselines::published() {
    static const ReferenceBaselines table({
        {"RoBERTa", "text", 0.5068, 74.6, "published fine-tuned text model, test accuracy / execution time"},
        {"DistilBERT", "text", 0.4982, 51.25, "published fine-tuned text model, test accuracy / execution time"},
        {"DeBERTa", "text", 0.4829, 21.56, "published fine-tuned text model, test accuracy / execution time"},
        {"DistilRoBERTa", "text", 0.4183, 5.61, "published fine-tuned text model, test accuracy / execution time"},
        {"HuBERT", "audio", 0.3108, 113.6, "published fine-tuned audio model, test accuracy / execution time"},
        {"Wav2Vec2", "audio", 0.3543, 87.25, "published fine-tuned audio model, test accuracy / execution time"},
        {"Wav2Vec2-large-robust", "audio", 0.3254, 97.32,
         "published fine-tuned audio model, test accuracy / execution time"},
        {"ensemble", "multimodal", 0.6297, std::nullopt,
         "published late-fusion ensemble of Wav2Vec2 (audio) and RoBERTa (text), test accuracy"},
    });
    return table;
}

const BaselineEntry* ReferenceBaselines::match(const std::string& model_name) const {
    const auto key = lower(model_name.substr(0, model_name.find('[')));
    for (const auto& e : entries_) {
        if (lower(e.name) == key) {
            return &e;
        }
    }
    return nullptr;
}

EvaluationReport evaluate(const std::string& model_name, const LabelMap& pred, const LabelMap& gold,
                          const LabelSet& labels) {
    EvaluationReport r;
    r.model_name = model_name;
    r.n = gold.size();
    r.labels = labels.labels();
    r.confusion = confusion_matrix(pred, gold, labels.size());
    r.per_label = per_label_metrics(r.confusion, labels);
    r.accuracy = accuracy(pred, gold);
    double f1_sum = 0.0;
    for (const auto& m : r.per_label) {
        f1_sum += m.f1;
    }
    r.macro_f1 = f1_sum / static_cast<double>(labels.size());
    return r;
}

ReferenceComparison compare_to_reference(const EvaluationReport& report, const ReferenceBaselines& baselines) {
    ReferenceComparison cmp;
    if (const auto* e = baselines.match(report.model_name)) {
        cmp.matched = e->name;
        cmp.accuracy_delta = report.accuracy - e->accuracy;
    } else {
        cmp.table = baselines.entries();
    }
    return cmp;
}

bool EvaluationReport::equal_ignoring_timing(const EvaluationReport& other) const {
    EvaluationReport a = *this;
    EvaluationReport b = other;
    a.timing_seconds.reset();
    b.timing_seconds.reset();
    return a == b;
}

namespace {

json baseline_to_json(const BaselineEntry& e) {
    return {{"name", e.name},
            {"modality", e.modality},
            {"accuracy", e.accuracy},
            {"execution_seconds", e.execution_seconds ? json(*e.execution_seconds) : json(nullptr)},
            {"source", e.source}};
}

BaselineEntry baseline_from_json(const json& j) {
    BaselineEntry e;
    e.name = j.at("name").get<std::string>();
    e.modality = j.at("modality").get<std::string>();
    e.accuracy = j.at("accuracy").get<double>();
    if (!j.at("execution_seconds").is_null()) {
        e.execution_seconds = j.at("execution_seconds").get<double>();
    }
    e.source = j.at("source").get<std::string>();
    return e;
}

}  // namespace

std::string report_to_json(const EvaluationReport& r) {
    json doc;
    doc["schema"] = kReportSchema;
    doc["model_name"] = r.model_name;
    doc["n"] = r.n;
    doc["accuracy"] = r.accuracy;
    doc["macro_f1"] = r.macro_f1;
    doc["macro_f1_zero_division"] = 0;
    doc["labels"] = r.labels;
    json per = json::array();
    for (const auto& m : r.per_label) {
        per.push_back({{"label", m.label},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support}});
    }
    doc["per_label"] = per;
    doc["confusion"] = r.confusion;
    doc["timing_seconds"] = r.timing_seconds ? json(*r.timing_seconds) : json(nullptr);
    doc["config_hash"] = r.config_hash;
    doc["seed"] = r.seed;
    if (r.reference) {
        json ref;
        ref["matched"] = r.reference->matched ? json(*r.reference->matched) : json(nullptr);
        ref["accuracy_delta"] = r.reference->accuracy_delta ? json(*r.reference->accuracy_delta) : json(nullptr);
        json table = json::array();
        for (const auto& e : r.reference->table) {
            table.push_back(baseline_to_json(e));
        }
        ref["table"] = table;
        if (r.reference->matched) {
            if (const auto* e = ReferenceBaselines::published().match(*r.reference->matched)) {
                ref["baseline"] = baseline_to_json(*e);
            }
        }
        doc["reference"] = ref;
    } else {
        doc["reference"] = nullptr;
    }
    return doc.dump(2) + "\n";
}

EvaluationReport report_from_json(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("malformed report JSON: ") + e.what());
    }
    const auto schema = doc.value("schema", std::string{});
    if (schema != kReportSchema) {
        throw SchemaError("unsupported report schema version '" + schema + "', expected '" + kReportSchema + "'");
    }
    EvaluationReport r;
    r.model_name = doc.at("model_name").get<std::string>();
    r.n = doc.at("n").get<std::size_t>();
    r.accuracy = doc.at("accuracy").get<double>();
    r.macro_f1 = doc.at("macro_f1").get<double>();
    r.labels = doc.at("labels").get<std::vector<std::string>>();
    for (const auto& m : doc.at("per_label")) {
        r.per_label.push_back({m.at("label").get<std::string>(), m.at("precision").get<double>(),
                               m.at("recall").get<double>(), m.at("f1").get<double>(),
                               m.at("support").get<std::size_t>()});
    }
    r.confusion = doc.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    if (!doc.at("timing_seconds").is_null()) {
        r.timing_seconds = doc.at("timing_seconds").get<double>();
    }
    r.config_hash = doc.at("config_hash").get<std::string>();
    r.seed = doc.at("seed").get<std::uint64_t>();
    if (const auto& ref = doc.at("reference"); !ref.is_null()) {
        ReferenceComparison cmp;
        if (!ref.at("matched").is_null()) {
            cmp.matched = ref.at("matched").get<std::string>();
        }
        if (!ref.at("accuracy_delta").is_null()) {
            cmp.accuracy_delta = ref.at("accuracy_delta").get<double>();
        }
        for (const auto& e : ref.at("table")) {
            cmp.table.push_back(baseline_from_json(e));
        }
        r.reference = std::move(cmp);
    }
    return r;
}

void write_report(const EvaluationReport& report, const std::filesystem::path& path) {
    detail::write_text_file(path, report_to_json(report));
}

EvaluationReport read_report(const std::filesystem::path& path) {
    return report_from_json(detail::read_text_file(path));
}

std::string confusion_to_csv(const EvaluationReport& r) {
    std::string out = "gold\\pred";
    for (const auto& l : r.labels) {
        out += "," + l;
    }
    out += "\n";
    for (std::size_t g = 0; g < r.confusion.size(); ++g) {
        out += g < r.labels.size() ? r.labels[g] : std::to_string(g);
        for (auto v : r.confusion[g]) {
            out += "," + std::to_string(v);
        }
        out += "\n";
    }
    return out;
}

std::string summary_table(const EvaluationReport& r) {
    std::ostringstream os;
    char line[160];
    os << "model: " << r.model_name << "\n";
    std::snprintf(line, sizeof(line), "n=%zu  accuracy=%.4f  macro_f1=%.4f", r.n, r.accuracy, r.macro_f1);
    os << line;
    if (r.timing_seconds) {
        std::snprintf(line, sizeof(line), "  time=%.3fs", *r.timing_seconds);
        os << line;
    }
    os << "\n";
    std::snprintf(line, sizeof(line), "  %-12s %9s %9s %9s %8s\n", "label", "precision", "recall", "f1", "support");
    os << line;
    for (const auto& m : r.per_label) {
        std::snprintf(line, sizeof(line), "  %-12s %9.4f %9.4f %9.4f %8zu\n", m.label.c_str(), m.precision, m.recall,
                      m.f1, m.support);
        os << line;
    }
    if (r.reference) {
        if (r.reference->matched) {
            std::snprintf(line, sizeof(line), "  vs published %s: %+.4f accuracy\n", r.reference->matched->c_str(),
                          r.reference->accuracy_delta.value_or(0.0));
            os << line;
        } else {
            os << "  published reference accuracies (context only):\n";
            for (const auto& e : r.reference->table) {
                std::snprintf(line, sizeof(line), "    %-22s %.4f\n", e.name.c_str(), e.accuracy);
                os << line;
            }
        }
    }
    return os.str();
}

}  // namespace ercfuse
