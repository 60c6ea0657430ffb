#include "ercfuse/classifiers.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "ercfuse/rng.hpp"
#include "io_util.hpp"

namespace ercfuse {

using nlohmann::json;

ProbabilityDistribution::ProbabilityDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
        throw Error("probability distribution must not be empty");
    }
    double sum = 0.0;
    for (double p : probs_) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw Error("probability component " + detail::format_double(p) + " outside [0, 1]");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw Error("probability components sum to " + detail::format_double(sum));
    }
}

ProbabilityDistribution ProbabilityDistribution::uniform(std::size_t n) {
    return ProbabilityDistribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

ProbabilityDistribution ProbabilityDistribution::one_hot(std::size_t n, LabelIndex hot) {
    std::vector<double> p(n, 0.0);
    p.at(hot) = 1.0;
    return ProbabilityDistribution(std::move(p));
}

LabelIndex ProbabilityDistribution::argmax() const {
    return static_cast<LabelIndex>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) {
        v /= sum;
    }
    return p;
}

Standardizer Standardizer::fit(const std::vector<FeatureVector>& features) {
    if (features.empty()) {
        throw Error("cannot fit a standardizer on no data");
    }
    const std::size_t dim = features.front().size();
    Standardizer s;
    s.mean.assign(dim, 0.0);
    s.scale.assign(dim, 0.0);
    const auto n = static_cast<double>(features.size());
    for (const auto& x : features) {
        for (std::size_t j = 0; j < dim; ++j) {
            s.mean[j] += x[j];
        }
    }
    for (double& m : s.mean) {
        m /= n;
    }
    for (const auto& x : features) {
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = x[j] - s.mean[j];
            s.scale[j] += d * d;
        }
    }
    for (double& v : s.scale) {
        v = std::sqrt(v / n);
        if (v < 1e-12) {
            v = 1.0;  // constant feature: centre only
        }
    }
    return s;
}

FeatureVector Standardizer::apply(std::span<const double> x) const {
    if (x.size() != mean.size()) {
        throw DimensionError("standardizer expects " + std::to_string(mean.size()) + " features, got " +
                             std::to_string(x.size()));
    }
    FeatureVector out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        out[j] = (x[j] - mean[j]) / scale[j];
    }
    return out;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be positive");
    }
    if (epochs < 1) {
        throw ConfigError("epochs must be at least 1");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be at least 1");
    }
    if (!(l2 >= 0.0) || !std::isfinite(l2)) {
        throw ConfigError("l2 must be non-negative");
    }
}

SoftmaxModel SoftmaxModel::zeros(LabelSet labels, std::size_t feature_dim) {
    SoftmaxModel m;
    m.weights.assign(labels.size() * feature_dim, 0.0);
    m.bias.assign(labels.size(), 0.0);
    m.label_set = std::move(labels);
    m.feature_dim = feature_dim;
    return m;
}

namespace {

void check_input(const SoftmaxModel& model, std::span<const double> x) {
    if (x.size() != model.feature_dim) {
        throw DimensionError("model expects " + std::to_string(model.feature_dim) + " features, got " +
                             std::to_string(x.size()));
    }
}

std::vector<double> raw_logits(const SoftmaxModel& model, std::span<const double> x) {
    std::vector<double> z(model.bias);
    for (std::size_t c = 0; c < z.size(); ++c) {
        const double* w = model.weights.data() + c * model.feature_dim;
        double acc = 0.0;
        for (std::size_t j = 0; j < model.feature_dim; ++j) {
            acc += w[j] * x[j];
        }
        z[c] += acc;
    }
    return z;
}

double log_sum_exp(std::span<const double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) {
        sum += std::exp(v - mx);
    }
    return mx + std::log(sum);
}

}  // namespace

std::vector<double> SoftmaxModel::logits(std::span<const double> x) const {
    check_input(*this, x);
    if (scaler) {
        const auto xs = scaler->apply(x);
        return raw_logits(*this, xs);
    }
    return raw_logits(*this, x);
}

LossAndGradient loss_and_gradient(const SoftmaxModel& model, std::span<const Example> batch, double l2,
                                  std::span<const double> class_weights) {
    if (batch.empty()) {
        throw Error("loss_and_gradient needs a non-empty batch");
    }
    const std::size_t k = model.n_labels();
    const std::size_t d = model.feature_dim;
    if (!class_weights.empty() && class_weights.size() != k) {
        throw DimensionError("class weight vector has " + std::to_string(class_weights.size()) + " entries for " +
                             std::to_string(k) + " labels");
    }

    LossAndGradient out;
    out.grad.weights.assign(k * d, 0.0);
    out.grad.bias.assign(k, 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    FeatureVector scaled;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Example& ex = batch[i];
        check_input(model, ex.features);
        if (ex.label >= k) {
            throw DimensionError("example label " + std::to_string(ex.label) + " outside label set");
        }
        std::span<const double> x = ex.features;
        for (double v : x) {
            if (!std::isfinite(v)) {
                throw Error("non-finite feature in batch element " + std::to_string(i));
            }
        }
        if (model.scaler) {
            scaled = model.scaler->apply(x);
            x = scaled;
        }
        const auto z = raw_logits(model, x);
        const double lse = log_sum_exp(z);
        const double w = class_weights.empty() ? 1.0 : class_weights[ex.label];
        out.loss += w * (lse - z[ex.label]) * inv_n;
        for (std::size_t c = 0; c < k; ++c) {
            const double p = std::exp(z[c] - lse);
            const double delta = w * (p - (c == ex.label ? 1.0 : 0.0)) * inv_n;
            out.grad.bias[c] += delta;
            if (delta != 0.0) {
                double* g = out.grad.weights.data() + c * d;
                for (std::size_t j = 0; j < d; ++j) {
                    g[j] += delta * x[j];
                }
            }
        }
    }

    if (l2 > 0.0) {
        double sq = 0.0;
        for (std::size_t i = 0; i < model.weights.size(); ++i) {
            sq += model.weights[i] * model.weights[i];
            out.grad.weights[i] += l2 * model.weights[i];
        }
        out.loss += 0.5 * l2 * sq;
    }
    return out;
}

std::vector<double> inverse_frequency_weights(std::span<const LabelIndex> labels, std::size_t n_labels) {
    std::vector<std::size_t> counts(n_labels, 0);
    for (auto l : labels) {
        ++counts.at(l);
    }
    const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }));
    std::vector<double> w(n_labels, 0.0);
    for (std::size_t c = 0; c < n_labels; ++c) {
        if (counts[c] > 0) {
            w[c] = static_cast<double>(labels.size()) / (present * static_cast<double>(counts[c]));
        }
    }
    return w;
}

SoftmaxModel train_softmax(const std::vector<FeatureVector>& features, const std::vector<LabelIndex>& labels,
                           const LabelSet& label_set, const TrainConfig& cfg) {
    cfg.validate();
    if (features.empty()) {
        throw Error("cannot train on an empty training set");
    }
    if (features.size() != labels.size()) {
        throw DimensionError("features and labels differ in length");
    }
    const std::size_t dim = features.front().size();
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].size() != dim) {
            throw DimensionError("training example " + std::to_string(i) + " has " +
                                 std::to_string(features[i].size()) + " features, expected " + std::to_string(dim));
        }
        if (labels[i] >= label_set.size()) {
            throw DimensionError("training label " + std::to_string(labels[i]) + " outside label set");
        }
    }
    {
        std::vector<bool> seen(label_set.size(), false);
        for (auto l : labels) {
            seen[l] = true;
        }
        for (std::size_t c = 0; c < seen.size(); ++c) {
            if (!seen[c]) {
                std::clog << "warning: label '" << label_set.name(c) << "' has no training examples\n";
            }
        }
    }

    SoftmaxModel model = SoftmaxModel::zeros(label_set, dim);
    std::optional<Standardizer> scaler;
    std::vector<FeatureVector> scaled_store;
    const std::vector<FeatureVector>* inputs = &features;
    if (cfg.standardize) {
        scaler = Standardizer::fit(features);
        scaled_store.reserve(features.size());
        for (const auto& x : features) {
            scaled_store.push_back(scaler->apply(x));
        }
        inputs = &scaled_store;
    }

    std::vector<double> class_weights;
    if (cfg.class_weighting) {
        class_weights = inverse_frequency_weights(labels, label_set.size());
    }

    std::vector<Example> all;
    all.reserve(inputs->size());
    for (std::size_t i = 0; i < inputs->size(); ++i) {
        all.push_back({(*inputs)[i], labels[i]});
    }

    std::vector<std::size_t> order(all.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Xorshift64Star rng(cfg.seed);
    std::vector<Example> batch;
    batch.reserve(cfg.batch_size);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            rng.shuffle(std::span<std::size_t>(order));
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            batch.clear();
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(all[order[i]]);
            }
            const auto lg = loss_and_gradient(model, batch, cfg.l2, class_weights);
            for (std::size_t i = 0; i < model.weights.size(); ++i) {
                model.weights[i] -= cfg.learning_rate * lg.grad.weights[i];
            }
            for (std::size_t c = 0; c < model.bias.size(); ++c) {
                model.bias[c] -= cfg.learning_rate * lg.grad.bias[c];
            }
        }
        const double objective = loss_and_gradient(model, all, cfg.l2, class_weights).loss;
        if (!std::isfinite(objective)) {
            throw Error("training diverged at epoch " + std::to_string(epoch + 1) + "; lower the learning rate");
        }
        model.loss_trace.push_back(objective);
    }
    model.scaler = std::move(scaler);
    return model;
}

ProbabilityDistribution predict_proba(const SoftmaxModel& model, std::span<const double> x) {
    const auto p = softmax(model.logits(x));
    // Guard the simplex invariant against last-ulp drift.
    std::vector<double> clamped(p.size());
    std::transform(p.begin(), p.end(), clamped.begin(), [](double v) { return std::clamp(v, 0.0, 1.0); });
    return ProbabilityDistribution(std::move(clamped));
}

PredictionTable PredictionTable::restricted_to(const std::set<std::string>& ids) const {
    PredictionTable out;
    out.model_name = model_name;
    out.label_set = label_set;
    out.timing_seconds = timing_seconds;
    for (const auto& id : ids) {
        auto it = rows.find(id);
        if (it == rows.end()) {
            throw Error("prediction table '" + model_name + "' has no row for '" + id + "'");
        }
        out.rows.emplace(id, it->second);
    }
    return out;
}

std::map<std::string, LabelIndex> PredictionTable::argmax_labels() const {
    std::map<std::string, LabelIndex> out;
    for (const auto& [id, p] : rows) {
        out.emplace(id, p.argmax());
    }
    return out;
}

PredictionTable predict_table(const SoftmaxModel& model, const std::map<std::string, FeatureVector>& features,
                              const std::string& name) {
    const auto t0 = std::chrono::steady_clock::now();
    PredictionTable table;
    table.model_name = name;
    table.label_set = model.label_set;
    for (const auto& [id, x] : features) {
        table.rows.emplace(id, predict_proba(model, x));
    }
    table.timing_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return table;
}

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    return out + "\"";
}

}  // namespace

PredictionTable parse_predictions_csv(std::string_view csv, const LabelSet& label_set, const std::string& source) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= csv.size()) {
        auto end = csv.find('\n', start);
        if (end == std::string_view::npos) {
            end = csv.size();
        }
        auto line = csv.substr(start, end - start);
        if (!trim(line).empty()) {
            lines.push_back(line);
        }
        start = end + 1;
    }
    if (lines.empty()) {
        throw PredictionFormatError(source + ": empty prediction file");
    }

    const auto header = split_csv_line(lines.front());
    if (header.empty() || trim(header[0]) != "id") {
        throw PredictionFormatError(source + ": header must start with 'id'");
    }
    // column_of[label index] = CSV column
    std::vector<std::size_t> column_of(label_set.size(), 0);
    std::vector<bool> have(label_set.size(), false);
    for (std::size_t c = 1; c < header.size(); ++c) {
        const auto name = trim(header[c]);
        auto idx = label_set.find(name);
        if (!idx) {
            throw PredictionFormatError(source + ": unknown label '" + name + "' in header");
        }
        if (have[*idx]) {
            throw PredictionFormatError(source + ": label '" + name + "' appears twice in header");
        }
        have[*idx] = true;
        column_of[*idx] = c;
    }
    for (std::size_t l = 0; l < have.size(); ++l) {
        if (!have[l]) {
            throw PredictionFormatError(source + ": missing column for label '" + label_set.name(l) + "'");
        }
    }

    PredictionTable table;
    table.label_set = label_set;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto fields = split_csv_line(lines[r]);
        const std::string where = source + " row " + std::to_string(r + 1);
        if (fields.size() != header.size()) {
            throw PredictionFormatError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                                        std::to_string(fields.size()));
        }
        const std::string id = trim(fields[0]);
        if (id.empty()) {
            throw PredictionFormatError(where + ": empty id");
        }
        std::vector<double> probs(label_set.size());
        double sum = 0.0;
        for (std::size_t l = 0; l < label_set.size(); ++l) {
            const auto text = trim(fields[column_of[l]]);
            double v = 0.0;
            auto res = std::from_chars(text.data(), text.data() + text.size(), v);
            if (res.ec != std::errc{} || res.ptr != text.data() + text.size() || !std::isfinite(v) || v < 0.0 ||
                v > 1.0 + 1e-4) {
                throw PredictionFormatError(where + " (id '" + id + "'): invalid probability '" + text + "'");
            }
            probs[l] = v;
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-4) {
            throw PredictionFormatError(where + ": row for id '" + id + "' sums to " + detail::format_double(sum));
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            for (double& v : probs) {
                v = std::min(1.0, v / sum);
            }
        }
        if (!table.rows.emplace(id, ProbabilityDistribution(std::move(probs))).second) {
            throw PredictionFormatError(where + ": duplicate utterance id '" + id + "'");
        }
    }
    return table;
}

PredictionTable load_external_predictions(const std::filesystem::path& path, const LabelSet& label_set) {
    std::string text;
    try {
        text = detail::read_text_file(path);
    } catch (const Error& e) {
        throw PredictionFormatError(e.what());
    }
    PredictionTable table = parse_predictions_csv(text, label_set, path.string());
    table.model_name = path.stem().string();
    auto meta_path = path;
    meta_path += ".meta.json";
    if (std::filesystem::exists(meta_path)) {
        json meta;
        try {
            meta = json::parse(detail::read_text_file(meta_path));
        } catch (const json::parse_error& e) {
            throw PredictionFormatError(meta_path.string() + ": " + e.what());
        }
        if (auto it = meta.find("model_name"); it != meta.end() && it->is_string()) {
            table.model_name = it->get<std::string>();
        }
        if (auto it = meta.find("timing_seconds"); it != meta.end() && it->is_number()) {
            table.timing_seconds = it->get<double>();
        }
    }
    return table;
}

std::string predictions_to_csv(const PredictionTable& table) {
    std::string out = "id";
    for (const auto& l : table.label_set.labels()) {
        out += "," + csv_escape(l);
    }
    out += "\n";
    for (const auto& [id, p] : table.rows) {
        out += csv_escape(id);
        for (double v : p.probs()) {
            out += "," + detail::format_double(v);
        }
        out += "\n";
    }
    return out;
}

void write_predictions(const PredictionTable& table, const std::filesystem::path& path) {
    detail::write_text_file(path, predictions_to_csv(table));
    json meta;
    meta["model_name"] = table.model_name;
    meta["timing_seconds"] = table.timing_seconds ? json(*table.timing_seconds) : json(nullptr);
    auto meta_path = path;
    meta_path += ".meta.json";
    detail::write_text_file(meta_path, meta.dump(2) + "\n");
}

std::string model_to_json(const SoftmaxModel& model) {
    json doc;
    doc["format"] = "ercfuse-model/1";
    doc["labels"] = model.label_set.labels();
    doc["feature_dim"] = model.feature_dim;
    doc["weights"] = model.weights;
    doc["bias"] = model.bias;
    if (model.scaler) {
        doc["scaler"] = {{"mean", model.scaler->mean}, {"scale", model.scaler->scale}};
    } else {
        doc["scaler"] = nullptr;
    }
    doc["loss_trace"] = model.loss_trace;
    doc["config_hash"] = model.config_hash;
    return doc.dump() + "\n";
}

SoftmaxModel model_from_json(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("malformed model JSON: ") + e.what());
    }
    if (doc.value("format", std::string{}) != "ercfuse-model/1") {
        throw SchemaError("model file has unknown format '" + doc.value("format", std::string{}) + "'");
    }
    SoftmaxModel m;
    m.label_set = LabelSet(doc.at("labels").get<std::vector<std::string>>());
    m.feature_dim = doc.at("feature_dim").get<std::size_t>();
    m.weights = doc.at("weights").get<std::vector<double>>();
    m.bias = doc.at("bias").get<std::vector<double>>();
    if (m.weights.size() != m.label_set.size() * m.feature_dim || m.bias.size() != m.label_set.size()) {
        throw SchemaError("model parameter shapes do not match labels x feature_dim");
    }
    if (const auto& s = doc.at("scaler"); !s.is_null()) {
        Standardizer st{s.at("mean").get<std::vector<double>>(), s.at("scale").get<std::vector<double>>()};
        if (st.mean.size() != m.feature_dim || st.scale.size() != m.feature_dim) {
            throw SchemaError("model scaler dimension mismatch");
        }
        m.scaler = std::move(st);
    }
    m.loss_trace = doc.value("loss_trace", std::vector<double>{});
    m.config_hash = doc.value("config_hash", std::string{});
    for (double v : m.weights) {
        if (!std::isfinite(v)) {
            throw SchemaError("model contains non-finite weights");
        }
    }
    return m;
}

void save_model(const SoftmaxModel& model, const std::filesystem::path& path) {
    detail::write_text_file(path, model_to_json(model));
}

SoftmaxModel load_model(const std::filesystem::path& path) { return model_from_json(detail::read_text_file(path)); }

}  // namespace ercfuse
