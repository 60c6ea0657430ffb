#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ercfuse/audio_dsp.hpp"  // FeatureVector
#include "ercfuse/corpus.hpp"     // LabelSet, LabelIndex

namespace ercfuse {

/// A point on the probability simplex, indexed by LabelSet order.
class ProbabilityDistribution {
public:
    static constexpr double kSumTolerance = 1e-6;

    ProbabilityDistribution() = default;
    // Throws Error unless every component is finite, in [0, 1], and the sum is
    // within kSumTolerance of 1.
    explicit ProbabilityDistribution(std::vector<double> probs);

    static ProbabilityDistribution uniform(std::size_t n);
    static ProbabilityDistribution one_hot(std::size_t n, LabelIndex hot);

    const std::vector<double>& probs() const noexcept { return probs_; }
    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    LabelIndex argmax() const;  // lowest index on ties

    friend bool operator==(const ProbabilityDistribution&, const ProbabilityDistribution&) = default;

private:
    std::vector<double> probs_;
};

// Numerically stable softmax (max subtracted before exponentiation).
std::vector<double> softmax(std::span<const double> logits);

/// Per-feature affine map x' = (x - mean) / scale, fitted on training data.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const std::vector<FeatureVector>& features);
    FeatureVector apply(std::span<const double> x) const;
    friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double l2 = 1e-4;
    std::uint64_t seed = 0;
    bool shuffle = true;
    bool class_weighting = false;  // inverse-frequency per-class loss weights
    bool standardize = false;      // fit a Standardizer on the training features

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Multinomial logistic regression. Weights are row-major n_labels x feature_dim.
struct SoftmaxModel {
    LabelSet label_set;
    std::size_t feature_dim = 0;
    std::vector<double> weights;
    std::vector<double> bias;
    std::optional<Standardizer> scaler;
    std::vector<double> loss_trace;  // full-data objective after each epoch
    std::string config_hash;

    static SoftmaxModel zeros(LabelSet labels, std::size_t feature_dim);

    std::size_t n_labels() const noexcept { return label_set.size(); }
    // Applies the scaler (when present) and returns W x + b.
    std::vector<double> logits(std::span<const double> x) const;

    friend bool operator==(const SoftmaxModel&, const SoftmaxModel&) = default;
};

struct Example {
    std::span<const double> features;
    LabelIndex label = 0;
};

struct Gradient {
    std::vector<double> weights;  // same layout as SoftmaxModel::weights
    std::vector<double> bias;
};

struct LossAndGradient {
    double loss = 0.0;
    Gradient grad;
};

/// Mean cross-entropy over the batch plus (l2 / 2) ||W||^2 (bias unpenalised),
/// with its exact gradient. Optional per-class weights scale each example's
/// cross-entropy term.
LossAndGradient loss_and_gradient(const SoftmaxModel& model, std::span<const Example> batch, double l2,
                                  std::span<const double> class_weights = {});

/// Inverse-frequency weights n / (k * count_c) over the k labels that occur;
/// absent labels get weight 0.
std::vector<double> inverse_frequency_weights(std::span<const LabelIndex> labels, std::size_t n_labels);

/// Zero-initialised mini-batch gradient descent with a fixed learning rate.
/// When cfg.shuffle is set, example order is reshuffled at the start of every
/// epoch from a single Xorshift64Star(cfg.seed) stream.
SoftmaxModel train_softmax(const std::vector<FeatureVector>& features, const std::vector<LabelIndex>& labels,
                           const LabelSet& label_set, const TrainConfig& cfg);

ProbabilityDistribution predict_proba(const SoftmaxModel& model, std::span<const double> x);

struct PredictionTable {
    std::string model_name;
    LabelSet label_set;
    std::map<std::string, ProbabilityDistribution> rows;
    std::optional<double> timing_seconds;

    std::size_t size() const noexcept { return rows.size(); }
    // Restricts to the given ids; throws if any is missing.
    PredictionTable restricted_to(const std::set<std::string>& ids) const;
    std::map<std::string, LabelIndex> argmax_labels() const;
};

PredictionTable predict_table(const SoftmaxModel& model, const std::map<std::string, FeatureVector>& features,
                              const std::string& name);

/// Reads a prediction CSV (`id,<label>...`) and its optional sidecar
/// `<path>.meta.json`. Columns are permuted into `label_set` order. Rows whose
/// sum is within 1e-4 of 1 are renormalised; others are rejected.
PredictionTable load_external_predictions(const std::filesystem::path& path, const LabelSet& label_set);
PredictionTable parse_predictions_csv(std::string_view csv, const LabelSet& label_set, const std::string& source);

std::string predictions_to_csv(const PredictionTable& table);
// Writes the CSV and its `.meta.json` sidecar.
void write_predictions(const PredictionTable& table, const std::filesystem::path& path);

std::string model_to_json(const SoftmaxModel& model);
SoftmaxModel model_from_json(std::string_view json_text);
void save_model(const SoftmaxModel& model, const std::filesystem::path& path);
SoftmaxModel load_model(const std::filesystem::path& path);

}  // namespace ercfuse
