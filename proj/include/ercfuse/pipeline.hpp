#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ercfuse/audio_dsp.hpp"
#include "ercfuse/classifiers.hpp"
#include "ercfuse/corpus.hpp"
#include "ercfuse/evaluation.hpp"
#include "ercfuse/fusion.hpp"
#include "ercfuse/text_features.hpp"

namespace ercfuse {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitStage = 2;

/// Failure of a validation step (bad config, manifest, alignment). Maps to exit 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Failure inside a pipeline stage. Maps to exit 2.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& cause)
        : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

struct ExternalSource {
    std::string name;
    std::filesystem::path path;
};

struct FusionConfig {
    std::string method = "weighted_average";  // weighted_average | vote | search
    std::vector<double> weights;              // empty: equal weights
    double step = 0.05;                       // search resolution
};

struct RunConfig {
    std::filesystem::path manifest;
    double split_ratio = 0.8;
    std::uint64_t split_seed = 42;

    bool text_enabled = true;
    VocabularyOptions vocab;
    TrainConfig text_train;

    bool audio_enabled = true;
    int audio_rate = 16000;
    FrameConfig frame = FrameConfig::standard(16000);
    TrainConfig audio_train = [] {
        TrainConfig c;
        c.standardize = true;
        return c;
    }();

    std::optional<FusionConfig> fusion;  // absent: equal-weight average when >= 2 members
    std::vector<ExternalSource> external;

    std::filesystem::path out_dir = "ercfuse_out";
    std::size_t jobs = 1;

    /// Parses a config JSON document. Relative paths resolve against base_dir.
    /// Unknown keys are rejected.
    static RunConfig from_json(std::string_view json_text, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);

    /// Canonical JSON of everything that influences results (out_dir and jobs
    /// are excluded).
    std::string canonical_json() const;
    /// FNV-1a 64 of canonical_json(), hex.
    std::string hash() const;

    /// Applies --seed: overrides the split seed and both training seeds.
    void override_seed(std::uint64_t seed);
};

/// Feature cache: JSON lines, first line a header
/// {"magic":"ercfuse-features/1","modality":...,"config_hash":...,"dim":...},
/// then one {"id":...,"values":[...]} record per utterance.
struct FeatureCache {
    std::string modality;
    std::string config_hash;
    std::size_t dim = 0;
    std::map<std::string, FeatureVector> rows;

    void write(const std::filesystem::path& path) const;
    static FeatureCache read(const std::filesystem::path& path);
};

std::string text_feature_hash(const Vocabulary& vocab);
std::string audio_feature_hash(const FrameConfig& frame, int rate);

/// Gold labels for the given ids (all labeled utterances when ids is empty).
LabelMap gold_labels(const Corpus& corpus, const std::set<std::string>& ids = {});

struct RunResult {
    std::string config_hash;
    std::vector<std::filesystem::path> artifacts;  // relative to out_dir, sorted
    std::vector<EvaluationReport> reports;
};

int cmd_validate(const RunConfig& cfg, std::ostream& out);
SplitAssignment cmd_split(const RunConfig& cfg, std::ostream& out);
void cmd_featurize(const RunConfig& cfg, std::ostream& out);
void cmd_train(const RunConfig& cfg, std::ostream& out);
RunResult cmd_run(const RunConfig& cfg, std::ostream& out);

struct PredictArgs {
    std::filesystem::path model;
    std::filesystem::path features;
    std::optional<std::filesystem::path> split;  // restrict to its test ids
    std::string name;
    std::filesystem::path out;
};
PredictionTable cmd_predict(const PredictArgs& args, std::ostream& out);

struct FuseArgs {
    std::vector<std::filesystem::path> predictions;
    std::string method = "weighted_average";  // weighted_average | vote | search
    std::vector<double> weights;
    double step = 0.05;
    std::optional<std::filesystem::path> manifest;  // gold labels
    std::optional<std::filesystem::path> split;     // restrict evaluation to test ids
    std::filesystem::path out;
    std::optional<std::filesystem::path> report;
};
PredictionTable cmd_fuse(const FuseArgs& args, std::ostream& out);

struct EvaluateArgs {
    std::filesystem::path predictions;
    std::filesystem::path manifest;
    std::optional<std::filesystem::path> split;
    std::filesystem::path out;
    std::string config_hash;
    std::uint64_t seed = 0;
};
EvaluationReport cmd_evaluate(const EvaluateArgs& args, std::ostream& out);

void cmd_report(const std::vector<std::filesystem::path>& reports, std::ostream& out);

// Label set from a prediction CSV header, in column order.
LabelSet read_prediction_labels(const std::filesystem::path& path);

// Filesystem-safe form of a model name.
std::string slug(const std::string& name);

}  // namespace ercfuse
