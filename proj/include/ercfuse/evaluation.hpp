#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ercfuse/corpus.hpp"

namespace ercfuse {

using LabelMap = std::map<std::string, LabelIndex>;

inline constexpr const char* kReportSchema = "erc-fuse-report/1";

double accuracy(const LabelMap& pred, const LabelMap& gold);

/// Unweighted mean of per-label F1 over all n_labels labels. A label with a
/// zero precision+recall denominator scores 0.
double macro_f1(const LabelMap& pred, const LabelMap& gold, std::size_t n_labels);

/// Row = gold, column = predicted; n_labels x n_labels.
std::vector<std::vector<std::size_t>> confusion_matrix(const LabelMap& pred, const LabelMap& gold,
                                                       std::size_t n_labels);

struct LabelMetrics {
    std::string label;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;

    friend bool operator==(const LabelMetrics&, const LabelMetrics&) = default;
};

std::vector<LabelMetrics> per_label_metrics(const std::vector<std::vector<std::size_t>>& confusion,
                                            const LabelSet& labels);

/// Runs `block` and returns its result with elapsed steady-clock seconds.
template <typename F>
auto measure(F&& block) {
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<std::invoke_result_t<F>>) {
        std::invoke(std::forward<F>(block));
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    } else {
        auto result = std::invoke(std::forward<F>(block));
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return std::pair{std::move(result), secs};
    }
}

struct BaselineEntry {
    std::string name;
    std::string modality;  // "text", "audio", "multimodal"
    double accuracy = 0.0;
    std::optional<double> execution_seconds;
    std::string source;

    friend bool operator==(const BaselineEntry&, const BaselineEntry&) = default;
};

/// Published accuracies and execution times of the fine-tuned reference
/// systems on the SemEval-2024 Task 3 (Friends) data. Context only: they
/// cannot be reproduced without that corpus and the transformer models.
class ReferenceBaselines {
public:
    static const ReferenceBaselines& published();

    const std::vector<BaselineEntry>& entries() const noexcept { return entries_; }
    // Case-insensitive match on the part of `model_name` before any '['.
    const BaselineEntry* match(const std::string& model_name) const;

private:
    explicit ReferenceBaselines(std::vector<BaselineEntry> entries) : entries_(std::move(entries)) {}
    std::vector<BaselineEntry> entries_;
};

struct ReferenceComparison {
    std::optional<std::string> matched;
    std::optional<double> accuracy_delta;  // report - baseline
    std::vector<BaselineEntry> table;      // full table when unmatched

    friend bool operator==(const ReferenceComparison&, const ReferenceComparison&) = default;
};

struct EvaluationReport {
    std::string model_name;
    std::size_t n = 0;
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::vector<std::string> labels;
    std::vector<LabelMetrics> per_label;
    std::vector<std::vector<std::size_t>> confusion;
    std::optional<double> timing_seconds;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::optional<ReferenceComparison> reference;

    friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
    bool equal_ignoring_timing(const EvaluationReport& other) const;
};

EvaluationReport evaluate(const std::string& model_name, const LabelMap& pred, const LabelMap& gold,
                          const LabelSet& labels);

ReferenceComparison compare_to_reference(const EvaluationReport& report,
                                         const ReferenceBaselines& baselines = ReferenceBaselines::published());

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(std::string_view json_text);
void write_report(const EvaluationReport& report, const std::filesystem::path& path);
EvaluationReport read_report(const std::filesystem::path& path);

std::string confusion_to_csv(const EvaluationReport& report);
std::string summary_table(const EvaluationReport& report);

}  // namespace ercfuse
