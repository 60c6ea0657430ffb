#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ercfuse/error.hpp"

namespace ercfuse {

using LabelIndex = std::size_t;

/// Ordered, duplicate-free emotion inventory. Position in `labels()` is the
/// component index of every probability vector downstream.
class LabelSet {
public:
    LabelSet() = default;
    explicit LabelSet(std::vector<std::string> labels);

    /// anger, disgust, fear, joy, sadness, surprise, neutral
    static LabelSet defaults();

    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }
    bool empty() const noexcept { return labels_.empty(); }
    const std::string& name(LabelIndex i) const { return labels_.at(i); }

    std::optional<LabelIndex> find(std::string_view label) const;
    LabelIndex index(std::string_view label) const;  // throws Error if absent
    bool contains(std::string_view label) const { return find(label).has_value(); }

    friend bool operator==(const LabelSet& a, const LabelSet& b) { return a.labels_ == b.labels_; }

private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, LabelIndex> index_;
};

struct Utterance {
    std::string id;
    std::string conversation_id;
    std::string speaker;
    std::string text;
    std::optional<std::string> audio_path;  // relative to Corpus::root
    std::optional<LabelIndex> label;
};

class Corpus {
public:
    Corpus() = default;
    // Validates id uniqueness and label membership.
    Corpus(LabelSet label_set, std::vector<Utterance> utterances, std::filesystem::path root = {});

    const LabelSet& label_set() const noexcept { return label_set_; }
    const std::vector<Utterance>& utterances() const noexcept { return utterances_; }
    const std::filesystem::path& root() const noexcept { return root_; }
    std::size_t size() const noexcept { return utterances_.size(); }
    bool empty() const noexcept { return utterances_.empty(); }

    const Utterance* find(std::string_view id) const;
    std::filesystem::path resolve_audio(const Utterance& u) const;

    // Sub-corpus with the given ids, manifest order preserved.
    Corpus subset(const std::set<std::string>& ids) const;

private:
    LabelSet label_set_;
    std::vector<Utterance> utterances_;
    std::filesystem::path root_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// Parses a JSON manifest. Audio paths are resolved against the manifest's
/// directory. Errors name the offending utterance id and its array position.
Corpus load_manifest(const std::filesystem::path& path);
Corpus parse_manifest(std::string_view json_text, const std::filesystem::path& root = {});

struct AlignmentIssue {
    std::string id;
    std::string reason;
};

struct AlignmentReport {
    std::size_t total = 0;
    std::size_t fully_aligned = 0;
    std::size_t text_only = 0;           // non-empty text, no usable audio
    std::size_t audio_missing_file = 0;  // audio absent, file missing, or not a .wav
    std::size_t empty_text = 0;
    std::size_t audio_referenced_missing = 0;  // path given but unusable (fatal for `validate`)
    std::vector<AlignmentIssue> issues;
};

AlignmentReport validate_alignment(const Corpus& corpus);

struct SplitAssignment {
    std::set<std::string> train_ids;
    std::set<std::string> test_ids;
    std::uint64_t seed = 0;
    double ratio = 0.8;  // train fraction

    friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;
};

/// Number of items of a class with `count` members that go to test:
/// round(count * (1 - ratio)), halves rounded up.
std::size_t stratified_test_count(std::size_t count, double ratio);

/// Per-label seeded Fisher-Yates (labels visited in LabelSet order, one
/// Xorshift64Star stream), the first stratified_test_count items go to test.
SplitAssignment stratified_split(const Corpus& corpus, double ratio, std::uint64_t seed);

std::map<std::string, std::size_t> label_histogram(const Corpus& corpus);

std::string split_to_json(const SplitAssignment& split);
SplitAssignment split_from_json(std::string_view json_text);
void write_split(const SplitAssignment& split, const std::filesystem::path& path);
SplitAssignment read_split(const std::filesystem::path& path);

}  // namespace ercfuse
