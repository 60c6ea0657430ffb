#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ercfuse/audio_dsp.hpp"  // FeatureVector

namespace ercfuse {

using TokenList = std::vector<std::string>;

/// Lowercases, splits on runs of non-alphanumeric code points, and returns all
/// unigrams followed by all adjacent bigrams ("a b").
///
/// Lowercasing covers ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic.
/// Any code point outside ASCII that is not in a known punctuation/symbol block
/// counts as alphanumeric. Invalid UTF-8 bytes act as separators.
TokenList tokenize(std::string_view text);

class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::vector<std::string> terms, std::vector<std::size_t> df, std::size_t n_docs);

    const std::vector<std::string>& terms() const noexcept { return terms_; }
    const std::vector<std::size_t>& df() const noexcept { return df_; }
    std::size_t n_docs() const noexcept { return n_docs_; }
    std::size_t size() const noexcept { return terms_.size(); }
    bool empty() const noexcept { return terms_.empty(); }
    std::optional<std::size_t> find(std::string_view term) const;

    // ln((1 + n_docs) / (1 + df)) + 1
    double idf(std::size_t term_index) const;

    std::string to_json() const;
    static Vocabulary from_json(std::string_view json_text);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.terms_ == b.terms_ && a.df_ == b.df_ && a.n_docs_ == b.n_docs_;
    }

private:
    std::vector<std::string> terms_;
    std::vector<std::size_t> df_;
    std::size_t n_docs_ = 0;
    std::unordered_map<std::string, std::size_t> index_;
};

struct VocabularyOptions {
    std::size_t min_df = 2;
    std::size_t max_terms = 20000;
};

/// Terms with df >= min_df, ordered by descending df then lexicographically,
/// truncated to max_terms. Pass training-split documents only.
Vocabulary build_vocabulary(const std::vector<TokenList>& train_docs, const VocabularyOptions& opts = {});

/// Smoothed-IDF weighted counts, L2-normalised. Input with no known token maps
/// to the zero vector.
FeatureVector tfidf_vector(const TokenList& tokens, const Vocabulary& vocab);

}  // namespace ercfuse
