#include "ercfuse/text_features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <json.hpp>

#include "ercfuse/error.hpp"

namespace ercfuse {

namespace {

// Decodes one code point starting at text[i]; returns U+FFFD-like sentinel
// (0xFFFFFFFF) for malformed input and advances by one byte.
char32_t next_code_point(std::string_view text, std::size_t& i) {
    constexpr char32_t kInvalid = 0xFFFFFFFF;
    const auto b0 = static_cast<unsigned char>(text[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    std::size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return kInvalid;
    }
    if (i + len > text.size()) {
        ++i;
        return kInvalid;
    }
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(text[i + k]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return kInvalid;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += len;
    return cp;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z') {
        return c + 32;
    }
    if (c < 0x80) {
        return c;
    }
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) {
        return c + 32;
    }
    if (c >= 0x100 && c <= 0x17F) {
        if (c == 0x130) {
            return 'i';
        }
        if (c == 0x178) {
            return 0xFF;
        }
        const bool even_upper = (c <= 0x137) || (c >= 0x14A && c <= 0x177);
        const bool odd_upper = (c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E);
        if (even_upper && c % 2 == 0) {
            return c + 1;
        }
        if (odd_upper && c % 2 == 1) {
            return c + 1;
        }
        return c;
    }
    if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) {
        return c + 32;
    }
    if (c == 0x386) {
        return 0x3AC;
    }
    if (c >= 0x388 && c <= 0x38A) {
        return c + 37;
    }
    if (c == 0x38C) {
        return 0x3CC;
    }
    if (c == 0x38E || c == 0x38F) {
        return c + 63;
    }
    if (c >= 0x410 && c <= 0x42F) {
        return c + 32;
    }
    if (c >= 0x400 && c <= 0x40F) {
        return c + 80;
    }
    return c;
}

bool is_word_char(char32_t c) {
    if (c < 0x80) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    }
    if (c == 0xFFFFFFFF || c > 0x10FFFF) {
        return false;
    }
    if (c <= 0xBF || c == 0xD7 || c == 0xF7) {
        return false;
    }
    struct Range {
        char32_t lo, hi;
    };
    static constexpr Range kSeparators[] = {
        {0x2000, 0x206F},    // general punctuation, spaces, joiners
        {0x20A0, 0x20CF},    // currency
        {0x2100, 0x2BFF},    // letterlike, arrows, math, technical, box drawing, dingbats
        {0x3000, 0x303F},    // CJK symbols and punctuation
        {0xFE00, 0xFE0F},    // variation selectors
        {0xFE30, 0xFE4F},    // CJK compatibility forms
        {0xFF00, 0xFF0F},    // fullwidth punctuation
        {0xFF1A, 0xFF20},
        {0xFF3B, 0xFF40},
        {0xFF5B, 0xFF65},
        {0xFFF0, 0xFFFF},    // specials
        {0x1F000, 0x1FAFF},  // emoji and pictographs
    };
    for (const auto& r : kSeparators) {
        if (c >= r.lo && c <= r.hi) {
            return false;
        }
    }
    return true;
}

}  // namespace

TokenList tokenize(std::string_view text) {
    TokenList tokens;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
        const char32_t cp = next_code_point(text, i);
        if (is_word_char(cp)) {
            append_utf8(current, to_lower(cp));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    const std::size_t n_unigrams = tokens.size();
    for (std::size_t k = 0; k + 1 < n_unigrams; ++k) {
        tokens.push_back(tokens[k] + " " + tokens[k + 1]);
    }
    return tokens;
}

Vocabulary::Vocabulary(std::vector<std::string> terms, std::vector<std::size_t> df, std::size_t n_docs)
    : terms_(std::move(terms)), df_(std::move(df)), n_docs_(n_docs) {
    if (terms_.size() != df_.size()) {
        throw Error("vocabulary terms and df differ in length");
    }
    for (std::size_t i = 0; i < terms_.size(); ++i) {
        if (df_[i] < 1 || df_[i] > n_docs_) {
            throw Error("vocabulary term '" + terms_[i] + "' has df outside [1, n_docs]");
        }
        if (!index_.emplace(terms_[i], i).second) {
            throw Error("vocabulary term '" + terms_[i] + "' is duplicated");
        }
    }
}

std::optional<std::size_t> Vocabulary::find(std::string_view term) const {
    auto it = index_.find(std::string(term));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

double Vocabulary::idf(std::size_t term_index) const {
    return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + static_cast<double>(df_.at(term_index)))) + 1.0;
}

std::string Vocabulary::to_json() const {
    nlohmann::json doc;
    doc["format"] = "ercfuse-vocabulary/1";
    doc["n_docs"] = n_docs_;
    doc["terms"] = terms_;
    doc["df"] = df_;
    return doc.dump() + "\n";
}

Vocabulary Vocabulary::from_json(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("malformed vocabulary JSON: ") + e.what());
    }
    if (doc.value("format", std::string{}) != "ercfuse-vocabulary/1") {
        throw SchemaError("vocabulary has unknown format '" + doc.value("format", std::string{}) + "'");
    }
    return Vocabulary(doc.at("terms").get<std::vector<std::string>>(), doc.at("df").get<std::vector<std::size_t>>(),
                      doc.at("n_docs").get<std::size_t>());
}

Vocabulary build_vocabulary(const std::vector<TokenList>& train_docs, const VocabularyOptions& opts) {
    if (train_docs.empty()) {
        throw Error("cannot build a vocabulary from an empty training set");
    }
    if (opts.min_df < 1) {
        throw Error("min_df must be at least 1");
    }
    std::map<std::string, std::size_t> df;
    for (const auto& doc : train_docs) {
        std::set<std::string_view> distinct(doc.begin(), doc.end());
        for (auto t : distinct) {
            ++df[std::string(t)];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [term, count] : df) {
        if (count >= opts.min_df) {
            kept.emplace_back(term, count);
        }
    }
    // std::map iteration is already lexicographic; stable_sort keeps that as the tiebreak.
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (kept.size() > opts.max_terms) {
        kept.resize(opts.max_terms);
    }
    std::vector<std::string> terms;
    std::vector<std::size_t> counts;
    terms.reserve(kept.size());
    counts.reserve(kept.size());
    for (auto& [term, count] : kept) {
        terms.push_back(std::move(term));
        counts.push_back(count);
    }
    return Vocabulary(std::move(terms), std::move(counts), train_docs.size());
}

FeatureVector tfidf_vector(const TokenList& tokens, const Vocabulary& vocab) {
    FeatureVector v(vocab.size(), 0.0);
    for (const auto& t : tokens) {
        if (auto i = vocab.find(t)) {
            v[*i] += 1.0;
        }
    }
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] != 0.0) {
            v[i] *= vocab.idf(i);
            norm_sq += v[i] * v[i];
        }
    }
    if (norm_sq > 0.0) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (double& x : v) {
            x *= inv;
        }
    }
    return v;
}

}  // namespace ercfuse
