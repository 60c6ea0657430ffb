#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ercfuse/audio_dsp.hpp"
#include "ercfuse/corpus.hpp"

namespace ercfuse::synthetic {

/// Four-class corpus whose modalities carry complementary information:
/// text words identify the group {joy, surprise} vs {sadness, anger}; audio
/// pitch identifies the group {joy, sadness} vs {surprise, anger}. Neither
/// modality alone can separate classes within its groups.
struct ComplementaryFixture {
    std::filesystem::path manifest;
    // Per-utterance group membership, for oracle computations in tests.
    std::map<std::string, int> text_group;
    std::map<std::string, int> audio_group;
};

struct ComplementaryOptions {
    std::size_t per_class = 20;
    int source_rate = 48000;
    double clip_seconds = 0.3;
    std::uint64_t seed = 7;
};

inline const std::vector<std::string>& complementary_labels() {
    static const std::vector<std::string> labels{"joy", "surprise", "sadness", "anger"};
    return labels;
}

ComplementaryFixture write_complementary_corpus(const std::filesystem::path& dir, const ComplementaryOptions& opts = {});

/// Linearly separable dense features: class c has a +3 offset on feature
/// (c mod dim) plus uniform noise in [-0.5, 0.5] on every feature.
struct DenseFixture {
    std::vector<FeatureVector> features;
    std::vector<LabelIndex> labels;
};

DenseFixture separable_clusters(std::size_t n_classes, std::size_t per_class, std::size_t dim, std::uint64_t seed);

/// Two well-separated 2-D classes: label 0 around (-2, -2), label 1 around (2, 2).
DenseFixture separable_two_class(std::size_t per_class, std::uint64_t seed);

}  // namespace ercfuse::synthetic
