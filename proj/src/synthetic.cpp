#include "ercfuse/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include <json.hpp>

#include "ercfuse/rng.hpp"
#include "io_util.hpp"

namespace ercfuse::synthetic {

namespace {

const std::vector<std::string> kBrightWords{"great", "wow", "amazing", "really", "oh", "yes", "nice", "fun"};
const std::vector<std::string> kDarkWords{"no", "why", "terrible", "stop", "never", "awful", "hate", "sorry"};

std::string sentence(const std::vector<std::string>& words, Xorshift64Star& rng) {
    const std::size_t n = 4 + rng.below(3);
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) {
            s += ' ';
        }
        s += words[rng.below(words.size())];
    }
    if (rng.below(2) == 0) {
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
    }
    return s + (rng.below(2) == 0 ? "!" : ".");
}

Waveform tone(double hz, const ComplementaryOptions& opts, Xorshift64Star& rng) {
    Waveform w;
    w.sample_rate = opts.source_rate;
    const auto n = static_cast<std::size_t>(opts.clip_seconds * opts.source_rate);
    w.samples.resize(n);
    const double amp = 0.3 + 0.2 * rng.uniform();
    const double f = hz * (0.97 + 0.06 * rng.uniform());
    const double phase = 2.0 * std::numbers::pi * rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / opts.source_rate;
        const double noise = 0.02 * (2.0 * rng.uniform() - 1.0);
        w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * f * t + phase) +
                       0.3 * amp * std::sin(4.0 * std::numbers::pi * f * t + phase) + noise;
    }
    return w;
}

}  // namespace

ComplementaryFixture write_complementary_corpus(const std::filesystem::path& dir, const ComplementaryOptions& opts) {
    std::filesystem::create_directories(dir / "audio");
    const auto& labels = complementary_labels();
    Xorshift64Star rng(opts.seed);

    // Both classes of a group share one sentence and one clip, so neither
    // modality carries any within-group cue and a stratified split keeps the
    // within-group class balance exact.
    constexpr std::size_t kTextVariants = 1;
    constexpr std::size_t kAudioVariants = 1;
    std::vector<std::vector<std::string>> sentences(2);
    std::vector<std::vector<Waveform>> clips(2);
    for (int g = 0; g < 2; ++g) {
        for (std::size_t v = 0; v < kTextVariants; ++v) {
            sentences[g].push_back(sentence(g == 0 ? kBrightWords : kDarkWords, rng));
        }
        for (std::size_t v = 0; v < kAudioVariants; ++v) {
            clips[g].push_back(tone(g == 0 ? 180.0 : 900.0, opts, rng));
        }
    }

    ComplementaryFixture fx;
    nlohmann::json doc;
    doc["labels"] = labels;
    doc["utterances"] = nlohmann::json::array();
    std::size_t serial = 0;
    for (std::size_t i = 0; i < opts.per_class; ++i) {
        for (std::size_t c = 0; c < labels.size(); ++c) {
            const int text_group = c < 2 ? 0 : 1;                  // {joy, surprise} | {sadness, anger}
            const int audio_group = (c == 0 || c == 2) ? 0 : 1;  // {joy, sadness} | {surprise, anger}
            char id[16];
            std::snprintf(id, sizeof(id), "u%04zu", serial);
            const std::string rel = "audio/" + std::string(id) + ".wav";
            write_wav_pcm16(clips[audio_group][(3 * i + 1) % kAudioVariants], dir / rel);
            doc["utterances"].push_back({{"id", id},
                                         {"conversation_id", "c" + std::to_string(serial / 8)},
                                         {"speaker", serial % 2 ? "Ross" : "Rachel"},
                                         {"text", sentences[text_group][i % kTextVariants]},
                                         {"audio", rel},
                                         {"label", labels[c]}});
            fx.text_group[id] = text_group;
            fx.audio_group[id] = audio_group;
            ++serial;
        }
    }
    fx.manifest = dir / "manifest.json";
    detail::write_text_file(fx.manifest, doc.dump(2) + "\n");
    return fx;
}

DenseFixture separable_clusters(std::size_t n_classes, std::size_t per_class, std::size_t dim, std::uint64_t seed) {
    Xorshift64Star rng(seed);
    DenseFixture fx;
    for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t c = 0; c < n_classes; ++c) {
            FeatureVector x(dim);
            for (auto& v : x) {
                v = rng.uniform() - 0.5;
            }
            x[c % dim] += 3.0;
            fx.features.push_back(std::move(x));
            fx.labels.push_back(c);
        }
    }
    return fx;
}

DenseFixture separable_two_class(std::size_t per_class, std::uint64_t seed) {
    Xorshift64Star rng(seed);
    DenseFixture fx;
    for (std::size_t i = 0; i < per_class; ++i) {
        for (LabelIndex c = 0; c < 2; ++c) {
            const double centre = c == 0 ? -2.0 : 2.0;
            fx.features.push_back({centre + rng.uniform() - 0.5, centre + rng.uniform() - 0.5});
            fx.labels.push_back(c);
        }
    }
    return fx;
}

}  // namespace ercfuse::synthetic
