#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ercfuse/corpus.hpp"
#include "ercfuse/rng.hpp"
#include "test_util.hpp"

using namespace ercfuse;
using doctest::Contains;

namespace {

Utterance utt(std::string id, std::optional<LabelIndex> label, std::string text = "hello",
              std::optional<std::string> audio = std::nullopt) {
    Utterance u;
    u.id = std::move(id);
    u.conversation_id = "c0";
    u.speaker = "s";
    u.text = std::move(text);
    u.audio_path = std::move(audio);
    u.label = label;
    return u;
}

// Corpus with counts[i] utterances of label i, ids "<label>-<k>".
Corpus histogram_corpus(const LabelSet& labels, const std::vector<std::size_t>& counts) {
    std::vector<Utterance> us;
    for (std::size_t l = 0; l < counts.size(); ++l) {
        for (std::size_t k = 0; k < counts[l]; ++k) {
            us.push_back(utt(labels.name(l) + "-" + std::to_string(k), l));
        }
    }
    return Corpus(labels, std::move(us));
}

std::size_t count_label(const Corpus& c, const std::set<std::string>& ids, LabelIndex l) {
    std::size_t n = 0;
    for (const auto& id : ids) {
        if (c.find(id)->label == l) {
            ++n;
        }
    }
    return n;
}

constexpr const char* kThree = R"({
  "labels": ["joy", "neutral"],
  "utterances": [
    {"id": "u1", "conversation_id": "c1", "speaker": "Ross", "text": "hi", "audio": null, "label": "joy"},
    {"id": "u2", "conversation_id": "c1", "speaker": "Rachel", "text": "hey", "audio": "a/u2.wav", "label": "neutral"},
    {"id": "u3", "conversation_id": "c1", "speaker": "Ross", "text": "so", "audio": null, "label": null}
  ]
})";

}  // namespace

TEST_CASE("xorshift64* stream matches an independently computed reference") {
    // Values produced by a separate big-integer implementation of the documented recurrence.
    Xorshift64Star a(0);
    CHECK(a.next() == 0x7bbcb40d550682d0ULL);
    CHECK(a.next() == 0xde7fe413d00cc9fdULL);
    CHECK(a.next() == 0xb3c638353c668c91ULL);
    Xorshift64Star b(42);
    CHECK(b.next() == 0x31b0ece7c4f697a2ULL);
    CHECK(b.next() == 0x9008a3b1cb686f03ULL);
    CHECK(b.next() == 0x7c7173abd97be16fULL);
}

TEST_CASE("xorshift64* bounded draws stay in range") {
    Xorshift64Star r(3);
    for (int i = 0; i < 1000; ++i) {
        CHECK(r.below(7) < 7);
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("label set lookups") {
    const auto d = LabelSet::defaults();
    CHECK(d.labels() == std::vector<std::string>{"anger", "disgust", "fear", "joy", "sadness", "surprise", "neutral"});
    CHECK(d.index("joy") == 3);
    CHECK_FALSE(d.contains("bliss"));
    CHECK_THROWS_WITH_AS(LabelSet({"a", "a"}), Contains("'a'"), Error);
    CHECK_THROWS_AS(LabelSet(std::vector<std::string>{}), Error);
}

TEST_CASE("load_manifest keeps order and header labels") {
    testutil::TempDir dir;
    testutil::write_file(dir / "m.json", kThree);
    const auto c = load_manifest(dir / "m.json");
    REQUIRE(c.size() == 3);
    CHECK(c.label_set().size() == 2);
    CHECK(c.utterances()[0].id == "u1");
    CHECK(c.utterances()[2].id == "u3");
    CHECK_FALSE(c.utterances()[2].label.has_value());
    CHECK(c.resolve_audio(c.utterances()[1]) == dir.path() / "a/u2.wav");
}

TEST_CASE("manifest errors name the culprit") {
    CHECK_THROWS_WITH_AS(parse_manifest(R"({"labels":["joy"],"utterances":[
        {"id":"u1","conversation_id":"c","speaker":"s","text":"a","audio":null,"label":"joy"},
        {"id":"u1","conversation_id":"c","speaker":"s","text":"b","audio":null,"label":"joy"}]})"),
                         Contains("u1"), ManifestError);
    CHECK_THROWS_WITH_AS(parse_manifest(R"({"labels":["joy"],"utterances":[
        {"id":"u7","conversation_id":"c","speaker":"s","text":"a","audio":null,"label":"bliss"}]})"),
                         Contains("bliss"), ManifestError);
    CHECK_THROWS_AS(parse_manifest("{\"labels\": [\"joy\"], \"utterances\": ["), ManifestError);
    CHECK_THROWS_AS(load_manifest("/nonexistent/manifest.json"), ManifestError);
}

TEST_CASE("validate_alignment counts") {
    testutil::TempDir dir;
    const LabelSet labels({"joy", "anger"});
    for (const char* name : {"a.wav", "b.wav", "c.wav", "d.wav"}) {
        testutil::write_file(dir / name, "RIFF");
    }

    SUBCASE("all aligned") {
        Corpus c(labels,
                 {utt("u1", 0, "x", "a.wav"), utt("u2", 1, "x", "b.wav"), utt("u3", 0, "x", "c.wav"),
                  utt("u4", 1, "x", "d.wav")},
                 dir.path());
        const auto r = validate_alignment(c);
        CHECK(r.total == 4);
        CHECK(r.fully_aligned == r.total);
        CHECK(r.issues.empty());
    }
    SUBCASE("one audio path absent") {
        Corpus c(labels,
                 {utt("u1", 0, "x", "a.wav"), utt("u2", 1, "x"), utt("u3", 0, "x", "c.wav"),
                  utt("u4", 1, "x", "d.wav")},
                 dir.path());
        const auto r = validate_alignment(c);
        CHECK(r.audio_missing_file == 1);
        CHECK(r.fully_aligned == 3);
        CHECK(r.text_only == 1);
        CHECK(r.audio_referenced_missing == 0);
        REQUIRE(r.issues.size() == 1);
        CHECK(r.issues[0].id == "u2");
    }
    SUBCASE("missing file and wrong extension") {
        testutil::write_file(dir / "e.mp3", "ID3");
        Corpus c(labels, {utt("u1", 0, "x", "zz.wav"), utt("u2", 1, "x", "e.mp3"), utt("u3", 0, "", "a.wav")},
                 dir.path());
        const auto r = validate_alignment(c);
        CHECK(r.audio_missing_file == 2);
        CHECK(r.audio_referenced_missing == 2);
        CHECK(r.empty_text == 1);
        CHECK(r.fully_aligned == 0);
    }
    SUBCASE("empty corpus") {
        const auto r = validate_alignment(Corpus(labels, {}));
        CHECK(r.total == 0);
        CHECK(r.fully_aligned == 0);
        CHECK(r.text_only == 0);
        CHECK(r.audio_missing_file == 0);
        CHECK(r.issues.empty());
    }
}

TEST_CASE("stratified_test_count rounding") {
    CHECK(stratified_test_count(10, 0.8) == 2);
    CHECK(stratified_test_count(5, 0.8) == 1);
    CHECK(stratified_test_count(5, 0.9) == 1);  // 0.5 rounds up
    CHECK(stratified_test_count(3, 0.5) == 2);  // 1.5 rounds up
    CHECK(stratified_test_count(1, 0.8) == 0);
    CHECK(stratified_test_count(0, 0.8) == 0);
}

TEST_CASE("stratified_split examples") {
    const LabelSet labels({"joy", "anger", "fear"});

    SUBCASE("exact divisibility") {
        const auto c = histogram_corpus(labels, {10, 10, 0});
        for (std::uint64_t seed : {0u, 1u, 99u}) {
            const auto s = stratified_split(c, 0.8, seed);
            CHECK(count_label(c, s.test_ids, 0) == 2);
            CHECK(count_label(c, s.test_ids, 1) == 2);
            CHECK(s.train_ids.size() == 16);
        }
    }
    SUBCASE("rounded count") {
        const auto c = histogram_corpus(labels, {0, 0, 5});
        CHECK(stratified_split(c, 0.8, 3).test_ids.size() == 1);
    }
    SUBCASE("seeds permute membership, not counts") {
        const auto c = histogram_corpus(labels, {10, 10, 5});
        const auto s1 = stratified_split(c, 0.8, 1);
        const auto s2 = stratified_split(c, 0.8, 2);
        for (LabelIndex l = 0; l < 3; ++l) {
            CHECK(count_label(c, s1.test_ids, l) == count_label(c, s2.test_ids, l));
        }
        CHECK(s1.test_ids != s2.test_ids);
        CHECK(stratified_split(c, 0.8, 1) == s1);
    }
    SUBCASE("preconditions") {
        Corpus c(labels, {utt("u1", 0), utt("u2", std::nullopt)});
        CHECK_THROWS_WITH_AS(stratified_split(c, 0.8, 1), Contains("u2"), Error);
        const auto ok = histogram_corpus(labels, {3, 3, 3});
        CHECK_THROWS_AS(stratified_split(ok, 0.0, 1), Error);
        CHECK_THROWS_AS(stratified_split(ok, 1.0, 1), Error);
    }
}

TEST_CASE("split partition and stratification over random histograms") {
    Xorshift64Star rng(2024);
    const auto labels = LabelSet::defaults();
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::size_t> counts(labels.size());
        for (auto& n : counts) {
            n = rng.below(25);
        }
        const double ratio = 0.05 + 0.9 * rng.uniform();
        const auto c = histogram_corpus(labels, counts);
        const auto s = stratified_split(c, ratio, rng.next());

        std::set<std::string> both;
        std::set_intersection(s.train_ids.begin(), s.train_ids.end(), s.test_ids.begin(), s.test_ids.end(),
                              std::inserter(both, both.end()));
        CHECK(both.empty());
        CHECK(s.train_ids.size() + s.test_ids.size() == c.size());
        for (LabelIndex l = 0; l < labels.size(); ++l) {
            // Oracle: round-half-up of count * (1 - ratio).
            const auto expected = static_cast<std::size_t>(std::floor(counts[l] * (1.0 - ratio) + 0.5));
            const auto got = count_label(c, s.test_ids, l);
            CHECK(got <= expected + 1);
            CHECK(got + 1 >= expected);
            CHECK(got == stratified_test_count(counts[l], ratio));
        }
    }
}

TEST_CASE("label_histogram") {
    const LabelSet labels({"joy", "neutral"});
    CHECK(label_histogram(Corpus(labels, {})).empty());
    Corpus c(labels, {utt("a", 0), utt("b", 0), utt("c", 0), utt("d", 1)});
    CHECK(label_histogram(c) == std::map<std::string, std::size_t>{{"joy", 3}, {"neutral", 1}});

    const auto big = histogram_corpus(LabelSet({"joy", "neutral", "fear"}), {9, 4, 7});
    const auto s = stratified_split(big, 0.7, 5);
    auto train = label_histogram(big.subset(s.train_ids));
    for (const auto& [k, v] : label_histogram(big.subset(s.test_ids))) {
        train[k] += v;
    }
    CHECK(train == label_histogram(big));
}

TEST_CASE("split JSON round trip") {
    const auto c = histogram_corpus(LabelSet({"joy", "neutral"}), {6, 4});
    const auto s = stratified_split(c, 0.75, 11);
    const auto text = split_to_json(s);
    CHECK(split_from_json(text) == s);
    CHECK(split_to_json(split_from_json(text)) == text);
    CHECK_THROWS_AS(split_from_json(R"({"format":"other/9"})"), SchemaError);

    testutil::TempDir dir;
    write_split(s, dir / "s.json");
    CHECK(read_split(dir / "s.json") == s);
}
