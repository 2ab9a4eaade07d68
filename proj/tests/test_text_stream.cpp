#include <doctest.h>

#include "simulmt/det_rand.hpp"
#include "simulmt/error.hpp"
#include "simulmt/text_stream.hpp"
#include "test_util.hpp"

using namespace simulmt;
using test_util::toks;

TEST_CASE("tokenize_source splits on whitespace") {
    CHECK(tokenize_source("Hello world") == std::vector<std::string>{"Hello", "world"});
    CHECK(tokenize_source("a  b\tc") == std::vector<std::string>{"a", "b", "c"});
    CHECK(tokenize_source("日本語 テスト") ==
          std::vector<std::string>{"日本語", "テスト"});
    CHECK(tokenize_source("  padded \n") == std::vector<std::string>{"padded"});
    // U+3000 ideographic space separates too.
    CHECK(tokenize_source("a\xe3\x80\x80z") == std::vector<std::string>{"a", "z"});
}

TEST_CASE("tokenize_source rejects whitespace-only input") {
    CHECK_THROWS_AS(tokenize_source(""), InvalidInputError);
    CHECK_THROWS_AS(tokenize_source("   \t\n"), InvalidInputError);
}

TEST_CASE("tokenize_source is idempotent up to whitespace normalization") {
    DetRng rng(42);
    const std::string alphabet = "ab \tc  d\n";
    for (int trial = 0; trial < 200; ++trial) {
        std::string s;
        const auto len = uniform_below(rng, 30);
        for (std::uint64_t i = 0; i < len; ++i) {
            s += alphabet[static_cast<std::size_t>(uniform_below(rng, alphabet.size()))];
        }
        std::vector<std::string> first;
        try {
            first = tokenize_source(s);
        } catch (const InvalidInputError&) {
            continue;
        }
        std::string joined;
        for (std::size_t i = 0; i < first.size(); ++i) {
            if (i > 0) joined += ' ';
            joined += first[i];
        }
        CHECK(tokenize_source(joined) == first);
    }
}

TEST_CASE("SourceStream reveals monotonically") {
    SourceStream s = SourceStream::from_sentence("a b c");
    CHECK(s.cursor() == 0);
    CHECK(s.total() == 3);
    CHECK_FALSE(s.finished());

    CHECK(s.reveal() == 1);
    const auto seen = std::vector<std::string>(s.revealed().begin(), s.revealed().end());
    CHECK(seen == std::vector<std::string>{"a"});

    CHECK(s.reveal() == 2);
    CHECK(s.reveal() == 3);
    CHECK(s.finished());
    CHECK(s.revealed_text() == "a b c");
    // The earlier prefix was not disturbed by later reveals.
    CHECK(s.revealed()[0] == "a");
    CHECK_THROWS_AS(s.reveal(), InvalidInputError);
}

TEST_CASE("detokenize handles the three joining styles") {
    const JoiningConvention bare{JoiningConvention::Style::continuation_marker, ""};
    const JoiningConvention sharp{JoiningConvention::Style::continuation_marker, "##"};
    const JoiningConvention sp{JoiningConvention::Style::preceding_space_marker, "▁"};
    const JoiningConvention bytes{JoiningConvention::Style::byte_level, ""};

    CHECK(detokenize(toks({}), sp).empty());
    CHECK(detokenize(toks({"Hal", "lo"}), bare) == "Hallo");
    CHECK(detokenize(toks({"Hallo"}, true), sp) == "Hallo");

    CHECK(detokenize(toks({"Hal", "##lo", "Welt"}), sharp) == "Hallo Welt");
    CHECK(detokenize(toks({"▁Das", "▁Wetter"}), sp) == "Das Wetter");
    CHECK(detokenize(toks({"▁Wet", "ter"}), sp) == "Wetter");
    CHECK(detokenize(toks({"Hel", "lo wor", "ld"}), bytes) == "Hello world");
}

TEST_CASE("detokenize_append preserves the prefix property") {
    const JoiningConvention convs[] = {
        {JoiningConvention::Style::continuation_marker, "##"},
        {JoiningConvention::Style::preceding_space_marker, "▁"},
        {JoiningConvention::Style::byte_level, ""},
    };
    DetRng rng(7);
    const std::vector<std::string> pieces = {"▁a", "▁bb", "c", "##d", "e f", "▁", "##"};
    for (const auto& conv : convs) {
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<TargetToken> tokens;
            const auto len = 1 + uniform_below(rng, 8);
            for (std::uint64_t i = 0; i < len; ++i) {
                tokens.push_back(
                    {pieces[static_cast<std::size_t>(uniform_below(rng, pieces.size()))],
                     false});
            }
            const std::string full = detokenize(tokens, conv);
            for (std::size_t cut = 0; cut <= tokens.size(); ++cut) {
                const std::string head =
                    detokenize(std::span(tokens.data(), cut), conv);
                CHECK(full.substr(0, head.size()) == head);
            }
        }
    }
}

TEST_CASE("word_spans and count_words agree") {
    CHECK(word_spans("").empty());
    CHECK(count_words("one two  three") == 3);
    const auto spans = word_spans(" ab  cd ");
    REQUIRE(spans.size() == 2);
    CHECK(spans[0] == std::pair<std::size_t, std::size_t>{1, 3});
    CHECK(spans[1] == std::pair<std::size_t, std::size_t>{5, 7});
}

TEST_CASE("JoiningConvention parses style descriptors") {
    const auto sp = JoiningConvention::parse("preceding-space-marker");
    CHECK(sp.style == JoiningConvention::Style::preceding_space_marker);
    CHECK(sp.marker == "▁");

    const auto cm = JoiningConvention::parse("continuation-marker:##");
    CHECK(cm.style == JoiningConvention::Style::continuation_marker);
    CHECK(cm.marker == "##");

    const auto bare = JoiningConvention::parse("continuation-marker");
    CHECK(bare.marker.empty());

    CHECK(JoiningConvention::parse("byte-level").style ==
          JoiningConvention::Style::byte_level);
    CHECK_THROWS_AS(JoiningConvention::parse("byte-level:x"), InvalidInputError);
    CHECK_THROWS_AS(JoiningConvention::parse("unknown-style"), InvalidInputError);
}

TEST_CASE("load_corpus_tsv reads source<TAB>target lines") {
    const auto pairs = load_corpus_tsv(test_util::fixture_path("toy.tsv"));
    REQUIRE(pairs.size() == 3);
    CHECK(pairs[0].source == "The weather is very nice in Berlin this week");
    CHECK(pairs[0].target == "Das Wetter ist diese Woche sehr schön in Berlin");
    CHECK(pairs[2].target == "Bitte öffne jetzt das Fenster");
}

TEST_CASE("load_corpus_tsv rejects malformed lines with their number") {
    test_util::TempDir tmp;

    const auto one_field = tmp.file("one.tsv");
    test_util::write_file(one_field, "no tabs here\n");
    CHECK_THROWS_WITH_AS(load_corpus_tsv(one_field),
                         doctest::Contains(":1:"), IoError);

    const auto three_fields = tmp.file("three.tsv");
    test_util::write_file(three_fields, "a\tb\nx\ty\tz\n");
    CHECK_THROWS_WITH_AS(load_corpus_tsv(three_fields),
                         doctest::Contains(":2:"), IoError);

    const auto empty_target = tmp.file("empty.tsv");
    test_util::write_file(empty_target, "src\t \n");
    CHECK_THROWS_AS(load_corpus_tsv(empty_target), IoError);

    CHECK_THROWS_AS(load_corpus_tsv(tmp.file("missing.tsv")), IoError);
}
