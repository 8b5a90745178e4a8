#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "memaudit/canary.hpp"
#include "memaudit/rng.hpp"
#include "testutil.hpp"

using namespace memaudit;

TEST_CASE("parse_format: nine digit holes, |R| = 10^9") {
    FormatSequence format = parse_format("The random number is {d}{d}{d}{d}{d}{d}{d}{d}{d}");
    CHECK(format.hole_count() == 9);
    for (const auto& hole : format.holes()) {
        CHECK(hole.kind == HoleSpec::Kind::Digit);
        CHECK(hole.alphabet.size() == 10);
    }
    const BigCount space = space_size(format);
    CHECK(space == BigCount(1'000'000'000ULL));
    CHECK(space.log2() == doctest::Approx(9.0 * std::log2(10.0)).epsilon(1e-12));
}

TEST_CASE("parse_format: SSN shape with literal dashes") {
    FormatSequence format = parse_format("{d}{d}{d}-{d}{d}-{d}{d}{d}{d}");
    CHECK(format.hole_count() == 9);
    Randomness r = {0, 7, 8, 0, 5, 1, 1, 2, 0};
    CHECK(instantiate(format, r) == "078-05-1120");
}

TEST_CASE("parse_format: single hole") {
    FormatSequence format = parse_format("x{d}");
    CHECK(format.hole_count() == 1);
    CHECK(space_size(format) == BigCount(10));
}

TEST_CASE("space_size: product law and letter holes") {
    CHECK(space_size(parse_format("{l}")) == BigCount(26));
    CHECK(space_size(parse_format("{d}{d}{l}")) == BigCount(2600));
    AlphabetRegistry custom;
    custom["bit"] = {"0", "1"};
    CHECK(space_size(parse_format("{c:bit}{c:bit}{c:bit}", custom)) == BigCount(8));
}

TEST_CASE("space_size: word alphabets push |R| past 64 bits") {
    AlphabetRegistry custom;
    std::vector<std::string> words;
    for (int i = 0; i < 100000; ++i) words.push_back("w" + std::to_string(i));
    custom["big"] = words;
    // (10^5)^4 = 10^20 > 2^64
    FormatSequence format =
        parse_format("{c:big} {c:big} {c:big} {c:big}", custom);
    const BigCount space = space_size(format);
    CHECK(!space.fits_u64());
    CHECK(space.to_string() == "100000000000000000000");
    CHECK(space.log2() == doctest::Approx(20.0 * std::log2(10.0)).epsilon(1e-12));
    CHECK_THROWS_AS(enumerable_size(format), SpaceTooLarge);
}

TEST_CASE("render_format round-trips every grammar feature") {
    AlphabetRegistry custom;
    custom["hex"] = {"0", "1", "2", "3", "4", "5", "6", "7",
                     "8", "9", "a", "b", "c", "d", "e", "f"};
    const std::string specs[] = {
        "x{d}",
        "The random number is {d}{d}{d}",
        "{{literal braces}} {l}",
        "key={c:hex}{c:hex}",
        "a}}b{{c {d}",
    };
    for (const auto& spec : specs) {
        CHECK(render_format(parse_format(spec, custom)) == spec);
    }
}

TEST_CASE("parse_format: error cases") {
    CHECK_THROWS_AS(parse_format(""), FormatError);
    CHECK_THROWS_AS(parse_format("no holes here"), FormatError);
    CHECK_THROWS_AS(parse_format("{q}"), FormatError);       // unknown class
    CHECK_THROWS_AS(parse_format("{d"), FormatError);        // unterminated
    CHECK_THROWS_AS(parse_format("}{d}"), FormatError);      // bare closing brace
    CHECK_THROWS_AS(parse_format("{c:nope}"), FormatError);  // unknown alphabet
    AlphabetRegistry custom;
    custom["empty"] = {};
    CHECK_THROWS_AS(parse_format("{c:empty}", custom), FormatError);
    custom["one"] = {"z"};
    // |R| = 1 is not a randomness space
    CHECK_THROWS_AS(parse_format("{c:one}", custom), FormatError);
    // length cap: 3 literals + 1 hole > 3
    CHECK_THROWS_AS(parse_format("abc{d}", {}, 3), FormatError);
    CHECK_NOTHROW(parse_format("abc{d}", {}, 4));
}

TEST_CASE("instantiate: fills holes in order") {
    FormatSequence format = parse_format("n={d}");
    CHECK(instantiate(format, {7}) == "n=7");
    CHECK(instantiate(format, {0}) == "n=0");
    FormatSequence letters = parse_format("{l}{l}");
    CHECK(instantiate(letters, {0, 25}) == "az");
    CHECK_THROWS_AS(instantiate(format, {}), FormatError);       // wrong arity
    CHECK_THROWS_AS(instantiate(format, {10}), FormatError);     // outside alphabet
    CHECK_THROWS_AS(instantiate(format, {1, 1}), FormatError);   // too many entries
}

TEST_CASE("enumerate_all: 100 two-digit instances, lexicographic") {
    FormatSequence format = parse_format("{d}{d}");
    auto all = enumerate_all(format);
    REQUIRE(all.size() == 100);
    CHECK(all.front().text == "00");
    CHECK(all.back().text == "99");
    CHECK(all[42].text == "42"); // index equals the printed number

    std::set<std::string> distinct;
    for (const auto& inst : all) distinct.insert(inst.text);
    CHECK(distinct.size() == 100);

    // instance_at agrees with the enumerated stream.
    for (std::uint64_t i = 0; i < all.size(); ++i) {
        CHECK(instance_at(format, i).text == all[i].text);
        CHECK(index_of(format, all[i].r) == i);
    }
}

TEST_CASE("randomness_at and index_of are inverse bijections") {
    AlphabetRegistry custom;
    custom["tri"] = {"x", "y", "z"};
    FormatSequence format = parse_format("{d}{c:tri}{l}", custom);
    const std::uint64_t n = enumerable_size(format);
    CHECK(n == 10 * 3 * 26);
    std::set<std::string> seen;
    for (std::uint64_t i = 0; i < n; ++i) {
        Randomness r = randomness_at(format, i);
        CHECK(index_of(format, r) == i);
        seen.insert(instantiate(format, r));
    }
    CHECK(seen.size() == n); // no duplicates
    CHECK_THROWS_AS(randomness_at(format, n), FormatError);

    // Leftmost hole is the slowest-moving one.
    CHECK(randomness_at(format, 0) == Randomness{0, 0, 0});
    CHECK(randomness_at(format, 1) == Randomness{0, 0, 1});
    CHECK(randomness_at(format, 26) == Randomness{0, 1, 0});
    CHECK(randomness_at(format, n - 1) == Randomness{9, 2, 25});
}

TEST_CASE("sample_randomness: deterministic per seed, valid entries") {
    FormatSequence format = parse_format("{d}{l}{d}");
    Rng a(42), b(42), c(43);
    bool any_diff = false;
    for (int i = 0; i < 100; ++i) {
        Randomness ra = sample_randomness(format, a);
        Randomness rb = sample_randomness(format, b);
        Randomness rc = sample_randomness(format, c);
        CHECK(ra == rb);
        any_diff = any_diff || (ra != rc);
        REQUIRE(ra.size() == 3);
        CHECK(ra[0] < 10);
        CHECK(ra[1] < 26);
        CHECK(ra[2] < 10);
    }
    CHECK(any_diff);
}

TEST_CASE("sample_randomness: single digit hole is uniform within 5 sigma") {
    FormatSequence format = parse_format("v{d}");
    Rng rng(7);
    const std::size_t m = 100000;
    std::vector<std::size_t> freq(10, 0);
    for (std::size_t i = 0; i < m; ++i) ++freq[sample_randomness(format, rng)[0]];
    const double expected = m / 10.0;
    const double sigma = std::sqrt(m * 0.1 * 0.9);
    for (std::size_t v = 0; v < 10; ++v) {
        CHECK(std::fabs(static_cast<double>(freq[v]) - expected) < 5.0 * sigma);
    }
}

TEST_CASE("token_strings: char and word tokenizers") {
    FormatSequence format = parse_format("n={d}");
    auto chars = token_strings(format, {7}, TokenizerKind::Char);
    CHECK(chars == std::vector<std::string>{"n", "=", "7"});

    FormatSequence words = parse_format("code {d} end");
    auto toks = token_strings(words, {3}, TokenizerKind::Word);
    CHECK(toks == std::vector<std::string>{"code", " ", "3", " ", "end"});
}

TEST_CASE("extend_vocabulary makes every instance scorable") {
    FormatSequence format = parse_format("pin {d}{l}");
    auto [vocab, corpus] = tokenize("some corpus text without digits");
    extend_vocabulary(vocab, format, TokenizerKind::Char);
    for (const auto& inst : enumerate_all(format)) {
        for (char ch : inst.text) {
            CHECK(vocab.contains(std::string(1, ch)));
        }
    }
}

TEST_CASE("BoundFormat: template, positions, alphabets, fill") {
    FormatSequence format = parse_format("n={d}{d}");
    Vocabulary vocab;
    extend_vocabulary(vocab, format, TokenizerKind::Char);
    BoundFormat bound(format, vocab, TokenizerKind::Char);

    REQUIRE(bound.token_length() == 4);
    CHECK(bound.template_tokens()[0] == vocab.id_of("n"));
    CHECK(bound.template_tokens()[1] == vocab.id_of("="));
    CHECK(bound.template_tokens()[2] == BoundFormat::kHoleSlot);
    CHECK(bound.template_tokens()[3] == BoundFormat::kHoleSlot);
    CHECK(bound.hole_positions() == std::vector<std::size_t>{2, 3});
    REQUIRE(bound.hole_alphabets().size() == 2);
    CHECK(bound.hole_alphabets()[0].size() == 10);

    std::vector<TokenId> tokens = bound.tokens_for({4, 2});
    CHECK(vocab.token(tokens[2]) == "4");
    CHECK(vocab.token(tokens[3]) == "2");
    CHECK(detokenize(vocab, tokens) == "n=42");

    CHECK_THROWS_AS(bound.tokens_for({1}), FormatError);      // arity
    CHECK_THROWS_AS(bound.tokens_for({1, 10}), FormatError);  // out of alphabet
}

TEST_CASE("BoundFormat: word mode needs whitespace-delimited holes") {
    AlphabetRegistry custom;
    custom["w"] = {"alpha", "beta"};
    auto [vocab, corpus] = tokenize("alpha beta filler", TokenizerKind::Word);

    FormatSequence ok = parse_format("key {c:w} end", custom);
    extend_vocabulary(vocab, ok, TokenizerKind::Word);
    BoundFormat bound(ok, vocab, TokenizerKind::Word);
    CHECK(bound.token_length() == 5); // key, space, hole, space, end
    CHECK(detokenize(vocab, bound.tokens_for({1})) == "key beta end");

    // Hole glued to a literal: "keyalpha" tokenizes as one word, which
    // cannot match the two-piece template.
    FormatSequence glued = parse_format("key{c:w}", custom);
    Vocabulary v2 = vocab;
    extend_vocabulary(v2, glued, TokenizerKind::Word);
    CHECK_THROWS_AS(BoundFormat(glued, v2, TokenizerKind::Word), FormatError);

    // Multi-character symbols are fine in word mode but not char mode.
    FormatSequence spaced = parse_format("key {c:w}", custom);
    Vocabulary v3 = vocab;
    extend_vocabulary(v3, spaced, TokenizerKind::Char);
    CHECK_THROWS_AS(BoundFormat(spaced, v3, TokenizerKind::Char), FormatError);
}

TEST_CASE("BoundFormat: enumeration helpers used by the oracles agree") {
    FormatSequence format = parse_format("{d}-{l}");
    Vocabulary vocab;
    extend_vocabulary(vocab, format, TokenizerKind::Char);
    BoundFormat bound(format, vocab, TokenizerKind::Char);
    CHECK(testutil::space_u64(bound) == 260);
    for (std::uint64_t i : {0ULL, 1ULL, 37ULL, 259ULL}) {
        CHECK(testutil::decode_index(bound, i) == randomness_at(format, i));
    }
}
