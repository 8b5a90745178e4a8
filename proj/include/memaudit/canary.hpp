#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "memaudit/bigcount.hpp"
#include "memaudit/errors.hpp"
#include "memaudit/rng.hpp"
#include "memaudit/vocab.hpp"

namespace memaudit {

/// One typed hole of a format. The alphabet lists the choosable symbols in
/// enumeration order; each symbol becomes a single token once bound.
struct HoleSpec {
    enum class Kind { Digit, Lower, Custom };
    Kind kind = Kind::Digit;
    std::string name;                  // "d", "l", or the custom alphabet's name
    std::vector<std::string> alphabet; // non-empty
};

struct FormatElement {
    enum class Kind { Literal, Hole };
    Kind kind = Kind::Literal;
    std::string literal;  // Literal: raw (unescaped) text
    std::size_t hole = 0; // Hole: index into FormatSequence::holes()
};

/// A choice of symbol for every hole, as alphabet indices. This is the
/// randomness r; it is in exact bijection with [0, |R|).
using Randomness = std::vector<std::uint32_t>;

/// Named custom alphabets referenced by `{c:NAME}` holes.
using AlphabetRegistry = std::map<std::string, std::vector<std::string>>;

/// A canary template: literal runs interleaved with typed holes.
class FormatSequence {
public:
    const std::vector<FormatElement>& elements() const { return elements_; }
    const std::vector<HoleSpec>& holes() const { return holes_; }
    std::size_t hole_count() const { return holes_.size(); }

private:
    friend FormatSequence parse_format(const std::string&, const AlphabetRegistry&, std::size_t);

    std::vector<FormatElement> elements_;
    std::vector<HoleSpec> holes_;
};

inline constexpr std::uint64_t kDefaultEnumerationCap = 100'000'000;

/// Grammar: literal text with `{{` / `}}` escapes for braces, `{d}` digit
/// hole (0-9), `{l}` lowercase-letter hole (a-z), `{c:NAME}` hole over the
/// named custom alphabet. Throws FormatError on empty input, zero holes,
/// bare braces, unknown hole classes or alphabet names, or when the hole
/// count plus literal length exceeds `max_length`.
FormatSequence parse_format(const std::string& spec, const AlphabetRegistry& custom = {},
                            std::size_t max_length = 4096);

/// Inverse of parse_format: render_format(parse_format(s)) == s.
std::string render_format(const FormatSequence& format);

/// |R|: exact product of the hole alphabet sizes.
BigCount space_size(const FormatSequence& format);

/// Fills the holes: the concrete canary text s[r].
std::string instantiate(const FormatSequence& format, const Randomness& r);

/// Uniform draw from R.
Randomness sample_randomness(const FormatSequence& format, Rng& rng);

/// Enumeration order is lexicographic on the hole tuple, leftmost hole
/// slowest: index 0 picks every hole's first symbol, index |R|-1 every
/// hole's last.
Randomness randomness_at(const FormatSequence& format, std::uint64_t index);
std::uint64_t index_of(const FormatSequence& format, const Randomness& r);

/// |R| as a uint64 when it is at most `cap`; throws SpaceTooLarge otherwise.
std::uint64_t enumerable_size(const FormatSequence& format,
                              std::uint64_t cap = kDefaultEnumerationCap);

struct CanaryInstance {
    Randomness r;
    std::string text; // instantiate(format, r)
};

CanaryInstance instance_at(const FormatSequence& format, std::uint64_t index);

/// All |R| instances in enumeration order. Intended for small spaces;
/// throws SpaceTooLarge beyond `cap`.
std::vector<CanaryInstance> enumerate_all(const FormatSequence& format,
                                          std::uint64_t cap = kDefaultEnumerationCap);

/// The canary as tokenizer-level token strings (the form insert_canary
/// consumes).
std::vector<std::string> token_strings(const FormatSequence& format, const Randomness& r,
                                       TokenizerKind tokenizer);

/// Adds every token the format can produce (all literal tokens and every
/// alphabet symbol) to the vocabulary, so any s[r] is scorable.
void extend_vocabulary(Vocabulary& vocab, const FormatSequence& format, TokenizerKind tokenizer);

/// A format bound to a vocabulary: the fixed token template with one slot
/// per hole, plus per-hole token-id alphabets. This is the shape scoring
/// and extraction operate on. Binding requires every hole to occupy
/// exactly one token (char mode: single-character symbols; word mode:
/// whitespace-delimited symbols), verified against the tokenizer.
class BoundFormat {
public:
    static constexpr TokenId kHoleSlot = 0xfffffffdu;

    BoundFormat(const FormatSequence& format, const Vocabulary& vocab, TokenizerKind tokenizer);

    std::size_t token_length() const { return template_.size(); }
    const std::vector<TokenId>& template_tokens() const { return template_; }
    const std::vector<std::size_t>& hole_positions() const { return positions_; }
    const std::vector<std::vector<TokenId>>& hole_alphabets() const { return alphabets_; }

    /// Writes the full token sequence for r into out (size token_length()).
    void fill(const Randomness& r, std::span<TokenId> out) const;
    std::vector<TokenId> tokens_for(const Randomness& r) const;

private:
    std::vector<TokenId> template_;               // kHoleSlot marks holes
    std::vector<std::size_t> positions_;          // template index per hole
    std::vector<std::vector<TokenId>> alphabets_; // token ids per hole symbol
};

} // namespace memaudit
