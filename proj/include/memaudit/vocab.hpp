#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "memaudit/errors.hpp"
#include "memaudit/rng.hpp"

namespace memaudit {

using TokenId = std::uint32_t;

enum class TokenizerKind { Char, Word };

/// Ordered set of distinct tokens. Ids are assigned in first-appearance
/// order and are stable for a given corpus + tokenizer.
class Vocabulary {
public:
    std::size_t size() const { return tokens_.size(); }

    const std::string& token(TokenId id) const { return tokens_.at(id); }

    bool contains(std::string_view tok) const { return ids_.count(std::string(tok)) > 0; }

    TokenId id_of(std::string_view tok) const {
        auto it = ids_.find(std::string(tok));
        if (it == ids_.end()) throw InvalidToken("unknown token: '" + std::string(tok) + "'");
        return it->second;
    }

    /// Returns the id, adding the token if new.
    TokenId add(std::string_view tok) {
        auto it = ids_.find(std::string(tok));
        if (it != ids_.end()) return it->second;
        const TokenId id = static_cast<TokenId>(tokens_.size());
        tokens_.emplace_back(tok);
        ids_.emplace(std::string(tok), id);
        return id;
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

/// Token-id sequence plus a content digest of the originating text.
struct Corpus {
    std::vector<TokenId> sequence;
    std::uint64_t source_hash = 0;

    std::size_t size() const { return sequence.size(); }
};

/// FNV-1a, used as the corpus content digest.
std::uint64_t fnv1a(std::string_view data);

/// Splits text into tokens. Char mode: one token per byte (exact round
/// trip for any input). Word mode: maximal runs of non-whitespace and of
/// whitespace alternate as tokens, which also round-trips exactly.
std::pair<Vocabulary, Corpus> tokenize(std::string_view text, TokenizerKind kind = TokenizerKind::Char);

/// Tokenizes against an existing vocabulary, extending it as needed.
Corpus tokenize_with(Vocabulary& vocab, std::string_view text, TokenizerKind kind = TokenizerKind::Char);

std::string detokenize(const Vocabulary& vocab, std::span<const TokenId> sequence);

struct Placement {
    enum class Kind { FixedOffset, UniformRandom } kind = Kind::UniformRandom;
    std::size_t offset = 0;     // FixedOffset: position of the first copy
    std::uint64_t seed = 0;     // UniformRandom
};

/// Splices `count` non-overlapping copies of the canary into the corpus.
/// The vocabulary is extended with any unseen canary tokens. Verifies the
/// postcondition that the result contains exactly `count` occurrences of
/// the canary as a subsequence run (throws InsertionFailure otherwise,
/// e.g. when the corpus already contains the canary).
Corpus insert_canary(const Corpus& corpus, Vocabulary& vocab,
                     const std::vector<std::string>& canary_tokens,
                     std::size_t count, const Placement& placement);

/// Number of (possibly overlapping) occurrences of `needle` in `haystack`.
std::size_t count_occurrences(std::span<const TokenId> haystack, std::span<const TokenId> needle);

} // namespace memaudit
