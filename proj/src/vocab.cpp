#include "memaudit/vocab.hpp"

#include <algorithm>
#include <cctype>

namespace memaudit {

std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

Corpus tokenize_impl(Vocabulary& vocab, std::string_view text, TokenizerKind kind) {
    Corpus corpus;
    corpus.source_hash = fnv1a(text);
    if (kind == TokenizerKind::Char) {
        corpus.sequence.reserve(text.size());
        for (char c : text) {
            corpus.sequence.push_back(vocab.add(std::string_view(&c, 1)));
        }
    } else {
        std::size_t i = 0;
        const auto is_ws = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
        while (i < text.size()) {
            const bool ws = is_ws(text[i]);
            std::size_t j = i;
            while (j < text.size() && is_ws(text[j]) == ws) ++j;
            corpus.sequence.push_back(vocab.add(text.substr(i, j - i)));
            i = j;
        }
    }
    return corpus;
}

} // namespace

std::pair<Vocabulary, Corpus> tokenize(std::string_view text, TokenizerKind kind) {
    if (text.empty()) throw InvalidCorpus("tokenize: empty input text");
    Vocabulary vocab;
    Corpus corpus = tokenize_impl(vocab, text, kind);
    return {std::move(vocab), std::move(corpus)};
}

Corpus tokenize_with(Vocabulary& vocab, std::string_view text, TokenizerKind kind) {
    if (text.empty()) throw InvalidCorpus("tokenize: empty input text");
    return tokenize_impl(vocab, text, kind);
}

std::string detokenize(const Vocabulary& vocab, std::span<const TokenId> sequence) {
    std::string out;
    for (TokenId id : sequence) out += vocab.token(id);
    return out;
}

std::size_t count_occurrences(std::span<const TokenId> haystack, std::span<const TokenId> needle) {
    if (needle.empty() || haystack.size() < needle.size()) return 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        if (std::equal(needle.begin(), needle.end(), haystack.begin() + static_cast<std::ptrdiff_t>(i))) {
            ++count;
        }
    }
    return count;
}

Corpus insert_canary(const Corpus& corpus, Vocabulary& vocab,
                     const std::vector<std::string>& canary_tokens,
                     std::size_t count, const Placement& placement) {
    if (count < 1) throw InsertionFailure("insert_canary: count must be >= 1");
    if (canary_tokens.empty()) throw InsertionFailure("insert_canary: empty canary");

    std::vector<TokenId> canary_ids;
    canary_ids.reserve(canary_tokens.size());
    for (const auto& tok : canary_tokens) canary_ids.push_back(vocab.add(tok));

    // Insertion points in original-corpus coordinates, ascending.
    std::vector<std::size_t> points;
    points.reserve(count);
    const std::size_t n = corpus.sequence.size();
    if (placement.kind == Placement::Kind::FixedOffset) {
        if (placement.offset > n) {
            throw InsertionFailure("insert_canary: fixed offset beyond corpus end");
        }
        // First copy at the requested offset, remaining copies spread
        // evenly over the rest of the corpus.
        points.push_back(placement.offset);
        if (count > 1) {
            const std::size_t remaining = n - placement.offset;
            if (remaining < count - 1) {
                throw InsertionFailure("insert_canary: corpus too short for requested copies");
            }
            for (std::size_t j = 1; j < count; ++j) {
                points.push_back(placement.offset + j * remaining / count);
            }
        }
    } else {
        Rng rng(placement.seed);
        for (std::size_t j = 0; j < count; ++j) {
            points.push_back(static_cast<std::size_t>(rng.next_below(n + 1)));
        }
        std::sort(points.begin(), points.end());
    }

    Corpus out;
    out.sequence.reserve(n + count * canary_ids.size());
    std::size_t next = 0;
    for (std::size_t i = 0; i <= n; ++i) {
        while (next < points.size() && points[next] == i) {
            out.sequence.insert(out.sequence.end(), canary_ids.begin(), canary_ids.end());
            ++next;
        }
        if (i < n) out.sequence.push_back(corpus.sequence[i]);
    }
    out.source_hash = mix_seed(corpus.source_hash, fnv1a(std::string_view(
        reinterpret_cast<const char*>(out.sequence.data()), out.sequence.size() * sizeof(TokenId))));

    const std::size_t found = count_occurrences(out.sequence, canary_ids);
    if (found != count) {
        throw InsertionFailure("insert_canary: expected " + std::to_string(count) +
                               " occurrences after insertion, found " + std::to_string(found));
    }
    return out;
}

} // namespace memaudit
