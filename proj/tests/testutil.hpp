#pragma once

// Shared fixtures for the test suite: synthetic oracles with hash-derived
// probabilities, a plantable "memorized" target, and independent
// brute-force reference implementations (enumeration + sort) that the
// library's streamed/searched answers are checked against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "memaudit/canary.hpp"
#include "memaudit/model.hpp"
#include "memaudit/perplexity.hpp"
#include "memaudit/rng.hpp"
#include "memaudit/vocab.hpp"

namespace testutil {

using namespace memaudit;

inline Vocabulary letters_vocab(std::size_t n) {
    Vocabulary vocab;
    for (std::size_t i = 0; i < n; ++i) vocab.add(std::string(1, static_cast<char>('a' + i)));
    return vocab;
}

inline Vocabulary digits_and_letters_vocab() {
    Vocabulary vocab;
    for (char c = '0'; c <= '9'; ++c) vocab.add(std::string(1, c));
    for (char c = 'a'; c <= 'z'; ++c) vocab.add(std::string(1, c));
    vocab.add(" ");
    vocab.add("-");
    vocab.add("=");
    return vocab;
}

/// Deterministic prefix-sensitive model: the next-token distribution is a
/// pure hash of (salt, prefix). Distinct prefixes get unrelated
/// distributions; probabilities are bounded away from zero.
class HashOracle : public SequenceModel {
public:
    HashOracle(Vocabulary vocab, std::uint64_t salt) : vocab_(std::move(vocab)), salt_(salt) {}

    const Vocabulary& vocab() const override { return vocab_; }

    void next_token_distribution(std::span<const TokenId> prefix,
                                 std::span<double> out) const override {
        std::uint64_t h = salt_ ^ 0x5bf03635aa0e3c1fULL;
        for (TokenId id : prefix) {
            std::uint64_t s = h + 0x9e3779b97f4a7c15ULL * (id + 1);
            h = splitmix64(s);
        }
        double total = 0.0;
        for (std::size_t t = 0; t < out.size(); ++t) {
            std::uint64_t s = h + 0xbf58476d1ce4e5b9ULL * (t + 1);
            const double u = static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53;
            out[t] = 0.05 + u;
            total += out[t];
        }
        for (double& p : out) p /= total;
    }

private:
    Vocabulary vocab_;
    std::uint64_t salt_;
};

/// HashOracle plus a boosted path: while the prefix follows `target`, the
/// next target token receives an extra `weight` of probability mass
/// (mixture with the hash distribution). weight -> 1 makes the target
/// fully memorized; weight = 0 is the plain HashOracle.
class PlantedOracle : public SequenceModel {
public:
    PlantedOracle(Vocabulary vocab, std::uint64_t salt, std::vector<TokenId> target, double weight)
        : base_(std::move(vocab), salt), target_(std::move(target)), weight_(weight) {}

    const Vocabulary& vocab() const override { return base_.vocab(); }

    void set_weight(double weight) { weight_ = weight; }

    void next_token_distribution(std::span<const TokenId> prefix,
                                 std::span<double> out) const override {
        base_.next_token_distribution(prefix, out);
        const std::size_t k = prefix.size();
        if (k >= target_.size()) return;
        for (std::size_t i = 0; i < k; ++i) {
            if (prefix[i] != target_[i]) return;
        }
        for (double& p : out) p *= (1.0 - weight_);
        out[target_[k]] += weight_;
    }

private:
    HashOracle base_;
    std::vector<TokenId> target_;
    double weight_;
};

/// Always-uniform model: every candidate ties exactly.
class UniformOracle : public SequenceModel {
public:
    explicit UniformOracle(Vocabulary vocab) : vocab_(std::move(vocab)) {}
    const Vocabulary& vocab() const override { return vocab_; }
    void next_token_distribution(std::span<const TokenId>, std::span<double> out) const override {
        const double p = 1.0 / static_cast<double>(out.size());
        for (double& v : out) v = p;
    }

private:
    Vocabulary vocab_;
};

/// Independent mixed-radix decode (leftmost hole slowest), deliberately
/// not reusing randomness_at.
inline Randomness decode_index(const BoundFormat& bound, std::uint64_t index) {
    const auto& alphabets = bound.hole_alphabets();
    Randomness r(alphabets.size());
    for (std::size_t h = alphabets.size(); h-- > 0;) {
        const std::uint64_t radix = alphabets[h].size();
        r[h] = static_cast<std::uint32_t>(index % radix);
        index /= radix;
    }
    return r;
}

inline std::uint64_t space_u64(const BoundFormat& bound) {
    std::uint64_t n = 1;
    for (const auto& a : bound.hole_alphabets()) n *= a.size();
    return n;
}

/// Reference scorer: walks the sequence position by position straight off
/// the model, summing -log2 of the chosen token's probability (holes only
/// when requested). Mirrors the definition, not the library's streaming.
inline double reference_px(const SequenceModel& model, const BoundFormat& bound,
                           const Randomness& r, ScoringMode mode,
                           std::span<const TokenId> context = {}) {
    std::vector<TokenId> tokens = bound.tokens_for(r);
    std::vector<bool> is_hole(tokens.size(), false);
    for (std::size_t pos : bound.hole_positions()) is_hole[pos] = true;

    std::vector<TokenId> prefix(context.begin(), context.end());
    std::vector<double> dist(model.vocab_size());
    double px = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (mode == ScoringMode::FullSequence || is_hole[i]) {
            model.next_token_distribution(prefix, dist);
            px += -std::log2(dist[tokens[i]]);
        }
        prefix.push_back(tokens[i]);
    }
    return px;
}

struct BruteRank {
    std::uint64_t leq = 0; // candidates with px <= target
    std::uint64_t eq = 0;  // exact ties (including the canary)
    double target = 0.0;
    std::vector<double> all; // px in enumeration order
};

/// Full enumeration oracle for rank and exposure.
inline BruteRank brute_rank(const SequenceModel& model, const BoundFormat& bound,
                            const Randomness& r, ScoringMode mode,
                            std::span<const TokenId> context = {}) {
    BruteRank out;
    out.target = reference_px(model, bound, r, mode, context);
    const std::uint64_t n = space_u64(bound);
    out.all.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const double px = reference_px(model, bound, decode_index(bound, i), mode, context);
        out.all.push_back(px);
        if (px <= out.target) ++out.leq;
        if (px == out.target) ++out.eq;
    }
    return out;
}

/// argmin by (px, enumeration index): the reference answer for extraction.
inline std::pair<std::uint64_t, double> brute_argmin(const std::vector<double>& all) {
    std::uint64_t best = 0;
    for (std::uint64_t i = 1; i < all.size(); ++i) {
        if (all[i] < all[best]) best = i;
    }
    return {best, all[best]};
}

} // namespace testutil
