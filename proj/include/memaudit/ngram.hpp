#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "memaudit/model.hpp"

namespace memaudit {

/// Add-k smoothed n-gram model over token ids.
///
/// Counts are exact sliding-window statistics of the training corpus:
/// context corpus[i .. i+n-1) is followed by token corpus[i+n-1].
/// Prefixes shorter than n-1 are left-padded with a reserved out-of-corpus
/// padding id, so they hit unseen contexts and score (near-)uniformly.
///
/// Unseen-context policy: with k > 0 add-k already yields uniform; with
/// k = 0 the distribution falls back to uniform over V so that every
/// prefix has a total next-token distribution.
class NGramModel : public SequenceModel {
public:
    struct ContextRow {
        std::vector<std::pair<TokenId, std::uint64_t>> counts; // sorted by token id
        std::uint64_t total = 0;
    };

    NGramModel(Vocabulary vocab, std::size_t order, double smoothing);

    const Vocabulary& vocab() const override { return vocab_; }
    std::size_t order() const { return order_; }
    double smoothing() const { return smoothing_; }

    void next_token_distribution(std::span<const TokenId> prefix,
                                 std::span<double> out) const override;

    std::uint64_t context_count(std::span<const TokenId> context, TokenId token) const;
    std::uint64_t context_total(std::span<const TokenId> context) const;
    std::size_t distinct_contexts() const { return table_.size(); }

    /// Deterministic (sorted) view of the full count table, for serialization.
    std::vector<std::pair<std::vector<TokenId>, ContextRow>> sorted_table() const;

    void add_count(std::span<const TokenId> context, TokenId token, std::uint64_t count);

private:
    std::string pack_context(std::span<const TokenId> prefix) const;

    Vocabulary vocab_;
    std::size_t order_;
    double smoothing_;
    std::unordered_map<std::string, ContextRow> table_;
};

/// Builds an NGramModel with counts from every length-n window of the corpus.
NGramModel train_ngram(const Corpus& corpus, const Vocabulary& vocab,
                       std::size_t order, double smoothing);

} // namespace memaudit
