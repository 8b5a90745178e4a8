#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "memaudit/bigcount.hpp"
#include "memaudit/canary.hpp"
#include "memaudit/model.hpp"

namespace memaudit {

/// FullSequence scores every token of the candidate (the literal prefix is
/// part of the measured value). HolesOnly scores only the hole tokens;
/// literals still condition the model but add no weight. The two modes
/// measure different quantities and are not comparable.
enum class ScoringMode { FullSequence, HolesOnly };

/// Sum of -log2 Pr(x_i | context ++ x_1..x_{i-1}) in bits. Additive over
/// splits: px(ab) = px(a) + px(b | context ++ a). A zero-probability token
/// yields +infinity (reported, not thrown).
double log_perplexity(const SequenceModel& model, std::span<const TokenId> sequence,
                      std::span<const TokenId> context = {});

/// Log-perplexity of the bound format filled with r, under `mode`.
double score_candidate(const SequenceModel& model, const BoundFormat& bound, const Randomness& r,
                       ScoringMode mode = ScoringMode::FullSequence,
                       std::span<const TokenId> context = {});

struct RankResult {
    BigCount rank;         // |{r' : px(s[r']) <= px(s[r])}|, so always >= 1
    std::uint64_t ties = 0; // candidates with exactly equal px, >= 1
    BigCount space;        // |R|
    double target_px = 0.0;
};

struct RankOptions {
    ScoringMode mode = ScoringMode::FullSequence;
    std::vector<TokenId> context;
    std::uint64_t enumeration_cap = kDefaultEnumerationCap;
    unsigned jobs = 1;
};

/// Rank by full enumeration of R, streamed as a depth-first walk over the
/// hole tree so shared prefixes are scored once and memory stays O(depth).
/// Ties are counted against the canary (<= in the definition). Workers
/// partition the first hole's symbols; counts are order-independent
/// because every comparison is against one precomputed target value.
RankResult rank(const SequenceModel& model, const BoundFormat& bound, const Randomness& r,
                const RankOptions& options = {});

struct ExactExposure {
    double bits = 0.0; // log2 |R| - log2 rank, in [0, log2 |R|]
    RankResult rank;
};

ExactExposure exact_exposure(const SequenceModel& model, const BoundFormat& bound,
                             const Randomness& r, const RankOptions& options = {});

/// |R| of a bound format.
BigCount bound_space_size(const BoundFormat& bound);

/// Streams (enumeration index, px) for every candidate whose first-hole
/// symbol is in {lo, lo + stride, 2 stride, ...}, in enumeration order
/// within the partition. Shared prefixes are scored once (depth-first), so
/// the oracle-call count is the number of tree nodes, not |R| * length.
/// Values are bit-identical to score_candidate.
void for_each_candidate_px(const SequenceModel& model, const BoundFormat& bound, ScoringMode mode,
                           std::span<const TokenId> context, std::uint32_t lo, std::uint32_t stride,
                           const std::function<void(std::uint64_t, double)>& fn);

} // namespace memaudit
