#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memaudit/canary.hpp"
#include "memaudit/estimation.hpp"
#include "memaudit/model.hpp"
#include "memaudit/perplexity.hpp"

namespace memaudit {

struct ExtractionCandidate {
    std::vector<TokenId> tokens;
    std::uint64_t index = 0; // enumeration index of the hole choices
    double px = 0.0;
};

/// Scores every candidate in R and returns the global top_k by ascending
/// px, ties broken by enumeration order (lexicographic hole tuple).
std::vector<ExtractionCandidate> brute_force_extract(
    const SequenceModel& model, const BoundFormat& bound, std::size_t top_k,
    ScoringMode mode = ScoringMode::FullSequence, std::span<const TokenId> context = {},
    std::uint64_t enumeration_cap = kDefaultEnumerationCap);

struct ExtractOptions {
    std::size_t batch_size = 1; // B: nodes pulled per iteration
    ScoringMode mode = ScoringMode::FullSequence;
    std::vector<TokenId> context;
    std::uint64_t queue_cap = 10'000'000;
    std::vector<TokenId> target; // ground-truth canary tokens, if known
};

struct ExtractionReport {
    std::vector<TokenId> best_sequence;
    double best_px = 0.0;
    std::uint64_t best_index = 0;
    bool found_any = false;          // at least one leaf was generated
    std::uint64_t expansions = 0;    // internal nodes whose children were evaluated
    std::uint64_t oracle_batches = 0;
    std::uint64_t iterations = 0;
    bool has_target = false;
    bool found_target = false;       // best_sequence equals the supplied target
    bool queue_overflow = false;     // stopped early at the queue cap
    double wall_time_seconds = 0.0;  // diagnostic only; not serialized
};

/// Dijkstra-style search over the hole tree: node weight is the cumulative
/// -log2 probability, so a leaf's weight is its log-perplexity and with
/// B = 1 the first leaf popped is the exact minimum (edge weights are
/// nonnegative). With B > 1, each iteration pulls B nodes and evaluates
/// all their children through one batched oracle round per token step;
/// since the first popped leaf is then no longer guaranteed optimal, the
/// search records how many iterations the first leaf took and continues
/// that many more before returning the best leaf generated (roughly
/// doubling the iteration count). Literal tokens are forced edges: weight
/// added, no branching. Pop order is deterministic: (weight, deeper
/// first, lexicographic hole tuple).
ExtractionReport shortest_path_extract(const SequenceModel& model, const BoundFormat& bound,
                                       const ExtractOptions& options = {});

struct SweepEntry {
    std::string label; // e.g. the insertion count
    ModelPtr model;
    Randomness canary; // the inserted canary's hole choices
};

struct SweepOptions {
    ScoringMode mode = ScoringMode::FullSequence;
    std::vector<TokenId> context;
    unsigned jobs = 1;
    std::size_t batch_size = 1;
    std::uint64_t queue_cap = 10'000'000;
    std::uint64_t enumeration_cap = kDefaultEnumerationCap;
    std::size_t sample_m = 0; // when > 0, also compute the sampling estimate
    std::uint64_t sample_seed = 1;
};

struct SweepRow {
    std::string label;
    double canary_px = 0.0;
    double exact_exposure = 0.0;
    BigCount rank;
    std::uint64_t ties = 0;
    ExposureEstimate sampling; // only when sample_m > 0
    bool extracted = false;    // search returned exactly the canary
    std::uint64_t expansions = 0;
    double best_px = 0.0;
};

/// Exposure-vs-extraction curve: for each (model, canary) pair, exact
/// exposure by enumeration plus a shortest-path extraction attempt.
std::vector<SweepRow> extraction_sweep(const std::vector<SweepEntry>& entries,
                                       const BoundFormat& bound, const SweepOptions& options = {});

} // namespace memaudit
