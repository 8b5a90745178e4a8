#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "memaudit/config.hpp"
#include "memaudit/report.hpp"

namespace memaudit {

struct ExperimentResult {
    std::vector<ReportRow> rows;
    std::size_t failed_rows = 0; // rows whose error field is non-empty
};

using RowCallback = std::function<void(const ReportRow&)>;

/// Runs the full audit described by `config`: for every canary, seed and
/// insertion count, build the augmented corpus, train the model, and
/// estimate exposure (exact, sampling, extrapolation per config) plus an
/// optional extraction attempt, one report row per model checkpoint.
///
/// Rows are produced in a fixed nested order (canaries, then seeds, then
/// counts ascending, then checkpoints) and all worker seeds are derived
/// from (config.seed, canary id, seed, count), so two runs of the same
/// config produce byte-identical reports. `jobs` only parallelizes the
/// inside of a row (rank partitions, sampling chunks), never reorders
/// rows. A failure inside one row is recorded in its error field and the
/// run continues; failures that invalidate the whole run (unreadable
/// corpus, unparseable format) throw.
ExperimentResult run_experiment(const ExperimentConfig& config, const RowCallback& on_row = {});

/// The canary drawn for (plan, seed): same derivation the runner uses, so
/// tools can reproduce which secret was planted without rerunning.
Randomness planted_randomness(const ExperimentConfig& config, const CanaryPlan& plan,
                              std::uint64_t seed);

/// Reads and tokenizes the corpus file named by the config (applying the
/// token limit). Exposed for the CLI subcommands that need the same view
/// of the data as the runner.
std::pair<Vocabulary, Corpus> load_corpus(const CorpusPlan& plan);

/// Everything the training step consumes for one (canary, seed, count)
/// cell. The vocabulary is the base corpus vocabulary extended with every
/// token the format can produce, so ids are identical across counts
/// (including count 0, where the corpus is untouched).
struct PreparedCorpus {
    Vocabulary vocab;
    Corpus corpus;
    FormatSequence format;
    Randomness r;
    std::string canary_text;
    std::vector<std::string> canary_tokens;
};

PreparedCorpus prepare_corpus(const ExperimentConfig& config, const CanaryPlan& plan,
                              const Vocabulary& base_vocab, const Corpus& base_corpus,
                              std::uint64_t seed, std::uint64_t count);

/// One trained model state to audit. Count-based models have a single
/// checkpoint 0; neural models have one per snapshot plus the final state
/// (checkpoint = completed minibatches).
struct ModelCheckpoint {
    ModelPtr model;
    std::uint64_t checkpoint = 0;
    std::uint64_t epoch = 0;
};

/// Trains per the config's model plan. The training seed is derived from
/// (config.seed, seed) only, never from the insertion count: models across
/// counts differ only in the augmented corpus.
std::vector<ModelCheckpoint> train_audit_models(const ExperimentConfig& config,
                                                const Corpus& corpus, const Vocabulary& vocab,
                                                std::uint64_t seed);

/// Audits one model state against one canary: scores it, estimates
/// exposure by every method the config enables, optionally attempts
/// extraction, and returns the filled report row. Throws on failure
/// (callers decide whether to record or propagate).
ReportRow audit_row(const ExperimentConfig& config, const CanaryPlan& plan,
                    const SequenceModel& model, const BoundFormat& bound,
                    const FormatSequence& format, const Randomness& r, std::uint64_t seed,
                    std::uint64_t count, std::uint64_t checkpoint = 0, std::uint64_t epoch = 0);

} // namespace memaudit
