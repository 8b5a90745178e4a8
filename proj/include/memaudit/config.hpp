#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "memaudit/canary.hpp"
#include "memaudit/neural.hpp"
#include "memaudit/perplexity.hpp"
#include "memaudit/report.hpp"
#include "memaudit/vocab.hpp"

namespace memaudit {

inline constexpr int kConfigSchemaVersion = 1;

struct CorpusPlan {
    std::string path;
    TokenizerKind tokenizer = TokenizerKind::Char;
    std::size_t limit = 0; // keep only the first `limit` tokens; 0 = all
};

struct ModelPlan {
    enum class Kind { NGram, Neural } kind = Kind::NGram;

    // ngram
    std::size_t order = 5;
    double smoothing = 0.01;

    // neural
    NeuralArch arch;
    TrainingConfig training;
    std::size_t snapshot_every = 0; // emit a row per k-th minibatch checkpoint
};

struct CanaryPlan {
    std::string id;
    std::string format;
    std::vector<std::uint64_t> counts; // strictly increasing, may start at 0
    std::vector<std::uint64_t> seeds;
    Placement placement;
};

struct EstimationPlan {
    std::size_t m = 4096;
    std::uint64_t enumeration_cap = kDefaultEnumerationCap;
    bool exact = true;
    bool sampling = true;
    bool extrapolation = true;
};

struct ExtractionPlan {
    bool enabled = false;
    std::size_t batch_size = 1;
    std::size_t queue_cap = 10'000'000;
};

struct OutputPlan {
    std::string directory = "out";
    ReportFormat format = ReportFormat::Csv;
};

/// Whole-run description loaded from one JSON file. Validation is strict:
/// unknown keys, wrong types, out-of-range values and missing referenced
/// files are all ConfigError at load time, before any work starts.
struct ExperimentConfig {
    int schema_version = kConfigSchemaVersion;
    CorpusPlan corpus;
    ModelPlan model;
    AlphabetRegistry custom_alphabets;
    std::vector<CanaryPlan> canaries;
    EstimationPlan estimation;
    ExtractionPlan extraction;
    ScoringMode scoring = ScoringMode::FullSequence;
    OutputPlan output;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
};

ExperimentConfig load_config(const std::string& path);

/// Parses config text (same schema as the file). Exposed for tests.
ExperimentConfig parse_config(const std::string& json_text,
                              const std::string& base_dir = ".");

/// A starter config with every key spelled out, written by `memaudit init`.
std::string example_config_text();

} // namespace memaudit
