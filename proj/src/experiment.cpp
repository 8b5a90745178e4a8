#include "memaudit/experiment.hpp"

#include <fstream>
#include <sstream>

#include "memaudit/estimation.hpp"
#include "memaudit/extraction.hpp"
#include "memaudit/ngram.hpp"

namespace memaudit {

namespace {

// Domain tags keep the derived seed streams (canary draw, placement,
// training, sampling) disjoint even when the raw seeds collide.
constexpr std::uint64_t kCanaryDomain = 0x63616e61727953ULL;
constexpr std::uint64_t kPlaceDomain = 0x706c6163656dULL;
constexpr std::uint64_t kTrainDomain = 0x747261696eULL;
constexpr std::uint64_t kSampleDomain = 0x73616d706cULL;

// Digest of everything that shapes training except the corpus itself.
// Insertion counts must not leak into it: models across counts differ
// only in the augmented corpus.
std::uint64_t training_digest(const ExperimentConfig& config, std::uint64_t seed) {
    std::ostringstream ss;
    if (config.model.kind == ModelPlan::Kind::NGram) {
        ss << "ngram:" << config.model.order << ':' << format_double(config.model.smoothing);
    } else {
        const NeuralArch& a = config.model.arch;
        const TrainingConfig& t = config.model.training;
        ss << "neural:" << a.window << ':' << a.embed_dim << ':' << a.hidden_dim << ':'
           << format_double(t.learning_rate) << ':' << t.batch_size << ':' << t.epochs << ':'
           << t.shuffle << ':' << mix_seed(mix_seed(config.seed, kTrainDomain), seed) << ':'
           << config.model.snapshot_every;
    }
    return fnv1a(ss.str());
}

} // namespace

std::pair<Vocabulary, Corpus> load_corpus(const CorpusPlan& plan) {
    std::ifstream in(plan.path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + plan.path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("failed reading corpus file: " + plan.path);
    auto [vocab, corpus] = tokenize(buf.str(), plan.tokenizer);
    if (plan.limit != 0 && corpus.sequence.size() > plan.limit) {
        corpus.sequence.resize(plan.limit);
    }
    if (corpus.sequence.empty()) throw InvalidCorpus("corpus is empty: " + plan.path);
    return {std::move(vocab), std::move(corpus)};
}

Randomness planted_randomness(const ExperimentConfig& config, const CanaryPlan& plan,
                              std::uint64_t seed) {
    const FormatSequence format = parse_format(plan.format, config.custom_alphabets);
    Rng rng(mix_seed(mix_seed(mix_seed(config.seed, kCanaryDomain), fnv1a(plan.id)), seed));
    return sample_randomness(format, rng);
}

PreparedCorpus prepare_corpus(const ExperimentConfig& config, const CanaryPlan& plan,
                              const Vocabulary& base_vocab, const Corpus& base_corpus,
                              std::uint64_t seed, std::uint64_t count) {
    PreparedCorpus prep;
    prep.format = parse_format(plan.format, config.custom_alphabets);
    prep.r = planted_randomness(config, plan, seed);
    prep.canary_text = instantiate(prep.format, prep.r);
    prep.canary_tokens = token_strings(prep.format, prep.r, config.corpus.tokenizer);

    // Extending the vocabulary before any insertion keeps token ids
    // identical across counts, including 0.
    prep.vocab = base_vocab;
    extend_vocabulary(prep.vocab, prep.format, config.corpus.tokenizer);

    if (count == 0) {
        prep.corpus = base_corpus;
    } else {
        Placement placement = plan.placement;
        if (placement.kind == Placement::Kind::UniformRandom) {
            placement.seed = mix_seed(mix_seed(mix_seed(placement.seed, kPlaceDomain), seed), count);
        }
        prep.corpus = insert_canary(base_corpus, prep.vocab, prep.canary_tokens, count, placement);
    }
    return prep;
}

std::vector<ModelCheckpoint> train_audit_models(const ExperimentConfig& config,
                                                const Corpus& corpus, const Vocabulary& vocab,
                                                std::uint64_t seed) {
    std::vector<ModelCheckpoint> views;
    if (config.model.kind == ModelPlan::Kind::NGram) {
        auto model = std::make_shared<NGramModel>(
            train_ngram(corpus, vocab, config.model.order, config.model.smoothing));
        views.push_back({std::move(model), 0, 0});
        return views;
    }

    TrainingConfig tc = config.model.training;
    tc.seed = mix_seed(mix_seed(config.seed, kTrainDomain), seed);
    TrainResult result =
        train_neural(corpus, vocab, config.model.arch, tc, config.model.snapshot_every);

    const std::size_t per_epoch = (corpus.size() + tc.batch_size - 1) / tc.batch_size;
    const std::uint64_t total = static_cast<std::uint64_t>(tc.epochs) * per_epoch;
    for (const Checkpoint& cp : result.checkpoints) {
        views.push_back({cp.model, cp.minibatch_index, cp.epoch});
    }
    if (views.empty() || views.back().checkpoint != total) {
        views.push_back({result.model, total, tc.epochs == 0 ? 0 : tc.epochs - 1});
    }
    return views;
}

ReportRow audit_row(const ExperimentConfig& config, const CanaryPlan& plan,
                    const SequenceModel& model, const BoundFormat& bound,
                    const FormatSequence& format, const Randomness& r, std::uint64_t seed,
                    std::uint64_t count, std::uint64_t checkpoint, std::uint64_t epoch) {
    ReportRow row;
    row.canary_id = plan.id;
    row.format = plan.format;
    row.canary_text = instantiate(format, r);
    row.insertion_count = count;
    row.seed = seed;
    row.checkpoint = checkpoint;
    row.epoch = epoch;

    row.canary_px = score_candidate(model, bound, r, config.scoring);
    const BigCount space = bound_space_size(bound);
    row.space_log2 = space.log2();

    if (config.estimation.exact && space <= BigCount(config.estimation.enumeration_cap)) {
        RankOptions opts;
        opts.mode = config.scoring;
        opts.enumeration_cap = config.estimation.enumeration_cap;
        opts.jobs = config.jobs;
        const ExactExposure exact = exact_exposure(model, bound, r, opts);
        row.exact_exposure = exact.bits;
        row.rank = exact.rank.rank.to_string();
        row.ties = exact.rank.ties;
    }

    if (config.estimation.sampling || config.estimation.extrapolation) {
        // Same sampling seed across counts and checkpoints: estimates
        // within a curve share candidate draws (paired comparison).
        const std::uint64_t sample_seed =
            mix_seed(mix_seed(mix_seed(config.seed, kSampleDomain), fnv1a(plan.id)), seed);
        SampleOptions opts;
        opts.mode = config.scoring;
        opts.jobs = config.jobs;
        const PerplexitySample sample =
            sample_perplexities(model, bound, config.estimation.m, sample_seed, opts);
        if (config.estimation.sampling) {
            const ExposureEstimate est = sampling_exposure(sample, row.canary_px);
            row.sampling_exposure = est.bits;
            row.sampling_m = est.sample_size;
            row.sampling_saturated = est.saturated;
        }
        if (config.estimation.extrapolation) {
            try {
                const ExposureEstimate est =
                    extrapolated_exposure(sample, row.canary_px, row.space_log2);
                row.extrapolated_exposure = est.bits;
                row.extrap_exceeds_space = est.exceeds_space;
                row.extrap_underflow = est.underflow;
                row.ks_d = est.ks_statistic;
                row.ks_p = est.ks_p;
            } catch (const FitError& e) {
                row.error = std::string("extrapolation: ") + e.what();
            }
        }
    }

    if (config.extraction.enabled) {
        ExtractOptions opts;
        opts.batch_size = config.extraction.batch_size;
        opts.mode = config.scoring;
        opts.queue_cap = config.extraction.queue_cap;
        opts.target = bound.tokens_for(r);
        const ExtractionReport report = shortest_path_extract(model, bound, opts);
        row.extraction_ran = true;
        row.extracted = report.found_target;
        row.expansions = report.expansions;
        if (report.found_any) row.best_px = report.best_px;
    }
    return row;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RowCallback& on_row) {
    ExperimentResult result;
    const auto [base_vocab, base_corpus] = load_corpus(config.corpus);

    for (const CanaryPlan& plan : config.canaries) {
        for (const std::uint64_t seed : plan.seeds) {
            const std::uint64_t digest = training_digest(config, seed);

            for (const std::uint64_t count : plan.counts) {
                ReportRow base_row;
                base_row.canary_id = plan.id;
                base_row.format = plan.format;
                base_row.insertion_count = count;
                base_row.seed = seed;

                try {
                    if (training_digest(config, seed) != digest) {
                        throw AuditError("internal: training setup differs across insertion counts");
                    }
                    const PreparedCorpus prep =
                        prepare_corpus(config, plan, base_vocab, base_corpus, seed, count);
                    base_row.canary_text = prep.canary_text;

                    const std::vector<ModelCheckpoint> views =
                        train_audit_models(config, prep.corpus, prep.vocab, seed);
                    const BoundFormat bound(prep.format, prep.vocab, config.corpus.tokenizer);

                    for (const ModelCheckpoint& view : views) {
                        ReportRow row;
                        try {
                            row = audit_row(config, plan, *view.model, bound, prep.format, prep.r,
                                            seed, count, view.checkpoint, view.epoch);
                        } catch (const AuditError& e) {
                            row = base_row;
                            row.checkpoint = view.checkpoint;
                            row.epoch = view.epoch;
                            row.error = e.what();
                        }
                        if (!row.error.empty()) ++result.failed_rows;
                        if (on_row) on_row(row);
                        result.rows.push_back(std::move(row));
                    }
                } catch (const AuditError& e) {
                    ReportRow row = base_row;
                    row.error = e.what();
                    ++result.failed_rows;
                    if (on_row) on_row(row);
                    result.rows.push_back(std::move(row));
                }
            }
        }
    }
    return result;
}

} // namespace memaudit
