// memaudit: canary-exposure audit harness.
//
// Subcommands cover the methodology end to end (insert, train, exposure,
// extract, sweep, report), each also runnable standalone on saved
// artifacts. Exit codes: 0 success, 1 config/usage error, 2 partial or
// failed step, 3 internal error.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "memaudit/config.hpp"
#include "memaudit/experiment.hpp"
#include "memaudit/extraction.hpp"
#include "memaudit/model_io.hpp"
#include "memaudit/report.hpp"
#include "memaudit/textgen.hpp"

namespace {

using namespace memaudit;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitPartial = 2;
constexpr int kExitInternal = 3;

struct CommonArgs {
    std::string config_path;
    std::string canary_id;
    std::uint64_t canary_seed = 0;
    bool canary_seed_set = false;
    std::uint64_t count = 0;
    bool count_set = false;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    unsigned jobs_override = 0;
    std::string format_override;
};

ExperimentConfig load_with_overrides(const CommonArgs& args) {
    ExperimentConfig config = load_config(args.config_path);
    if (args.seed_set) config.seed = args.seed_override;
    if (args.jobs_override > 0) config.jobs = args.jobs_override;
    if (args.format_override == "csv") config.output.format = ReportFormat::Csv;
    else if (args.format_override == "jsonl") config.output.format = ReportFormat::Jsonl;
    else if (!args.format_override.empty()) {
        throw ConfigError("--format must be 'csv' or 'jsonl'");
    }
    return config;
}

const CanaryPlan& find_plan(const ExperimentConfig& config, const std::string& id) {
    if (id.empty()) return config.canaries.front();
    for (const CanaryPlan& plan : config.canaries) {
        if (plan.id == id) return plan;
    }
    throw ConfigError("no canary with id '" + id + "' in config");
}

std::uint64_t pick_seed(const CanaryPlan& plan, const CommonArgs& args) {
    return args.canary_seed_set ? args.canary_seed : plan.seeds.front();
}

std::uint64_t pick_count(const CanaryPlan& plan, const CommonArgs& args) {
    return args.count_set ? args.count : plan.counts.front();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    out.flush();
    if (!out) throw IoError("failed writing: " + path);
}

void save_final_model(const ExperimentConfig& config, const ModelPtr& model,
                      const std::string& path) {
    if (config.model.kind == ModelPlan::Kind::NGram) {
        save_model(path, *std::dynamic_pointer_cast<const NGramModel>(model));
    } else {
        save_model(path, *std::dynamic_pointer_cast<const NeuralModel>(model));
    }
}

std::string yes_no(bool v) { return v ? "yes" : "no"; }

void print_row_summary(const ReportRow& row) {
    std::printf("canary '%s' seed %" PRIu64 " count %" PRIu64 " checkpoint %" PRIu64 "\n",
                row.canary_id.c_str(), row.seed, row.insertion_count, row.checkpoint);
    std::printf("  text: %s\n", row.canary_text.c_str());
    std::printf("  px: %.6f bits   log2|R|: %.6f\n", row.canary_px, row.space_log2);
    if (!std::isnan(row.exact_exposure)) {
        std::printf("  exact exposure: %.6f  (rank %s, ties %" PRIu64 ")\n", row.exact_exposure,
                    row.rank.c_str(), row.ties);
    }
    if (!std::isnan(row.sampling_exposure)) {
        std::printf("  sampling exposure: %.6f  (m=%" PRIu64 "%s)\n", row.sampling_exposure,
                    row.sampling_m, row.sampling_saturated ? ", saturated" : "");
    }
    if (!std::isnan(row.extrapolated_exposure)) {
        std::printf("  extrapolated exposure: %.6f%s%s", row.extrapolated_exposure,
                    row.extrap_exceeds_space ? " (exceeds space)" : "",
                    row.extrap_underflow ? " (cdf underflow)" : "");
        if (!std::isnan(row.ks_p)) std::printf("  [ks d=%.4f p=%.4f]", row.ks_d, row.ks_p);
        std::printf("\n");
    }
    if (row.extraction_ran) {
        std::printf("  extracted: %s  (expansions %" PRIu64 ", best px %.6f)\n",
                    yes_no(row.extracted).c_str(), row.expansions, row.best_px);
    }
    if (!row.error.empty()) std::printf("  error: %s\n", row.error.c_str());
}

int cmd_init(const std::string& out, bool force) {
    if (!force && std::filesystem::exists(out)) {
        throw ConfigError("refusing to overwrite existing " + out + " (use --force)");
    }
    write_text_file(out, example_config_text());
    std::printf("wrote starter config to %s\n", out.c_str());
    return kExitOk;
}

int cmd_gen_corpus(const std::string& out, std::uint64_t bytes, std::uint64_t seed) {
    const std::string text = generate_corpus_text(bytes, seed);
    write_text_file(out, text);
    std::printf("wrote %zu bytes to %s (seed %" PRIu64 ")\n", text.size(), out.c_str(), seed);
    return kExitOk;
}

int cmd_insert(const CommonArgs& args, const std::string& out) {
    const ExperimentConfig config = load_with_overrides(args);
    const CanaryPlan& plan = find_plan(config, args.canary_id);
    const std::uint64_t seed = pick_seed(plan, args);
    const std::uint64_t count = pick_count(plan, args);

    const auto [base_vocab, base_corpus] = load_corpus(config.corpus);
    const PreparedCorpus prep =
        prepare_corpus(config, plan, base_vocab, base_corpus, seed, count);
    write_text_file(out, detokenize(prep.vocab, prep.corpus.sequence));
    std::printf("inserted %" PRIu64 " cop%s of '%s' (canary '%s', seed %" PRIu64 "); wrote %s\n",
                count, count == 1 ? "y" : "ies", prep.canary_text.c_str(), plan.id.c_str(), seed,
                out.c_str());
    return kExitOk;
}

int cmd_train(const CommonArgs& args, const std::string& out) {
    const ExperimentConfig config = load_with_overrides(args);
    const CanaryPlan& plan = find_plan(config, args.canary_id);
    const std::uint64_t seed = pick_seed(plan, args);
    const std::uint64_t count = pick_count(plan, args);

    const auto [base_vocab, base_corpus] = load_corpus(config.corpus);
    const PreparedCorpus prep =
        prepare_corpus(config, plan, base_vocab, base_corpus, seed, count);
    const auto views = train_audit_models(config, prep.corpus, prep.vocab, seed);
    save_final_model(config, views.back().model, out);
    std::printf("trained on %zu tokens (canary '%s', seed %" PRIu64 ", count %" PRIu64
                "); saved model to %s\n",
                prep.corpus.size(), plan.id.c_str(), seed, count, out.c_str());
    return kExitOk;
}

int cmd_exposure(const CommonArgs& args, const std::string& model_path, const std::string& out) {
    const ExperimentConfig config = load_with_overrides(args);
    const CanaryPlan& plan = find_plan(config, args.canary_id);
    const std::uint64_t seed = pick_seed(plan, args);
    const std::uint64_t count = args.count_set ? args.count : 0; // metadata only

    const LoadedModel loaded = load_model(model_path);
    const FormatSequence format = parse_format(plan.format, config.custom_alphabets);
    const Randomness r = planted_randomness(config, plan, seed);
    const BoundFormat bound(format, loaded.model()->vocab(), config.corpus.tokenizer);

    const ReportRow row =
        audit_row(config, plan, *loaded.model(), bound, format, r, seed, count);
    print_row_summary(row);
    if (!out.empty()) {
        write_report(out, config.output.format, {row});
        std::printf("row written to %s\n", out.c_str());
    }
    return row.error.empty() ? kExitOk : kExitPartial;
}

int cmd_extract(const CommonArgs& args, const std::string& model_path) {
    const ExperimentConfig config = load_with_overrides(args);
    const CanaryPlan& plan = find_plan(config, args.canary_id);
    const std::uint64_t seed = pick_seed(plan, args);

    const LoadedModel loaded = load_model(model_path);
    const FormatSequence format = parse_format(plan.format, config.custom_alphabets);
    const Randomness r = planted_randomness(config, plan, seed);
    const BoundFormat bound(format, loaded.model()->vocab(), config.corpus.tokenizer);

    ExtractOptions opts;
    opts.batch_size = config.extraction.batch_size;
    opts.mode = config.scoring;
    opts.queue_cap = config.extraction.queue_cap;
    opts.target = bound.tokens_for(r);
    const ExtractionReport report = shortest_path_extract(*loaded.model(), bound, opts);

    std::printf("target: %s\n", instantiate(format, r).c_str());
    if (report.found_any) {
        std::printf("best candidate: %s\n",
                    detokenize(loaded.model()->vocab(), report.best_sequence).c_str());
        std::printf("best px: %.6f bits\n", report.best_px);
    } else {
        std::printf("best candidate: (none generated)\n");
    }
    std::printf("extracted target: %s\n", yes_no(report.found_target).c_str());
    std::printf("expansions: %" PRIu64 "  iterations: %" PRIu64 "  oracle batches: %" PRIu64 "\n",
                report.expansions, report.iterations, report.oracle_batches);
    if (report.queue_overflow) std::printf("note: queue cap hit; search stopped early\n");
    return kExitOk;
}

int cmd_sweep(const CommonArgs& args, const std::string& out_dir) {
    ExperimentConfig config = load_with_overrides(args);
    if (!out_dir.empty()) config.output.directory = out_dir;

    std::filesystem::create_directories(config.output.directory);
    const bool csv = config.output.format == ReportFormat::Csv;
    const std::string report_path =
        (std::filesystem::path(config.output.directory) / (csv ? "report.csv" : "report.jsonl"))
            .string();

    ReportWriter writer(report_path, config.output.format);
    const ExperimentResult result = run_experiment(config, [&](const ReportRow& row) {
        writer.write_row(row);
        std::fprintf(stderr, "row: canary=%s seed=%" PRIu64 " count=%" PRIu64
                             " checkpoint=%" PRIu64 "%s\n",
                     row.canary_id.c_str(), row.seed, row.insertion_count, row.checkpoint,
                     row.error.empty() ? "" : " [error]");
    });
    writer.finalize();

    std::printf("report written to %s (%zu rows, %zu failed)\n", report_path.c_str(),
                result.rows.size(), result.failed_rows);
    return result.failed_rows == 0 ? kExitOk : kExitPartial;
}

int cmd_report(const std::string& in, const std::string& format_flag) {
    ReportFormat format;
    if (format_flag == "csv") format = ReportFormat::Csv;
    else if (format_flag == "jsonl") format = ReportFormat::Jsonl;
    else if (format_flag.empty()) {
        const std::string ext = std::filesystem::path(in).extension().string();
        if (ext == ".csv") format = ReportFormat::Csv;
        else if (ext == ".jsonl") format = ReportFormat::Jsonl;
        else throw ConfigError("cannot infer report format from '" + in + "'; pass --format");
    } else {
        throw ConfigError("--format must be 'csv' or 'jsonl'");
    }

    const Report report = read_report(in, format);
    std::printf("%-12s %-6s %-6s %-10s %10s %10s %10s %10s  %s\n", "canary", "seed", "count",
                "checkpoint", "px", "exact", "sampling", "extrap", "extracted");
    std::size_t failed = 0;
    for (const ReportRow& row : report.rows) {
        if (!row.error.empty()) ++failed;
        const auto num = [](double v) {
            if (std::isnan(v)) return std::string("-");
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.3f", v);
            return std::string(buf);
        };
        std::printf("%-12s %-6" PRIu64 " %-6" PRIu64 " %-10" PRIu64 " %10s %10s %10s %10s  %s%s\n",
                    row.canary_id.c_str(), row.seed, row.insertion_count, row.checkpoint,
                    num(row.canary_px).c_str(), num(row.exact_exposure).c_str(),
                    num(row.sampling_exposure).c_str(), num(row.extrapolated_exposure).c_str(),
                    row.extraction_ran ? yes_no(row.extracted).c_str() : "-",
                    row.error.empty() ? "" : "  [error]");
    }
    std::printf("%zu rows, %zu failed, schema %d, finalized: %s\n", report.rows.size(), failed,
                report.schema_version, yes_no(report.finalized).c_str());
    return kExitOk;
}

void add_common(CLI::App* sub, CommonArgs& args, bool with_selection) {
    sub->add_option("--config", args.config_path, "experiment config file")->required();
    auto* seed = sub->add_option("--seed", args.seed_override, "override the config's master seed");
    sub->add_option("--jobs", args.jobs_override, "override the config's worker count");
    sub->add_option("--format", args.format_override, "override the output format (csv|jsonl)");
    if (with_selection) {
        sub->add_option("--canary", args.canary_id, "canary id (default: first in config)");
        auto* cseed = sub->add_option("--canary-seed", args.canary_seed,
                                      "canary seed (default: first in the plan)");
        auto* count = sub->add_option("--count", args.count,
                                      "insertion count (default: first in the plan)");
        sub->parse_complete_callback([&args, seed, cseed, count]() {
            args.seed_set = seed->count() > 0;
            args.canary_seed_set = cseed->count() > 0;
            args.count_set = count->count() > 0;
        });
    } else {
        sub->parse_complete_callback([&args, seed]() { args.seed_set = seed->count() > 0; });
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"unintended-memorization audit harness"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string out_path;
    std::string model_path;
    std::string in_path;
    std::string format_flag;
    std::uint64_t gen_bytes = 5'000'000;
    std::uint64_t gen_seed = 1;
    bool force = false;

    auto* init = app.add_subcommand("init", "write a starter config");
    init->add_option("--out", out_path, "path to write")->capture_default_str();
    init->add_flag("--force", force, "overwrite an existing file");

    auto* gen = app.add_subcommand("gen-corpus", "generate the deterministic filler corpus");
    gen->add_option("--out", out_path, "path to write")->required();
    gen->add_option("--bytes", gen_bytes, "approximate size in bytes")->capture_default_str();
    gen->add_option("--seed", gen_seed, "generator seed")->capture_default_str();

    auto* insert = app.add_subcommand("insert", "write the canary-augmented corpus");
    add_common(insert, args, true);
    insert->add_option("--out", out_path, "path for the augmented corpus text")->required();

    auto* train = app.add_subcommand("train", "train on the augmented corpus and save the model");
    add_common(train, args, true);
    train->add_option("--out", out_path, "path for the model file")->required();

    auto* exposure = app.add_subcommand("exposure", "audit a saved model against a canary");
    add_common(exposure, args, true);
    exposure->add_option("--model", model_path, "saved model file")->required();
    exposure->add_option("--out", out_path, "also write the row as a single-row report");

    auto* extract = app.add_subcommand("extract", "run shortest-path extraction on a saved model");
    add_common(extract, args, true);
    extract->add_option("--model", model_path, "saved model file")->required();

    auto* sweep = app.add_subcommand("sweep", "run the full experiment described by the config");
    add_common(sweep, args, false);
    sweep->add_option("--out", out_path, "override the output directory");

    auto* report = app.add_subcommand("report", "summarize a report file");
    report->add_option("--in", in_path, "report file to read")->required();
    report->add_option("--format", format_flag, "csv|jsonl (default: by extension)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (init->parsed()) return cmd_init(out_path.empty() ? "audit.json" : out_path, force);
        if (gen->parsed()) return cmd_gen_corpus(out_path, gen_bytes, gen_seed);
        if (insert->parsed()) return cmd_insert(args, out_path);
        if (train->parsed()) return cmd_train(args, out_path);
        if (exposure->parsed()) return cmd_exposure(args, model_path, out_path);
        if (extract->parsed()) return cmd_extract(args, model_path);
        if (sweep->parsed()) return cmd_sweep(args, out_path);
        if (report->parsed()) return cmd_report(in_path, format_flag);
        std::fprintf(stderr, "no subcommand given\n");
        return kExitConfig;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const AuditError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitPartial;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return kExitInternal;
    }
}
