#include "memaudit/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace memaudit {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config: " + where + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) fail(where, std::string("missing required key '") + key + "'");
    return *it;
}

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) fail(where, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) {
            if (it.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) fail(where, "unknown key '" + it.key() + "'");
    }
}

std::uint64_t get_u64(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    }
    fail(where, "expected a nonnegative integer");
}

double get_finite(const json& v, const std::string& where) {
    if (!v.is_number()) fail(where, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(where, "expected a finite number");
    return d;
}

bool get_bool(const json& v, const std::string& where) {
    if (!v.is_boolean()) fail(where, "expected a boolean");
    return v.get<bool>();
}

std::string get_string(const json& v, const std::string& where) {
    if (!v.is_string()) fail(where, "expected a string");
    return v.get<std::string>();
}

TokenizerKind parse_tokenizer(const std::string& s, const std::string& where) {
    if (s == "char") return TokenizerKind::Char;
    if (s == "word") return TokenizerKind::Word;
    fail(where, "tokenizer must be 'char' or 'word', got '" + s + "'");
}

CorpusPlan parse_corpus(const json& j, const std::string& base_dir) {
    const std::string where = "corpus";
    check_keys(j, where, {"path", "tokenizer", "limit"});
    CorpusPlan plan;
    plan.path = get_string(require(j, "path", where), where + ".path");
    if (plan.path.empty()) fail(where + ".path", "must be nonempty");
    std::filesystem::path p(plan.path);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    plan.path = p.string();
    if (!std::filesystem::exists(p)) fail(where + ".path", "file does not exist: " + plan.path);
    if (j.contains("tokenizer")) {
        plan.tokenizer = parse_tokenizer(get_string(j["tokenizer"], where + ".tokenizer"),
                                         where + ".tokenizer");
    }
    if (j.contains("limit")) plan.limit = get_u64(j["limit"], where + ".limit");
    return plan;
}

ModelPlan parse_model(const json& j) {
    const std::string where = "model";
    ModelPlan plan;
    const std::string kind = get_string(require(j, "kind", where), where + ".kind");
    if (kind == "ngram") {
        plan.kind = ModelPlan::Kind::NGram;
        check_keys(j, where, {"kind", "order", "smoothing"});
        if (j.contains("order")) {
            plan.order = get_u64(j["order"], where + ".order");
            if (plan.order < 1) fail(where + ".order", "must be >= 1");
        }
        if (j.contains("smoothing")) {
            plan.smoothing = get_finite(j["smoothing"], where + ".smoothing");
            if (plan.smoothing < 0) fail(where + ".smoothing", "must be >= 0");
        }
    } else if (kind == "neural") {
        plan.kind = ModelPlan::Kind::Neural;
        check_keys(j, where,
                   {"kind", "window", "embed_dim", "hidden_dim", "learning_rate",
                    "batch_size", "epochs", "shuffle", "snapshot_every"});
        const auto dim = [&](const char* key, std::size_t fallback) {
            if (!j.contains(key)) return fallback;
            const std::uint64_t v = get_u64(j[key], where + "." + key);
            if (v < 1) fail(where + "." + key, "must be >= 1");
            return static_cast<std::size_t>(v);
        };
        plan.arch.window = dim("window", plan.arch.window);
        plan.arch.embed_dim = dim("embed_dim", plan.arch.embed_dim);
        plan.arch.hidden_dim = dim("hidden_dim", plan.arch.hidden_dim);
        if (j.contains("learning_rate")) {
            plan.training.learning_rate = get_finite(j["learning_rate"], where + ".learning_rate");
            if (plan.training.learning_rate <= 0) fail(where + ".learning_rate", "must be > 0");
        }
        plan.training.batch_size = dim("batch_size", plan.training.batch_size);
        plan.training.epochs = dim("epochs", plan.training.epochs);
        if (j.contains("shuffle")) {
            plan.training.shuffle = get_bool(j["shuffle"], where + ".shuffle");
        }
        if (j.contains("snapshot_every")) {
            plan.snapshot_every = get_u64(j["snapshot_every"], where + ".snapshot_every");
        }
    } else {
        fail(where + ".kind", "must be 'ngram' or 'neural', got '" + kind + "'");
    }
    return plan;
}

AlphabetRegistry parse_alphabets(const json& j) {
    const std::string where = "custom_alphabets";
    if (!j.is_object()) fail(where, "expected an object");
    AlphabetRegistry registry;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string entry = where + "." + it.key();
        if (it.key().empty()) fail(where, "alphabet name must be nonempty");
        if (!it.value().is_array() || it.value().empty()) {
            fail(entry, "expected a nonempty array of symbols");
        }
        std::vector<std::string> symbols;
        for (const json& sym : it.value()) {
            symbols.push_back(get_string(sym, entry));
            if (symbols.back().empty()) fail(entry, "symbols must be nonempty");
        }
        registry.emplace(it.key(), std::move(symbols));
    }
    return registry;
}

Placement parse_placement(const json& j) {
    const std::string where = "canaries.placement";
    check_keys(j, where, {"kind", "offset", "seed"});
    Placement placement;
    if (j.contains("kind")) {
        const std::string kind = get_string(j["kind"], where + ".kind");
        if (kind == "fixed_offset") placement.kind = Placement::Kind::FixedOffset;
        else if (kind == "uniform_random") placement.kind = Placement::Kind::UniformRandom;
        else fail(where + ".kind", "must be 'fixed_offset' or 'uniform_random'");
    }
    if (j.contains("offset")) placement.offset = get_u64(j["offset"], where + ".offset");
    if (j.contains("seed")) placement.seed = get_u64(j["seed"], where + ".seed");
    return placement;
}

CanaryPlan parse_canary(const json& j, std::size_t idx) {
    const std::string where = "canaries[" + std::to_string(idx) + "]";
    check_keys(j, where, {"id", "format", "counts", "seeds", "placement"});
    CanaryPlan plan;
    plan.id = get_string(require(j, "id", where), where + ".id");
    if (plan.id.empty()) fail(where + ".id", "must be nonempty");
    plan.format = get_string(require(j, "format", where), where + ".format");
    if (plan.format.empty()) fail(where + ".format", "must be nonempty");

    const json& counts = require(j, "counts", where);
    if (!counts.is_array() || counts.empty()) fail(where + ".counts", "expected a nonempty array");
    for (const json& c : counts) {
        plan.counts.push_back(get_u64(c, where + ".counts"));
        if (plan.counts.size() > 1 && plan.counts.back() <= plan.counts[plan.counts.size() - 2]) {
            fail(where + ".counts", "must be strictly increasing");
        }
    }

    const json& seeds = require(j, "seeds", where);
    if (!seeds.is_array() || seeds.empty()) fail(where + ".seeds", "expected a nonempty array");
    std::set<std::uint64_t> seen;
    for (const json& s : seeds) {
        plan.seeds.push_back(get_u64(s, where + ".seeds"));
        if (!seen.insert(plan.seeds.back()).second) {
            fail(where + ".seeds", "seeds must be distinct");
        }
    }

    if (j.contains("placement")) plan.placement = parse_placement(j["placement"]);
    return plan;
}

EstimationPlan parse_estimation(const json& j) {
    const std::string where = "estimation";
    check_keys(j, where, {"m", "enumeration_cap", "exact", "sampling", "extrapolation"});
    EstimationPlan plan;
    if (j.contains("m")) {
        plan.m = get_u64(j["m"], where + ".m");
        if (plan.m < 2) fail(where + ".m", "must be >= 2");
    }
    if (j.contains("enumeration_cap")) {
        plan.enumeration_cap = get_u64(j["enumeration_cap"], where + ".enumeration_cap");
        if (plan.enumeration_cap < 2) fail(where + ".enumeration_cap", "must be >= 2");
    }
    if (j.contains("exact")) plan.exact = get_bool(j["exact"], where + ".exact");
    if (j.contains("sampling")) plan.sampling = get_bool(j["sampling"], where + ".sampling");
    if (j.contains("extrapolation")) {
        plan.extrapolation = get_bool(j["extrapolation"], where + ".extrapolation");
    }
    return plan;
}

ExtractionPlan parse_extraction(const json& j) {
    const std::string where = "extraction";
    check_keys(j, where, {"enabled", "batch_size", "queue_cap"});
    ExtractionPlan plan;
    if (j.contains("enabled")) plan.enabled = get_bool(j["enabled"], where + ".enabled");
    if (j.contains("batch_size")) {
        plan.batch_size = get_u64(j["batch_size"], where + ".batch_size");
        if (plan.batch_size < 1) fail(where + ".batch_size", "must be >= 1");
    }
    if (j.contains("queue_cap")) {
        plan.queue_cap = get_u64(j["queue_cap"], where + ".queue_cap");
        if (plan.queue_cap < 1) fail(where + ".queue_cap", "must be >= 1");
    }
    return plan;
}

OutputPlan parse_output(const json& j) {
    const std::string where = "output";
    check_keys(j, where, {"directory", "format"});
    OutputPlan plan;
    if (j.contains("directory")) {
        plan.directory = get_string(j["directory"], where + ".directory");
        if (plan.directory.empty()) fail(where + ".directory", "must be nonempty");
    }
    if (j.contains("format")) {
        const std::string fmt = get_string(j["format"], where + ".format");
        if (fmt == "csv") plan.format = ReportFormat::Csv;
        else if (fmt == "jsonl") plan.format = ReportFormat::Jsonl;
        else fail(where + ".format", "must be 'csv' or 'jsonl'");
    }
    return plan;
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, "top level",
               {"schema_version", "corpus", "model", "custom_alphabets", "canaries",
                "estimation", "extraction", "scoring", "output", "seed", "jobs"});

    ExperimentConfig config;
    config.schema_version =
        static_cast<int>(get_u64(require(j, "schema_version", "top level"), "schema_version"));
    if (config.schema_version != kConfigSchemaVersion) {
        throw ConfigError("config: unsupported schema_version " +
                          std::to_string(config.schema_version) + " (expected " +
                          std::to_string(kConfigSchemaVersion) + ")");
    }

    config.corpus = parse_corpus(require(j, "corpus", "top level"), base_dir);
    config.model = parse_model(require(j, "model", "top level"));
    if (j.contains("custom_alphabets")) {
        config.custom_alphabets = parse_alphabets(j["custom_alphabets"]);
    }

    const json& canaries = require(j, "canaries", "top level");
    if (!canaries.is_array() || canaries.empty()) {
        fail("canaries", "expected a nonempty array");
    }
    std::set<std::string> ids;
    for (std::size_t i = 0; i < canaries.size(); ++i) {
        config.canaries.push_back(parse_canary(canaries[i], i));
        if (!ids.insert(config.canaries.back().id).second) {
            fail("canaries", "duplicate canary id '" + config.canaries.back().id + "'");
        }
    }

    if (j.contains("estimation")) config.estimation = parse_estimation(j["estimation"]);
    if (j.contains("extraction")) config.extraction = parse_extraction(j["extraction"]);
    if (j.contains("scoring")) {
        check_keys(j["scoring"], "scoring", {"mode"});
        const std::string mode = get_string(require(j["scoring"], "mode", "scoring"), "scoring.mode");
        if (mode == "full_sequence") config.scoring = ScoringMode::FullSequence;
        else if (mode == "holes_only") config.scoring = ScoringMode::HolesOnly;
        else fail("scoring.mode", "must be 'full_sequence' or 'holes_only'");
    }
    if (j.contains("output")) config.output = parse_output(j["output"]);
    if (j.contains("seed")) config.seed = get_u64(j["seed"], "seed");
    if (j.contains("jobs")) {
        config.jobs = static_cast<unsigned>(get_u64(j["jobs"], "jobs"));
        if (config.jobs < 1) fail("jobs", "must be >= 1");
    }

    // Every canary format must parse against the declared alphabets, and
    // word holes must exist when referenced; fail now, not mid-run.
    for (const CanaryPlan& plan : config.canaries) {
        try {
            parse_format(plan.format, config.custom_alphabets);
        } catch (const FormatError& e) {
            throw ConfigError("config: canary '" + plan.id + "': " + e.what());
        }
    }
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("failed reading config file: " + path);
    const std::string base_dir = std::filesystem::path(path).parent_path().string();
    return parse_config(buf.str(), base_dir.empty() ? "." : base_dir);
}

std::string example_config_text() {
    return R"({
  "schema_version": 1,
  "corpus": {
    "path": "data/corpus.txt",
    "tokenizer": "char",
    "limit": 0
  },
  "model": {
    "kind": "ngram",
    "order": 5,
    "smoothing": 0.01
  },
  "custom_alphabets": {},
  "canaries": [
    {
      "id": "pin",
      "format": "my pin is {d}{d}{d}{d}{d}{d}",
      "counts": [0, 1, 4],
      "seeds": [1, 2, 3],
      "placement": {"kind": "uniform_random"}
    }
  ],
  "estimation": {
    "m": 4096,
    "enumeration_cap": 100000000,
    "exact": true,
    "sampling": true,
    "extrapolation": true
  },
  "extraction": {
    "enabled": true,
    "batch_size": 1,
    "queue_cap": 10000000
  },
  "scoring": {"mode": "full_sequence"},
  "output": {"directory": "out", "format": "csv"},
  "seed": 1,
  "jobs": 1
}
)";
}

} // namespace memaudit
