#include "memaudit/report.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include <json.hpp>

namespace memaudit {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::array<const char*, 25> kColumns = {
    "canary_id",      "format",
    "canary_text",    "insertion_count",
    "seed",           "checkpoint",
    "epoch",          "canary_px",
    "space_log2",     "exact_exposure",
    "rank",           "ties",
    "sampling_exposure",
    "sampling_m",     "sampling_saturated",
    "extrapolated_exposure",
    "extrap_exceeds_space",
    "extrap_underflow",
    "ks_d",           "ks_p",
    "extraction_ran", "extracted",
    "expansions",     "best_px",
    "error",
};

double parse_double_field(const std::string& field) {
    if (field.empty()) return std::nan("");
    char* end = nullptr;
    const double value = std::strtod(field.c_str(), &end);
    if (end != field.c_str() + field.size()) {
        throw ConfigError("report: bad numeric field '" + field + "'");
    }
    return value;
}

std::uint64_t parse_u64_field(const std::string& field) {
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        throw ConfigError("report: bad integer field '" + field + "'");
    }
    return value;
}

bool parse_bool_field(const std::string& field) {
    if (field == "0") return false;
    if (field == "1") return true;
    throw ConfigError("report: bad boolean field '" + field + "'");
}

std::string bool_field(bool value) { return value ? "1" : "0"; }

std::string double_field(double value) {
    if (std::isnan(value)) return "";
    return format_double(value);
}

std::string csv_record(const ReportRow& r) {
    const std::array<std::string, 25> fields = {
        r.canary_id,
        r.format,
        r.canary_text,
        std::to_string(r.insertion_count),
        std::to_string(r.seed),
        std::to_string(r.checkpoint),
        std::to_string(r.epoch),
        double_field(r.canary_px),
        double_field(r.space_log2),
        double_field(r.exact_exposure),
        r.rank,
        std::to_string(r.ties),
        double_field(r.sampling_exposure),
        std::to_string(r.sampling_m),
        bool_field(r.sampling_saturated),
        double_field(r.extrapolated_exposure),
        bool_field(r.extrap_exceeds_space),
        bool_field(r.extrap_underflow),
        double_field(r.ks_d),
        double_field(r.ks_p),
        bool_field(r.extraction_ran),
        bool_field(r.extracted),
        std::to_string(r.expansions),
        double_field(r.best_px),
        r.error,
    };
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        line += csv_escape(fields[i]);
    }
    line += '\n';
    return line;
}

ReportRow row_from_fields(const std::vector<std::string>& f) {
    if (f.size() != kColumns.size()) {
        throw ConfigError("report: expected " + std::to_string(kColumns.size()) +
                          " fields, got " + std::to_string(f.size()));
    }
    ReportRow r;
    r.canary_id = f[0];
    r.format = f[1];
    r.canary_text = f[2];
    r.insertion_count = parse_u64_field(f[3]);
    r.seed = parse_u64_field(f[4]);
    r.checkpoint = parse_u64_field(f[5]);
    r.epoch = parse_u64_field(f[6]);
    r.canary_px = parse_double_field(f[7]);
    r.space_log2 = parse_double_field(f[8]);
    r.exact_exposure = parse_double_field(f[9]);
    r.rank = f[10];
    r.ties = parse_u64_field(f[11]);
    r.sampling_exposure = parse_double_field(f[12]);
    r.sampling_m = parse_u64_field(f[13]);
    r.sampling_saturated = parse_bool_field(f[14]);
    r.extrapolated_exposure = parse_double_field(f[15]);
    r.extrap_exceeds_space = parse_bool_field(f[16]);
    r.extrap_underflow = parse_bool_field(f[17]);
    r.ks_d = parse_double_field(f[18]);
    r.ks_p = parse_double_field(f[19]);
    r.extraction_ran = parse_bool_field(f[20]);
    r.extracted = parse_bool_field(f[21]);
    r.expansions = parse_u64_field(f[22]);
    r.best_px = parse_double_field(f[23]);
    r.error = f[24];
    return r;
}

// JSON doubles: NaN -> null, inf -> "inf"/"-inf" (JSON has no non-finite
// numbers), finite -> number.
ordered_json json_double(double value) {
    if (std::isnan(value)) return nullptr;
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    return value;
}

double double_from_json(const ordered_json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nan("");
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "inf") return HUGE_VAL;
        if (s == "-inf") return -HUGE_VAL;
        throw ConfigError(std::string("report: bad numeric value for ") + key);
    }
    return v.get<double>();
}

ordered_json json_record(const ReportRow& r) {
    ordered_json j;
    j["type"] = "row";
    j["canary_id"] = r.canary_id;
    j["format"] = r.format;
    j["canary_text"] = r.canary_text;
    j["insertion_count"] = r.insertion_count;
    j["seed"] = r.seed;
    j["checkpoint"] = r.checkpoint;
    j["epoch"] = r.epoch;
    j["canary_px"] = json_double(r.canary_px);
    j["space_log2"] = json_double(r.space_log2);
    j["exact_exposure"] = json_double(r.exact_exposure);
    j["rank"] = r.rank;
    j["ties"] = r.ties;
    j["sampling_exposure"] = json_double(r.sampling_exposure);
    j["sampling_m"] = r.sampling_m;
    j["sampling_saturated"] = r.sampling_saturated;
    j["extrapolated_exposure"] = json_double(r.extrapolated_exposure);
    j["extrap_exceeds_space"] = r.extrap_exceeds_space;
    j["extrap_underflow"] = r.extrap_underflow;
    j["ks_d"] = json_double(r.ks_d);
    j["ks_p"] = json_double(r.ks_p);
    j["extraction_ran"] = r.extraction_ran;
    j["extracted"] = r.extracted;
    j["expansions"] = r.expansions;
    j["best_px"] = json_double(r.best_px);
    j["error"] = r.error;
    return j;
}

ReportRow row_from_json(const ordered_json& j) {
    ReportRow r;
    r.canary_id = j.at("canary_id").get<std::string>();
    r.format = j.at("format").get<std::string>();
    r.canary_text = j.at("canary_text").get<std::string>();
    r.insertion_count = j.at("insertion_count").get<std::uint64_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.checkpoint = j.at("checkpoint").get<std::uint64_t>();
    r.epoch = j.at("epoch").get<std::uint64_t>();
    r.canary_px = double_from_json(j, "canary_px");
    r.space_log2 = double_from_json(j, "space_log2");
    r.exact_exposure = double_from_json(j, "exact_exposure");
    r.rank = j.at("rank").get<std::string>();
    r.ties = j.at("ties").get<std::uint64_t>();
    r.sampling_exposure = double_from_json(j, "sampling_exposure");
    r.sampling_m = j.at("sampling_m").get<std::uint64_t>();
    r.sampling_saturated = j.at("sampling_saturated").get<bool>();
    r.extrapolated_exposure = double_from_json(j, "extrapolated_exposure");
    r.extrap_exceeds_space = j.at("extrap_exceeds_space").get<bool>();
    r.extrap_underflow = j.at("extrap_underflow").get<bool>();
    r.ks_d = double_from_json(j, "ks_d");
    r.ks_p = double_from_json(j, "ks_p");
    r.extraction_ran = j.at("extraction_ran").get<bool>();
    r.extracted = j.at("extracted").get<bool>();
    r.expansions = j.at("expansions").get<std::uint64_t>();
    r.best_px = double_from_json(j, "best_px");
    r.error = j.at("error").get<std::string>();
    return r;
}

std::string csv_header() {
    std::string line = "#schema=" + std::to_string(kReportSchemaVersion) + "\n";
    for (std::size_t i = 0; i < kColumns.size(); ++i) {
        if (i) line += ',';
        line += kColumns[i];
    }
    line += '\n';
    return line;
}

std::string jsonl_header() {
    ordered_json j;
    j["type"] = "header";
    j["schema_version"] = kReportSchemaVersion;
    return j.dump() + "\n";
}

std::string read_file_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open report file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("failed reading report file: " + path);
    return buf.str();
}

struct CsvDoc {
    std::vector<std::string> directives;
    std::vector<std::vector<std::string>> records;
};

// Full-file CSV scan. Quoted fields may contain commas, quotes ("") and
// newlines; a '#' that starts a record starts a directive line instead.
CsvDoc scan_csv(const std::string& text) {
    CsvDoc doc;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        if (text[i] == '\n' || text[i] == '\r') {
            ++i;
            continue;
        }
        if (text[i] == '#') {
            std::size_t end = text.find('\n', i);
            if (end == std::string::npos) end = n;
            std::string line = text.substr(i, end - i);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            doc.directives.push_back(std::move(line));
            i = end;
            continue;
        }
        std::vector<std::string> fields;
        std::string cur;
        bool quoted = false;
        bool done = false;
        bool at_field_start = true;
        while (i < n && !done) {
            const char c = text[i];
            if (quoted) {
                if (c == '"') {
                    if (i + 1 < n && text[i + 1] == '"') {
                        cur += '"';
                        i += 2;
                    } else {
                        quoted = false;
                        ++i;
                    }
                } else {
                    cur += c;
                    ++i;
                }
                continue;
            }
            switch (c) {
                case ',':
                    fields.push_back(std::move(cur));
                    cur.clear();
                    at_field_start = true;
                    ++i;
                    continue;
                case '\r':
                    ++i;
                    continue;
                case '\n':
                    done = true;
                    ++i;
                    continue;
                case '"':
                    if (!at_field_start) throw ConfigError("report: stray quote in CSV field");
                    quoted = true;
                    at_field_start = false;
                    ++i;
                    continue;
                default:
                    cur += c;
                    at_field_start = false;
                    ++i;
                    continue;
            }
        }
        if (quoted) throw ConfigError("report: unterminated quoted CSV field");
        fields.push_back(std::move(cur));
        doc.records.push_back(std::move(fields));
    }
    return doc;
}

Report read_csv_report(const std::string& text) {
    Report report;
    const CsvDoc doc = scan_csv(text);

    bool saw_schema = false;
    for (const std::string& d : doc.directives) {
        if (d.rfind("#schema=", 0) == 0) {
            report.schema_version = static_cast<int>(parse_u64_field(d.substr(8)));
            saw_schema = true;
        } else if (d.rfind("#finalized rows=", 0) == 0) {
            const std::uint64_t declared = parse_u64_field(d.substr(16));
            report.finalized = true;
            if (declared + 1 != doc.records.size()) { // +1 for the header record
                throw ConfigError("report: finalization marker declares " +
                                  std::to_string(declared) + " rows, file has " +
                                  std::to_string(doc.records.size() ? doc.records.size() - 1 : 0));
            }
        } else {
            throw ConfigError("report: unknown directive '" + d + "'");
        }
    }
    if (!saw_schema) throw ConfigError("report: missing #schema directive");
    if (report.schema_version != kReportSchemaVersion) {
        throw ConfigError("report: unsupported schema version " +
                          std::to_string(report.schema_version));
    }
    if (doc.records.empty()) throw ConfigError("report: missing CSV header row");
    const auto& header = doc.records.front();
    if (header.size() != kColumns.size()) {
        throw ConfigError("report: CSV header has wrong column count");
    }
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        if (header[c] != kColumns[c]) {
            throw ConfigError("report: unexpected CSV column '" + header[c] + "'");
        }
    }
    for (std::size_t rec = 1; rec < doc.records.size(); ++rec) {
        report.rows.push_back(row_from_fields(doc.records[rec]));
    }
    return report;
}

Report read_jsonl_report(const std::string& text) {
    Report report;
    bool saw_header = false;
    bool saw_final = false;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(start, end - start);
        start = end + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ConfigError(std::string("report: bad JSONL line: ") + e.what());
        }
        const std::string type = j.value("type", "");
        if (type == "header") {
            report.schema_version = j.at("schema_version").get<int>();
            if (report.schema_version != kReportSchemaVersion) {
                throw ConfigError("report: unsupported schema version " +
                                  std::to_string(report.schema_version));
            }
            saw_header = true;
        } else if (type == "row") {
            if (saw_final) throw ConfigError("report: row after finalization marker");
            report.rows.push_back(row_from_json(j));
        } else if (type == "final") {
            const auto declared = j.at("rows").get<std::uint64_t>();
            if (declared != report.rows.size()) {
                throw ConfigError("report: finalization marker declares " +
                                  std::to_string(declared) + " rows, file has " +
                                  std::to_string(report.rows.size()));
            }
            report.finalized = true;
            saw_final = true;
        } else {
            throw ConfigError("report: unknown JSONL record type '" + type + "'");
        }
    }
    if (!saw_header) throw ConfigError("report: missing JSONL header record");
    return report;
}

} // namespace

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

std::string csv_escape(const std::string& field) {
    const bool needs_quotes =
        field.find_first_of(",\"\r\n") != std::string::npos ||
        (!field.empty() && field.front() == '#');
    if (!needs_quotes) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

bool rows_equal(const ReportRow& a, const ReportRow& b) {
    const auto deq = [](double x, double y) {
        return (std::isnan(x) && std::isnan(y)) || x == y;
    };
    return a.canary_id == b.canary_id && a.format == b.format &&
           a.canary_text == b.canary_text && a.insertion_count == b.insertion_count &&
           a.seed == b.seed && a.checkpoint == b.checkpoint && a.epoch == b.epoch &&
           deq(a.canary_px, b.canary_px) && deq(a.space_log2, b.space_log2) &&
           deq(a.exact_exposure, b.exact_exposure) && a.rank == b.rank &&
           a.ties == b.ties && deq(a.sampling_exposure, b.sampling_exposure) &&
           a.sampling_m == b.sampling_m && a.sampling_saturated == b.sampling_saturated &&
           deq(a.extrapolated_exposure, b.extrapolated_exposure) &&
           a.extrap_exceeds_space == b.extrap_exceeds_space &&
           a.extrap_underflow == b.extrap_underflow && deq(a.ks_d, b.ks_d) &&
           deq(a.ks_p, b.ks_p) && a.extraction_ran == b.extraction_ran &&
           a.extracted == b.extracted && a.expansions == b.expansions &&
           deq(a.best_px, b.best_px) && a.error == b.error;
}

ReportWriter::ReportWriter(const std::string& path, ReportFormat format)
    : out_(path, std::ios::binary | std::ios::trunc), format_(format) {
    if (!out_) throw IoError("cannot open report file for writing: " + path);
    out_ << (format_ == ReportFormat::Csv ? csv_header() : jsonl_header());
    out_.flush();
    if (!out_) throw IoError("failed writing report header: " + path);
}

ReportWriter::~ReportWriter() = default;

void ReportWriter::write_row(const ReportRow& row) {
    if (finalized_) throw IoError("report already finalized");
    if (format_ == ReportFormat::Csv) {
        out_ << csv_record(row);
    } else {
        out_ << json_record(row).dump() << '\n';
    }
    out_.flush();
    if (!out_) throw IoError("failed writing report row");
    ++rows_written_;
}

void ReportWriter::finalize() {
    if (finalized_) return;
    if (format_ == ReportFormat::Csv) {
        out_ << "#finalized rows=" << rows_written_ << '\n';
    } else {
        ordered_json j;
        j["type"] = "final";
        j["rows"] = rows_written_;
        out_ << j.dump() << '\n';
    }
    out_.flush();
    if (!out_) throw IoError("failed writing report finalization marker");
    finalized_ = true;
}

void write_report(const std::string& path, ReportFormat format,
                  const std::vector<ReportRow>& rows) {
    ReportWriter writer(path, format);
    for (const ReportRow& row : rows) writer.write_row(row);
    writer.finalize();
}

Report read_report(const std::string& path, ReportFormat format) {
    const std::string text = read_file_text(path);
    return format == ReportFormat::Csv ? read_csv_report(text) : read_jsonl_report(text);
}

} // namespace memaudit
