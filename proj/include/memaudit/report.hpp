#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "memaudit/errors.hpp"

namespace memaudit {

inline constexpr int kReportSchemaVersion = 1;

/// One audited (canary, insertion count, seed, checkpoint) cell.
///
/// Unknown or not-computed numeric fields are NaN; they serialize as an
/// empty CSV cell / JSON null. `rank` is a decimal string because the
/// candidate space can exceed 64 bits. A non-empty `error` marks a row
/// whose computation failed; its metric fields are defaults.
struct ReportRow {
    std::string canary_id;
    std::string format;
    std::string canary_text;
    std::uint64_t insertion_count = 0;
    std::uint64_t seed = 0;
    std::uint64_t checkpoint = 0; // minibatch index; 0 for count-only models
    std::uint64_t epoch = 0;

    double canary_px = std::nan("");
    double space_log2 = std::nan("");
    double exact_exposure = std::nan("");
    std::string rank; // empty when rank was not computed
    std::uint64_t ties = 0;

    double sampling_exposure = std::nan("");
    std::uint64_t sampling_m = 0;
    bool sampling_saturated = false;

    double extrapolated_exposure = std::nan("");
    bool extrap_exceeds_space = false;
    bool extrap_underflow = false;
    double ks_d = std::nan("");
    double ks_p = std::nan("");

    bool extraction_ran = false;
    bool extracted = false;
    std::uint64_t expansions = 0;
    double best_px = std::nan("");

    std::string error;
};

enum class ReportFormat { Csv, Jsonl };

/// Field-by-field equality where NaN compares equal to NaN. This is the
/// round-trip invariant: parse(emit(rows)) == rows under rows_equal.
bool rows_equal(const ReportRow& a, const ReportRow& b);

struct Report {
    int schema_version = kReportSchemaVersion;
    std::vector<ReportRow> rows;
    bool finalized = false;
};

/// Streams rows to disk append-only: header first, one flushed record per
/// row, then a finalization marker. A crashed run leaves a valid,
/// parseable prefix whose `finalized` flag is false.
class ReportWriter {
public:
    ReportWriter(const std::string& path, ReportFormat format);
    ~ReportWriter();

    ReportWriter(const ReportWriter&) = delete;
    ReportWriter& operator=(const ReportWriter&) = delete;

    void write_row(const ReportRow& row);
    void finalize();

    std::uint64_t rows_written() const { return rows_written_; }

private:
    std::ofstream out_;
    ReportFormat format_;
    std::uint64_t rows_written_ = 0;
    bool finalized_ = false;
};

/// Writes a whole report (header, rows, finalization marker) to `path`.
void write_report(const std::string& path, ReportFormat format,
                  const std::vector<ReportRow>& rows);

/// Parses a report file. Accepts unfinalized files (crashed runs) and
/// reports them with finalized = false. Throws IoError on unreadable
/// files and ConfigError on malformed content.
Report read_report(const std::string& path, ReportFormat format);

/// Serialization helpers shared by the report and the CLI. Doubles are
/// written with 17 significant digits so parsing returns the same bits.
std::string format_double(double value);
std::string csv_escape(const std::string& field);

} // namespace memaudit
