#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace convflat {

/// Full-precision formatting for CSV cells (17 significant digits).
std::string fmt_full(double v);

/// 4 significant digits, for human-readable tables.
std::string fmt_sig4(double v);

void write_csv_row(std::ostream& os, const std::vector<std::string>& cells);

/// Minimal CSV reader for the fixed schemas this project writes:
/// comma-separated cells without quoting or embedded commas.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    static CsvTable read_file(const std::string& path);
    static CsvTable parse(std::istream& is);

    // throws io_error if the column is missing
    int column(const std::string& name) const;
};

/// Writes `content` to `path` via a temporary file and rename, so a failed
/// command does not leave a partial output behind.
void write_file_atomic(const std::string& path, const std::string& content);

} // namespace convflat
