#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mfsde {

// Minimal CSV output: optional "# ..." comment lines, one header line, then
// data rows. Cells are preformatted strings; numeric helpers below produce
// shortest round-trip decimal forms so identical doubles always render to
// identical bytes.
struct CsvTable {
    std::vector<std::string> comments;  // written as "# <line>"
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string csv_cell(double value);
std::string csv_cell(std::size_t value);
std::string csv_cell(long long value);

std::string render_csv(const CsvTable& table);

// Writes render_csv(table) to path, creating parent directories is NOT done
// here; callers resolve the directory. Throws std::runtime_error on I/O
// failure.
void write_csv_file(const std::string& path, const CsvTable& table);

}  // namespace mfsde
