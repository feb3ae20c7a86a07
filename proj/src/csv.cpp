#include "mfsde/csv.hpp"

#include "mfsde/common.hpp"

#include <fstream>
#include <sstream>

namespace mfsde {

std::string csv_cell(double value) { return format_double(value); }

std::string csv_cell(std::size_t value) { return std::to_string(value); }

std::string csv_cell(long long value) { return std::to_string(value); }

std::string render_csv(const CsvTable& table) {
    std::ostringstream out;
    for (const std::string& line : table.comments) {
        out << "# " << line << '\n';
    }
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (j > 0) out << ',';
        out << table.header[j];
    }
    out << '\n';
    for (const auto& row : table.rows) {
        require(row.size() == table.header.size(),
                "render_csv: row width does not match header");
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j > 0) out << ',';
            out << row[j];
        }
        out << '\n';
    }
    return out.str();
}

void write_csv_file(const std::string& path, const CsvTable& table) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("write_csv_file: cannot open " + path);
    }
    out << render_csv(table);
    out.flush();
    if (!out) {
        throw std::runtime_error("write_csv_file: write failed for " + path);
    }
}

}  // namespace mfsde
