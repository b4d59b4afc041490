#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mmeval {

// RFC 4180 style: quoted fields may contain commas, doubled quotes and newlines.
using CsvRow = std::vector<std::string>;

std::vector<CsvRow> parse_csv(std::string_view text);

// First row is the header; each following row becomes column -> value.
// Throws std::runtime_error when a row's width differs from the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::map<std::string, std::string>> rows;

    bool has_column(std::string_view name) const;
};

CsvTable read_csv_table(const std::filesystem::path& path);
CsvTable parse_csv_table(std::string_view text);

std::string csv_escape(std::string_view field);

std::string read_file(const std::filesystem::path& path);

}  // namespace mmeval
