#include "mmeval/csv.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace mmeval {

std::vector<CsvRow> parse_csv(std::string_view text) {
    std::vector<CsvRow> rows;
    CsvRow row;
    std::string field;
    bool quoted = false;
    bool row_has_content = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
    };
    auto end_row = [&] {
        end_field();
        if (row_has_content || row.size() > 1 || !row.front().empty()) rows.push_back(std::move(row));
        row.clear();
        row_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"': quoted = true; row_has_content = true; break;
            case ',': end_field(); break;
            case '\r': break;
            case '\n': end_row(); break;
            default: field.push_back(c);
        }
    }
    if (quoted) throw std::runtime_error("unterminated quoted CSV field");
    if (!field.empty() || !row.empty() || row_has_content) end_row();
    return rows;
}

bool CsvTable::has_column(std::string_view name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
}

CsvTable parse_csv_table(std::string_view text) {
    auto rows = parse_csv(text);
    CsvTable table;
    if (rows.empty()) return table;
    table.header = rows.front();
    for (auto& h : table.header) {
        h.erase(0, h.find_first_not_of(" \t"));
        h.erase(h.find_last_not_of(" \t") + 1);
    }
    // Strip a UTF-8 byte order mark.
    if (!table.header.empty() && table.header[0].starts_with("\xef\xbb\xbf")) table.header[0].erase(0, 3);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != table.header.size()) {
            throw std::runtime_error("CSV row " + std::to_string(r + 1) + " has " + std::to_string(rows[r].size()) +
                                     " fields, header has " + std::to_string(table.header.size()));
        }
        std::map<std::string, std::string> named;
        for (std::size_t c = 0; c < rows[r].size(); ++c) named[table.header[c]] = rows[r][c];
        table.rows.push_back(std::move(named));
    }
    return table;
}

CsvTable read_csv_table(const std::filesystem::path& path) { return parse_csv_table(read_file(path)); }

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace mmeval
