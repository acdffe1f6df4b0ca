#pragma once

#include <string>
#include <vector>

namespace riskforge::csv {

// RFC-4180-style rows: fields with commas, quotes or newlines are quoted,
// embedded quotes doubled. Empty field = null by repository convention.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

Table read_file(const std::string& path);
Table parse(const std::string& text);

std::string escape(const std::string& field);
std::string join_row(const std::vector<std::string>& fields);
void write_file(const std::string& path, const Table& table);

} // namespace riskforge::csv
