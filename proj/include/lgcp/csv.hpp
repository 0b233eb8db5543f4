#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lgcp::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  // 1-based line number in the source file for each row.
  std::vector<std::size_t> line_numbers;

  int column(std::string_view name) const;  // -1 when absent
};

// Reads a comma-delimited file with a header row. Lines starting with '#'
// are comments (our own outputs carry a provenance line).
Table read(const std::filesystem::path& path);
Table parse(std::string_view text);

std::vector<std::string> split_line(std::string_view line, char delim = ',');
std::string trim(std::string_view s);

double parse_double(std::string_view s);    // throws std::invalid_argument
std::int64_t parse_int(std::string_view s);  // throws std::invalid_argument

// Shortest representation that round-trips through parse_double.
std::string format_double(double v);

// Writes content to path via a sibling temporary file and rename.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace lgcp::csv
