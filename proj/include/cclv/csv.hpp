#pragma once

// Minimal CSV reading/writing used by the file formats in this project.
// Lines starting with '#' are comments; the first non-comment line is the header.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cclv::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // source line of each row, 1-based

    /// Column index by name; throws std::runtime_error if absent.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const;
};

Table read(const std::filesystem::path& path);
Table parse(std::string_view text, std::string_view source_name = "<memory>");

/// Strict decimal parse of the whole field; throws std::runtime_error on junk.
double to_double(std::string_view field);

/// Shortest representation that parses back to the same double.
std::string format(double value);

std::vector<std::string> split(std::string_view line, char sep = ',');

}  // namespace cclv::csv
