#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace leakage {

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);
double parse_double(std::string_view s);
int parse_int(std::string_view s);

/// Splits on commas; no quoting (none of the artifact's CSV files need it).
std::vector<std::string> split_csv_line(std::string_view line);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view content);
void write_binary(const std::filesystem::path& path, const std::vector<char>& bytes);
std::vector<char> read_binary(const std::filesystem::path& path);

}  // namespace leakage
