#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dtsforge {

/// Comma-separated table with a mandatory header line. Fields are unquoted.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; throws FormatError if absent.
  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);

/// Shortest decimal text that parses back to the same double.
std::string format_real(double value);

double parse_real(std::string_view text, std::string_view context);
long parse_int(std::string_view text, std::string_view context);

}  // namespace dtsforge
