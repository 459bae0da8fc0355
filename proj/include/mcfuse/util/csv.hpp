#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mcfuse::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws DataError when absent.
  std::size_t column(std::string_view name) const;
};

/// Reads a comma-separated file with a header row. Fields may be double-quoted;
/// inside quotes, backslash escapes a quote or backslash. Blank lines are skipped.
Table read(const std::filesystem::path& path);

/// Quotes a field when it contains separators, quotes, backslashes or newlines.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

}  // namespace mcfuse::csv
