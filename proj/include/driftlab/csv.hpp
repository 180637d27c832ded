#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace driftlab::csv {

/// RFC 4180 quoting when the field contains a comma, quote or newline.
std::string escape(std::string_view field);

/// Shortest decimal text that round-trips to the same double; empty for NaN.
std::string number(double value);
std::string number(const std::optional<double>& value);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column index by name; throws MalformedLine when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

Table parse(std::string_view text);
/// Throws MissingUpstream when the file is absent.
Table read(const std::filesystem::path& path);

/// Empty cell -> nullopt.
std::optional<double> to_optional_double(std::string_view cell);
double to_double(std::string_view cell);

void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace driftlab::csv
