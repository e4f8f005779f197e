#pragma once

#include <optional>
#include <string>
#include <vector>

namespace casecohort {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const;
};

CsvTable read_csv(const std::string& path, char delimiter = ',');
void write_csv(const std::string& path, const CsvTable& table, char delimiter = ',');

// Strict double parse on a whole token; empty/"NA" are handled by callers.
std::optional<double> parse_double(const std::string& token);

// Shortest representation that parses back to the same double.
std::string format_double(double value);

}  // namespace casecohort
