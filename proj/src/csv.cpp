#include "casecohort/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>

#include "casecohort/error.hpp"

namespace casecohort {

int CsvTable::column_index(const std::string& name) const {
  for (size_t k = 0; k < header.size(); ++k)
    if (header[k] == name) return static_cast<int>(k);
  return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == delimiter) {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

CsvTable read_csv(const std::string& path, char delimiter) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "read_csv", "cannot open file: " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorCode::ParseError, "read_csv", "empty file: " + path);
  table.header = split_line(line, delimiter);
  const size_t ncol = table.header.size();
  size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (line.empty()) continue;
    auto fields = split_line(line, delimiter);
    if (fields.size() != ncol)
      fail(ErrorCode::ParseError, "read_csv",
           "row " + std::to_string(row_no) + ": expected " + std::to_string(ncol) +
               " fields, got " + std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  return table;
}

void write_csv(const std::string& path, const CsvTable& table, char delimiter) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "write_csv", "cannot open file for writing: " + path);
  auto emit = [&](const std::vector<std::string>& fields) {
    for (size_t k = 0; k < fields.size(); ++k) {
      if (k) out << delimiter;
      out << fields[k];
    }
    out << '\n';
  };
  emit(table.header);
  for (const auto& row : table.rows) emit(row);
}

std::optional<double> parse_double(const std::string& token) {
  if (token.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) return std::nullopt;
  return value;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "NA";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace casecohort
