// Minimal numeric CSV reading: quoted fields, optional header, optional id
// and label columns.

#pragma once

#include "nsnmf/common.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>

namespace nsnmf::csv {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(trim(field));
  return fields;
}

inline std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

struct Table {
  std::vector<std::string> header; // empty when the file has none
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers; // 1-based source line of each row
};

// A first line containing any non-numeric field is taken as the header.
inline Table read_table(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    if (first) {
      first = false;
      const bool header = std::any_of(fields.begin(), fields.end(),
                                      [](const std::string& f) { return !parse_number(f); });
      if (header) {
        t.header = std::move(fields);
        continue;
      }
    }
    if (!t.rows.empty() && fields.size() != t.rows.front().size())
      throw InvalidInput("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(t.rows.front().size()) + " fields, found " +
                         std::to_string(fields.size()));
    if (!t.header.empty() && fields.size() != t.header.size())
      throw InvalidInput("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(t.header.size()) + " fields, found " +
                         std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  return t;
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open input file: " + path);
  return read_table(in);
}

// Resolves a column given by header name or 0-based index.
inline std::size_t column_index(const Table& t, const std::string& spec) {
  if (!t.header.empty()) {
    const auto it = std::find(t.header.begin(), t.header.end(), spec);
    if (it != t.header.end()) return static_cast<std::size_t>(it - t.header.begin());
  }
  std::size_t idx = 0;
  const auto [ptr, ec] = std::from_chars(spec.data(), spec.data() + spec.size(), idx);
  const std::size_t width = t.rows.empty() ? t.header.size() : t.rows.front().size();
  if (ec != std::errc() || ptr != spec.data() + spec.size() || idx >= width)
    throw InvalidInput("unknown column: " + spec);
  return idx;
}

// Numeric matrix from every column not listed in `skip`. Missing or
// non-numeric values are rejected with their line number.
inline Matrix numeric_columns(const Table& t, const std::vector<std::size_t>& skip) {
  if (t.rows.empty()) throw InvalidInput("input contains no data rows");
  const std::size_t width = t.rows.front().size();
  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < width; ++c)
    if (std::find(skip.begin(), skip.end(), c) == skip.end()) keep.push_back(c);
  if (keep.empty()) throw InvalidInput("input has no numeric attribute columns");
  Matrix m(static_cast<Index>(t.rows.size()), static_cast<Index>(keep.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < keep.size(); ++c) {
      const auto& field = t.rows[r][keep[c]];
      const auto v = parse_number(field);
      if (!v || !std::isfinite(*v))
        throw InvalidInput("line " + std::to_string(t.line_numbers[r]) + ", column " +
                           std::to_string(keep[c]) + ": " +
                           (field.empty() ? std::string("missing value")
                                          : "non-numeric value '" + field + "'"));
      m(static_cast<Index>(r), static_cast<Index>(c)) = *v;
    }
  return m;
}

inline std::vector<std::string> column_strings(const Table& t, std::size_t col) {
  std::vector<std::string> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) out.push_back(row[col]);
  return out;
}

// Observations without labels: optional id column, everything else numeric.
inline DataMatrix read_observations(const Table& t, const std::optional<std::string>& id_column) {
  std::vector<std::size_t> skip;
  std::vector<std::string> ids;
  if (id_column) {
    const auto c = column_index(t, *id_column);
    skip.push_back(c);
    ids = column_strings(t, c);
  }
  return DataMatrix(numeric_columns(t, skip), std::move(ids));
}

}  // namespace nsnmf::csv
