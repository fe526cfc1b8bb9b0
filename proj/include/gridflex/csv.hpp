#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gridflex/errors.hpp"

namespace gridflex {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return header.size(); }
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim surrounding whitespace
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline double parse_cell(const std::string& cell, std::size_t line_no,
                         std::size_t col) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
    throw ParseError("csv: non-numeric cell '" + cell + "' at line " +
                     std::to_string(line_no) + ", column " +
                     std::to_string(col + 1));
  }
  return v;
}

}  // namespace detail

// Numeric CSV with one header row. Ragged rows and non-numeric cells are
// reported with line/column.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = detail::split_line(line);
    if (line_no == 1) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ParseError("csv: line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(t.header.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      row[c] = detail::parse_cell(cells[c], line_no, c);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ParseError("csv: empty file " + path.string());
  return t;
}

// %.17g round-trips IEEE doubles exactly; the comparison pipeline re-reads
// its own CSVs and must see identical bits.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t c = 0; c < header.size(); ++c) {
    out << (c ? "," : "") << header[c];
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c ? "," : "") << format_double(row[c]);
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace gridflex
