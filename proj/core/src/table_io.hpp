#pragma once

// Numeric CSV tables with a header row, shared by the file formats.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "headneck/types.hpp"

namespace headneck::detail {

struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw IoError("missing column '" + name + "'");
  }
  std::vector<double> values(std::size_t col) const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r[col]);
    return v;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string c; std::getline(ss, c, ',');) {
    if (!c.empty() && c.back() == '\r') c.pop_back();
    out.push_back(c);
  }
  return out;
}

inline NumericTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  NumericTable t;
  std::string line;
  std::size_t lineno = 0;
  // Leading '#' lines carry provenance such as the config hash.
  bool got = false;
  while ((got = static_cast<bool>(std::getline(in, line)))) {
    ++lineno;
    if (!line.starts_with('#')) break;
  }
  if (!got) throw IoError(path.string() + ": empty file");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(t.header.size()) + " fields, got " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || *end != '\0') {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number: '" + c + "'");
      }
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void write_numeric_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                              const std::vector<std::vector<double>>& rows, const std::string& config_hash = {}) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  if (!config_hash.empty()) std::fprintf(f, "# config_hash=%s\n", config_hash.c_str());
  for (std::size_t i = 0; i < header.size(); ++i) std::fprintf(f, "%s%s", i ? "," : "", header[i].c_str());
  std::fputc('\n', f);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) std::fprintf(f, i ? ",%.17g" : "%.17g", r[i]);
    std::fputc('\n', f);
  }
  const bool ok = std::ferror(f) == 0;
  if (std::fclose(f) != 0 || !ok) throw IoError("write failed: " + path.string());
}

}  // namespace headneck::detail
