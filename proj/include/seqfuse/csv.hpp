#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "seqfuse/errors.hpp"

namespace seqfuse {

// Plain comma-separated values, no quoting: fields here are numbers and
// identifiers that never contain commas or newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<int>(i);
    }
    throw ContractError("csv: no column named '" + name + "'");
  }
};

// Shortest decimal digits that round-trip a double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::string join_csv(const std::vector<std::string>& fields) {
  std::string line;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += fields[i];
  }
  return line;
}

inline void write_csv(std::ostream& out, const CsvTable& t) {
  out << join_csv(t.header) << "\n";
  for (const auto& row : t.rows) out << join_csv(row) << "\n";
}

inline void write_csv_file(const std::string& path, const CsvTable& t) {
  std::ofstream out(path);
  require(out.good(), "cannot open '" + path + "' for writing");
  write_csv(out, t);
  require(out.good(), "failed writing '" + path + "'");
}

inline CsvTable parse_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      require(fields.size() == t.header.size(),
              "csv: row has " + std::to_string(fields.size()) + " fields, header has " +
                  std::to_string(t.header.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  require(!first, "csv: empty input");
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open '" + path + "'");
  return parse_csv(in);
}

}  // namespace seqfuse
