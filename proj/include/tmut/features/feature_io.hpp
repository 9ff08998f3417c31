#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tmut/features/config.hpp"

namespace tmut {

struct FeatureTable {
  std::vector<std::string> names;
  Matrix rows;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string features_to_csv(const FeatureTable& t) {
  std::ostringstream os;
  for (std::size_t j = 0; j < t.names.size(); ++j) os << (j ? "," : "") << t.names[j];
  os << '\n';
  for (const auto& r : t.rows) {
    if (r.size() != t.names.size()) throw DimensionMismatch("feature csv: row width differs from header");
    for (std::size_t j = 0; j < r.size(); ++j) os << (j ? "," : "") << format_double(r[j]);
    os << '\n';
  }
  return os.str();
}

inline FeatureTable features_from_csv(const std::string& text) {
  FeatureTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) return t;
  {
    std::istringstream h(line);
    std::string cell;
    while (std::getline(h, cell, ',')) t.names.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Vec r;
    std::istringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) r.push_back(std::stod(cell));
    if (r.size() != t.names.size()) throw DimensionMismatch("feature csv: row width differs from header");
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tmut
