#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpsim/core.hpp"

namespace dpsim {

// Plain numeric CSV: one point per row, comma-separated doubles, no header by
// default. An empty file parses to an empty matrix.
inline Matrix read_csv(const std::string& path, bool skip_header = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  Matrix m;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_header && lineno == 1) continue;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str())
        throw std::runtime_error("read_csv: bad number '" + cell + "' at line " +
                                 std::to_string(lineno) + " of " + path);
      row.push_back(v);
    }
    if (first) {
      m.cols = row.size();
      first = false;
    } else if (row.size() != m.cols) {
      throw std::runtime_error("read_csv: ragged row at line " + std::to_string(lineno) +
                               " of " + path);
    }
    m.data.insert(m.data.end(), row.begin(), row.end());
    ++m.rows;
  }
  return m;
}

// Splits a labeled matrix (last column = integer label) into features+labels.
inline std::pair<Matrix, std::vector<int>> split_labels(const Matrix& labeled) {
  if (labeled.cols < 2) throw std::runtime_error("split_labels: need at least 2 columns");
  Matrix features(labeled.rows, labeled.cols - 1);
  std::vector<int> labels(labeled.rows);
  for (std::size_t i = 0; i < labeled.rows; ++i) {
    for (std::size_t j = 0; j + 1 < labeled.cols; ++j) features.at(i, j) = labeled.at(i, j);
    labels[i] = static_cast<int>(std::llround(labeled.at(i, labeled.cols - 1)));
  }
  return {std::move(features), std::move(labels)};
}

}  // namespace dpsim
