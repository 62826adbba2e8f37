#include "archshape/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "archshape/error.hpp"

namespace archshape {

int pgm_level(double v) {
  if (!(v > 0.0)) return 0;
  return static_cast<int>(std::min(255.0, std::floor(v * 255.0 + 0.5)));
}

std::string format_pgm(const Tensor& matrix) {
  require(matrix.rank() == 2, ErrorKind::shape, "PGM export needs a matrix");
  const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
  std::string out = "P2\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out += ' ';
      out += std::to_string(pgm_level(matrix[r * cols + c]));
    }
    out += '\n';
  }
  return out;
}

std::string format_matrix_csv(const Tensor& matrix) {
  require(matrix.rank() == 2, ErrorKind::shape, "CSV export needs a matrix");
  const std::size_t rows = matrix.dim(0), cols = matrix.dim(1);
  std::string out;
  char buf[40];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof buf, c ? ",%.17g" : "%.17g", matrix[r * cols + c]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace archshape
