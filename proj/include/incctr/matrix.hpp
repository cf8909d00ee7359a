#pragma once

#include <cstddef>
#include <vector>

namespace incctr {

// Row-major dense matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  double* row_ptr(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row_ptr(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }

  std::size_t size() const { return a.size(); }
};

}  // namespace incctr
