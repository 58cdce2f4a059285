#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace diffusion {

/// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 matrices.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
  Mat(int r, int c, std::vector<double> values) : rows(r), cols(c), a(std::move(values)) {
    assert(a.size() == static_cast<std::size_t>(r) * c);
  }

  static Mat row(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Mat(1, n, std::move(v));
  }
  static Mat col(std::vector<double> v) {
    const int n = static_cast<int>(v.size());
    return Mat(n, 1, std::move(v));
  }

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  std::size_t size() const { return a.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  std::vector<double> row_vector(int r) const {
    return std::vector<double>(a.begin() + static_cast<std::ptrdiff_t>(r) * cols,
                               a.begin() + static_cast<std::ptrdiff_t>(r + 1) * cols);
  }
  void set_row(int r, const std::vector<double>& v) {
    assert(static_cast<int>(v.size()) == cols);
    for (int c = 0; c < cols; ++c) (*this)(r, c) = v[c];
  }
};

// C += A * B
void gemm_nn_acc(const Mat& A, const Mat& B, Mat& C);
// C += A * B^T
void gemm_nt_acc(const Mat& A, const Mat& B, Mat& C);
// C += A^T * B
void gemm_tn_acc(const Mat& A, const Mat& B, Mat& C);

Mat mat_mul(const Mat& A, const Mat& B);
Mat mat_mul_nt(const Mat& A, const Mat& B);

}  // namespace diffusion
