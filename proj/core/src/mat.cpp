#include "diffusion/mat.hpp"

namespace diffusion {

void gemm_nn_acc(const Mat& A, const Mat& B, Mat& C) {
  assert(A.cols == B.rows && C.rows == A.rows && C.cols == B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int k = 0; k < A.cols; ++k) {
      const double aik = A(i, k);
      if (aik == 0.0) continue;
      const double* brow = &B.a[static_cast<std::size_t>(k) * B.cols];
      double* crow = &C.a[static_cast<std::size_t>(i) * C.cols];
      for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

void gemm_nt_acc(const Mat& A, const Mat& B, Mat& C) {
  assert(A.cols == B.cols && C.rows == A.rows && C.cols == B.rows);
  for (int i = 0; i < A.rows; ++i) {
    const double* arow = &A.a[static_cast<std::size_t>(i) * A.cols];
    for (int j = 0; j < B.rows; ++j) {
      const double* brow = &B.a[static_cast<std::size_t>(j) * B.cols];
      double acc = 0.0;
      for (int k = 0; k < A.cols; ++k) acc += arow[k] * brow[k];
      C(i, j) += acc;
    }
  }
}

void gemm_tn_acc(const Mat& A, const Mat& B, Mat& C) {
  assert(A.rows == B.rows && C.rows == A.cols && C.cols == B.cols);
  for (int k = 0; k < A.rows; ++k) {
    const double* arow = &A.a[static_cast<std::size_t>(k) * A.cols];
    const double* brow = &B.a[static_cast<std::size_t>(k) * B.cols];
    for (int i = 0; i < A.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = &C.a[static_cast<std::size_t>(i) * C.cols];
      for (int j = 0; j < B.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

Mat mat_mul(const Mat& A, const Mat& B) {
  Mat C(A.rows, B.cols);
  gemm_nn_acc(A, B, C);
  return C;
}

Mat mat_mul_nt(const Mat& A, const Mat& B) {
  Mat C(A.rows, B.rows);
  gemm_nt_acc(A, B, C);
  return C;
}

}  // namespace diffusion
