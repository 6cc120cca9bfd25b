#include "doctr/numerics/gemm.hpp"

#include <cblas.h>

namespace doctr {

namespace {
// OpenBLAS picks its thread count from the environment; pin it once so that the
// reduction order, and hence every rounding, is fixed.
const bool g_blas_pinned = [] {
  openblas_set_num_threads(1);
  return true;
}();

CBLAS_TRANSPOSE op(bool t) { return t ? CblasTrans : CblasNoTrans; }
}  // namespace

template <>
void gemm<float>(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  (void)g_blas_pinned;
  cblas_sgemm(CblasRowMajor, op(trans_a), op(trans_b), m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <>
void gemm<double>(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
                  const double* b, int ldb, double beta, double* c, int ldc) {
  (void)g_blas_pinned;
  cblas_dgemm(CblasRowMajor, op(trans_a), op(trans_b), m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace doctr
