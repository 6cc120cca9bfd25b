#pragma once

namespace doctr {

/// Row-major C = alpha * op(A) * op(B) + beta * C, where op(A) is m x k and op(B) is k x n.
/// Leading dimensions are the stored row lengths. Runs single-threaded so results are
/// bit-reproducible.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda, const T* b,
          int ldb, T beta, T* c, int ldc);

}  // namespace doctr
