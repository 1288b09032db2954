#pragma once

#include <cstddef>

namespace saldrn {

// Row-major products with a fixed reduction order: every output element is
// accumulated over k in ascending order, independent of M and N. Results are
// therefore bitwise stable under any split of the output columns or rows.

/// C[M x N] (+)= A[M x K] * B[K x N]
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc,
             bool accumulate);

/// C[M x N] (+)= A[M x K] * B[N x K]^T
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc,
             bool accumulate);

}  // namespace saldrn
