#include "saldrn/gemm.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <type_traits>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace saldrn {
namespace {

// Every kernel below computes each output element as one fma chain over k in
// ascending order (k blocks round-trip the partial sum through C, which is
// exact). Tile shapes and column splits therefore never change a result.

template <typename T>
void reference_nn(int rows, int cols, int K, const T* A, int lda, const T* B, int ldb, T* C,
                  int ldc, bool accumulate) {
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < cols; ++j) {
      T acc = accumulate ? C[static_cast<std::ptrdiff_t>(r) * ldc + j] : T(0);
      for (int k = 0; k < K; ++k) {
        acc = std::fma(A[static_cast<std::ptrdiff_t>(r) * lda + k],
                       B[static_cast<std::ptrdiff_t>(k) * ldb + j], acc);
      }
      C[static_cast<std::ptrdiff_t>(r) * ldc + j] = acc;
    }
  }
}

#if defined(__AVX512F__)

constexpr int kKc = 256;
constexpr int kNc = 256;

// C[MR x 32] (+)= Ap[k][MR] * B[k][32]; Ap is the packed A panel.
template <int MR>
inline void kernel_f32x32(int K, const float* Ap, const float* B, int ldb, float* C, int ldc,
                          bool accumulate) {
  __m512 c0[MR], c1[MR];
  for (int r = 0; r < MR; ++r) {
    if (accumulate) {
      c0[r] = _mm512_loadu_ps(C + static_cast<std::ptrdiff_t>(r) * ldc);
      c1[r] = _mm512_loadu_ps(C + static_cast<std::ptrdiff_t>(r) * ldc + 16);
    } else {
      c0[r] = _mm512_setzero_ps();
      c1[r] = _mm512_setzero_ps();
    }
  }
  for (int k = 0; k < K; ++k) {
    const __m512 b0 = _mm512_loadu_ps(B + static_cast<std::ptrdiff_t>(k) * ldb);
    const __m512 b1 = _mm512_loadu_ps(B + static_cast<std::ptrdiff_t>(k) * ldb + 16);
#pragma GCC unroll 16
    for (int r = 0; r < MR; ++r) {
      const __m512 a = _mm512_set1_ps(Ap[k * MR + r]);
      c0[r] = _mm512_fmadd_ps(a, b0, c0[r]);
      c1[r] = _mm512_fmadd_ps(a, b1, c1[r]);
    }
  }
  for (int r = 0; r < MR; ++r) {
    _mm512_storeu_ps(C + static_cast<std::ptrdiff_t>(r) * ldc, c0[r]);
    _mm512_storeu_ps(C + static_cast<std::ptrdiff_t>(r) * ldc + 16, c1[r]);
  }
}

template <int MR>
inline void kernel_f32x16(int K, const float* Ap, const float* B, int ldb, float* C, int ldc,
                          bool accumulate) {
  __m512 c0[MR];
  for (int r = 0; r < MR; ++r)
    c0[r] = accumulate ? _mm512_loadu_ps(C + static_cast<std::ptrdiff_t>(r) * ldc)
                       : _mm512_setzero_ps();
  for (int k = 0; k < K; ++k) {
    const __m512 b0 = _mm512_loadu_ps(B + static_cast<std::ptrdiff_t>(k) * ldb);
#pragma GCC unroll 16
    for (int r = 0; r < MR; ++r) {
      c0[r] = _mm512_fmadd_ps(_mm512_set1_ps(Ap[k * MR + r]), b0, c0[r]);
    }
  }
  for (int r = 0; r < MR; ++r) _mm512_storeu_ps(C + static_cast<std::ptrdiff_t>(r) * ldc, c0[r]);
}

// Columns [0, n) with n < 16 through masked loads and stores.
template <int MR>
inline void kernel_f32_tail(int K, const float* Ap, const float* B, int ldb, float* C, int ldc,
                            bool accumulate, int n) {
  const __mmask16 mask = static_cast<__mmask16>((1u << n) - 1);
  __m512 c0[MR];
  for (int r = 0; r < MR; ++r)
    c0[r] = accumulate ? _mm512_maskz_loadu_ps(mask, C + static_cast<std::ptrdiff_t>(r) * ldc)
                       : _mm512_setzero_ps();
  for (int k = 0; k < K; ++k) {
    const __m512 b0 = _mm512_maskz_loadu_ps(mask, B + static_cast<std::ptrdiff_t>(k) * ldb);
#pragma GCC unroll 16
    for (int r = 0; r < MR; ++r) {
      c0[r] = _mm512_fmadd_ps(_mm512_set1_ps(Ap[k * MR + r]), b0, c0[r]);
    }
  }
  for (int r = 0; r < MR; ++r) _mm512_mask_storeu_ps(C + static_cast<std::ptrdiff_t>(r) * ldc, mask, c0[r]);
}

template <int MR>
void row_block_f32(int kc, const float* Ap, const float* B, int ldb, float* C, int ldc, int j_begin,
                   int j_end, bool accumulate) {
  int j = j_begin;
  for (; j + 32 <= j_end; j += 32) kernel_f32x32<MR>(kc, Ap, B + j, ldb, C + j, ldc, accumulate);
  for (; j + 16 <= j_end; j += 16) kernel_f32x16<MR>(kc, Ap, B + j, ldb, C + j, ldc, accumulate);
  if (j < j_end) kernel_f32_tail<MR>(kc, Ap, B + j, ldb, C + j, ldc, accumulate, j_end - j);
}

void gemm_nn_f32(int M, int N, int K, const float* A, int lda, const float* B, int ldb, float* C,
                 int ldc, bool accumulate) {
  std::vector<float> packed(static_cast<std::size_t>(M) * std::min(K, kKc));
  for (int k0 = 0; k0 < K; k0 += kKc) {
    const int kc = std::min(kKc, K - k0);
    const bool acc = accumulate || k0 > 0;
    // Pack rows in blocks of 12/8/4/2/1 so each block's panel is [k][MR].
    std::vector<std::pair<int, int>> blocks;  // (row start, MR)
    int i0 = 0;
    for (int mr : {12, 8, 4, 2, 1}) {
      for (; i0 + mr <= M; i0 += mr) blocks.emplace_back(i0, mr);
    }
    for (auto [row, mr] : blocks) {
      float* dst = packed.data() + static_cast<std::size_t>(row) * kc;
      for (int k = 0; k < kc; ++k)
        for (int r = 0; r < mr; ++r) dst[k * mr + r] = A[static_cast<std::ptrdiff_t>(row + r) * lda + k0 + k];
    }
    const float* b = B + static_cast<std::ptrdiff_t>(k0) * ldb;
    for (int jc = 0; jc < N; jc += kNc) {
      const int je = std::min(N, jc + kNc);
      for (auto [row, mr] : blocks) {
        const float* ap = packed.data() + static_cast<std::size_t>(row) * kc;
        float* c = C + static_cast<std::ptrdiff_t>(row) * ldc;
        switch (mr) {
          case 12: row_block_f32<12>(kc, ap, b, ldb, c, ldc, jc, je, acc); break;
          case 8: row_block_f32<8>(kc, ap, b, ldb, c, ldc, jc, je, acc); break;
          case 4: row_block_f32<4>(kc, ap, b, ldb, c, ldc, jc, je, acc); break;
          case 2: row_block_f32<2>(kc, ap, b, ldb, c, ldc, jc, je, acc); break;
          default: row_block_f32<1>(kc, ap, b, ldb, c, ldc, jc, je, acc); break;
        }
      }
    }
  }
}

#endif

}  // namespace

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc,
             bool accumulate) {
  if (M <= 0 || N <= 0) return;
  if (K <= 0) {
    if (!accumulate)
      for (int r = 0; r < M; ++r) std::fill_n(C + static_cast<std::ptrdiff_t>(r) * ldc, N, T(0));
    return;
  }
#if defined(__AVX512F__)
  if constexpr (std::is_same_v<T, float>) {
    gemm_nn_f32(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
    return;
  }
#endif
  reference_nn(M, N, K, A, lda, B, ldb, C, ldc, accumulate);
}

namespace {

template <typename T>
void transpose(int rows, int cols, const T* src, int ld, T* dst) {
  constexpr int kTile = 32;
  for (int r0 = 0; r0 < rows; r0 += kTile)
    for (int c0 = 0; c0 < cols; c0 += kTile) {
      const int re = std::min(rows, r0 + kTile), ce = std::min(cols, c0 + kTile);
      for (int r = r0; r < re; ++r)
        for (int c = c0; c < ce; ++c)
          dst[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::ptrdiff_t>(r) * ld + c];
    }
}

}  // namespace

template <typename T>
void gemm_nt(int M, int N, int K, const T* A, int lda, const T* B, int ldb, T* C, int ldc,
             bool accumulate) {
  if (M <= 0 || N <= 0) return;
  if (static_cast<long>(N) <= M) {
    std::vector<T> bt(static_cast<std::size_t>(K) * N);
    transpose(N, K, B, ldb, bt.data());
    gemm_nn(M, N, K, A, lda, bt.data(), N, C, ldc, accumulate);
    return;
  }
  // Transpose the smaller operand: C^T = B A^T. fma is symmetric in its
  // factors, so every element sees the same chain.
  std::vector<T> at(static_cast<std::size_t>(K) * M);
  transpose(M, K, A, lda, at.data());
  std::vector<T> ct(static_cast<std::size_t>(N) * M);
  if (accumulate) transpose(M, N, C, ldc, ct.data());
  gemm_nn(N, M, K, B, ldb, at.data(), M, ct.data(), M, accumulate);
  for (int r = 0; r < M; ++r)
    for (int c = 0; c < N; ++c) C[static_cast<std::ptrdiff_t>(r) * ldc + c] = ct[static_cast<std::size_t>(c) * M + r];
}

template void gemm_nn<float>(int, int, int, const float*, int, const float*, int, float*, int,
                             bool);
template void gemm_nn<double>(int, int, int, const double*, int, const double*, int, double*,
                              int, bool);
template void gemm_nt<float>(int, int, int, const float*, int, const float*, int, float*, int,
                             bool);
template void gemm_nt<double>(int, int, int, const double*, int, const double*, int, double*,
                              int, bool);

}  // namespace saldrn
