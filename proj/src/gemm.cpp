#include "mklstm/gemm.hpp"

#include <algorithm>
#include <vector>

namespace mklstm {
namespace {

// Register tile sizes tuned for one 512-bit (or two 256-bit) FMA pipes:
// 6x32 float and 4x24 double keep 12 vector accumulators live.
template <typename T> struct Tile;
template <> struct Tile<float> { static constexpr int MR = 6, NR = 32; };
template <> struct Tile<double> { static constexpr int MR = 4, NR = 24; };

constexpr int kKC = 256;  // K panel, keeps packed B panel in L1/L2
constexpr int kMC = 96;   // M block per packed A panel

template <typename T, int MR, int NR>
void micro_kernel(int K, const T* a, const T* b, T* c, int ldc) {
  T acc[MR][NR];
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) acc[i][j] = c[i * ldc + j];
  for (int k = 0; k < K; ++k) {
    const T* bk = b + std::int64_t(k) * NR;
    const T* ak = a + std::int64_t(k) * MR;
    for (int i = 0; i < MR; ++i) {
      T av = ak[i];
#pragma GCC ivdep
      for (int j = 0; j < NR; ++j) acc[i][j] += av * bk[j];
    }
  }
  for (int i = 0; i < MR; ++i)
    for (int j = 0; j < NR; ++j) c[i * ldc + j] = acc[i][j];
}

}  // namespace

namespace {

// transA=false: A is (MxK) row-major; transA=true: A is (KxM) row-major and
// used as its transpose.
template <typename T, bool TransA>
void gemm_impl(int M, int N, int K, const T* A, const T* B, T* C) {
  constexpr int MR = Tile<T>::MR;
  constexpr int NR = Tile<T>::NR;
  const int n_panels = (N + NR - 1) / NR;
  std::vector<T> Ap(std::size_t(kMC + MR) * kKC);
  std::vector<T> Bp(std::size_t(kKC) * n_panels * NR);

  for (int k0 = 0; k0 < K; k0 += kKC) {
    const int kb = std::min(kKC, K - k0);
    // pack B panel: (kb x N) into NR-wide column strips, zero-padded
    for (int j0 = 0, pb = 0; j0 < N; j0 += NR, pb += kb * NR) {
      const int jb = std::min(NR, N - j0);
      for (int k = 0; k < kb; ++k) {
        const T* src = B + std::int64_t(k0 + k) * N + j0;
        T* dst = Bp.data() + pb + std::int64_t(k) * NR;
        for (int j = 0; j < jb; ++j) dst[j] = src[j];
        for (int j = jb; j < NR; ++j) dst[j] = T(0);
      }
    }
    for (int i0 = 0; i0 < M; i0 += kMC) {
      const int ib = std::min(kMC, M - i0);
      // pack A block: (ib x kb) into MR-tall row strips, zero-padded
      for (int i = 0, pa = 0; i < ib; i += MR, pa += kb * MR) {
        const int mb = std::min(MR, ib - i);
        for (int k = 0; k < kb; ++k) {
          T* dst = Ap.data() + pa + std::int64_t(k) * MR;
          if constexpr (TransA) {
            const T* src = A + std::int64_t(k0 + k) * M + i0 + i;
            for (int r = 0; r < mb; ++r) dst[r] = src[r];
          } else {
            for (int r = 0; r < mb; ++r)
              dst[r] = A[std::int64_t(i0 + i + r) * K + k0 + k];
          }
          for (int r = mb; r < MR; ++r) dst[r] = T(0);
        }
      }
      for (int j0 = 0, pb = 0; j0 < N; j0 += NR, pb += kb * NR) {
        const int jb = std::min(NR, N - j0);
        for (int i = 0, pa = 0; i < ib; i += MR, pa += kb * MR) {
          const int mb = std::min(MR, ib - i);
          if (mb == MR && jb == NR) {
            micro_kernel<T, MR, NR>(kb, Ap.data() + pa, Bp.data() + pb,
                                    C + std::int64_t(i0 + i) * N + j0, N);
          } else {
            T tmp[MR * NR];
            for (int r = 0; r < MR; ++r)
              for (int j = 0; j < NR; ++j)
                tmp[r * NR + j] = (r < mb && j < jb)
                                      ? C[std::int64_t(i0 + i + r) * N + j0 + j]
                                      : T(0);
            micro_kernel<T, MR, NR>(kb, Ap.data() + pa, Bp.data() + pb, tmp, NR);
            for (int r = 0; r < mb; ++r)
              for (int j = 0; j < jb; ++j)
                C[std::int64_t(i0 + i + r) * N + j0 + j] = tmp[r * NR + j];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm_acc(int M, int N, int K, const T* A, const T* B, T* C) {
  gemm_impl<T, false>(M, N, K, A, B, C);
}

template <typename T>
void gemm_acc_at(int M, int N, int K, const T* A, const T* B, T* C) {
  gemm_impl<T, true>(M, N, K, A, B, C);
}

template <typename T>
void transpose(int rows, int cols, const T* src, T* dst) {
  constexpr int B = 32;
  for (int i0 = 0; i0 < rows; i0 += B) {
    const int ie = std::min(i0 + B, rows);
    for (int j0 = 0; j0 < cols; j0 += B) {
      const int je = std::min(j0 + B, cols);
      for (int i = i0; i < ie; ++i)
        for (int j = j0; j < je; ++j)
          dst[std::int64_t(j) * rows + i] = src[std::int64_t(i) * cols + j];
    }
  }
}

template void gemm_acc<float>(int, int, int, const float*, const float*, float*);
template void gemm_acc<double>(int, int, int, const double*, const double*, double*);
template void gemm_acc_at<float>(int, int, int, const float*, const float*, float*);
template void gemm_acc_at<double>(int, int, int, const double*, const double*, double*);
template void transpose<float>(int, int, const float*, float*);
template void transpose<double>(int, int, const double*, double*);

}  // namespace mklstm
