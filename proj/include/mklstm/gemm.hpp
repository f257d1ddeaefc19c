#pragma once

#include <cstdint>

namespace mklstm {

// C (MxN) += A (MxK) * B (KxN), all row-major contiguous.
// Single-threaded with a fixed accumulation order, so results are
// bit-identical across runs.
template <typename T>
void gemm_acc(int M, int N, int K, const T* A, const T* B, T* C);

// C (MxN) += A^T * B where A is stored (KxM) row-major; packs the transposed
// view directly, avoiding a materialized transpose.
template <typename T>
void gemm_acc_at(int M, int N, int K, const T* A, const T* B, T* C);

// dst (cols x rows) = src (rows x cols) transposed, row-major.
template <typename T>
void transpose(int rows, int cols, const T* src, T* dst);

extern template void gemm_acc<float>(int, int, int, const float*, const float*, float*);
extern template void gemm_acc<double>(int, int, int, const double*, const double*, double*);
extern template void gemm_acc_at<float>(int, int, int, const float*, const float*, float*);
extern template void gemm_acc_at<double>(int, int, int, const double*, const double*, double*);
extern template void transpose<float>(int, int, const float*, float*);
extern template void transpose<double>(int, int, const double*, double*);

}  // namespace mklstm
