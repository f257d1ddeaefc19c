#pragma once

#include "mklstm/tensor.hpp"

namespace mklstm {

// Raw same-padding stride-1 convolution kernels (im2col + GEMM). The tape
// ops in autodiff.hpp wrap these; shape validation happens there.

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel, const T* bias,
                    Tensor<T>& out);

// dx += correlation of dout with the kernel (transposed view)
template <typename T>
void conv2d_backward_input(const Tensor<T>& dout, const Tensor<T>& kernel,
                           Tensor<T>& dx);

// dkernel += im2col(x)^T * dout ; dbias += column sums of dout
template <typename T>
void conv2d_backward_params(const Tensor<T>& x, const Tensor<T>& dout,
                            Tensor<T>& dkernel, T* dbias);

#define MKLSTM_CONV_DECL(T)                                                        \
  extern template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&,      \
                                         const T*, Tensor<T>&);                   \
  extern template void conv2d_backward_input<T>(const Tensor<T>&,                 \
                                                const Tensor<T>&, Tensor<T>&);    \
  extern template void conv2d_backward_params<T>(const Tensor<T>&,                \
                                                 const Tensor<T>&, Tensor<T>&, T*);
MKLSTM_CONV_DECL(float)
MKLSTM_CONV_DECL(double)
#undef MKLSTM_CONV_DECL

}  // namespace mklstm
