#include "mklstm/conv.hpp"

#include <cstring>
#include <vector>

#include "mklstm/gemm.hpp"

namespace mklstm {
namespace {

// One row per output pixel (n,y,x); row entries ordered [dy][dx][c_in],
// matching the kernel's (kh,kw,c_in,c_out) layout viewed as a matrix.
template <typename T>
void im2col(const Tensor<T>& x, int kh, int kw, std::vector<T>& col) {
  const int n = x.shape.n, h = x.shape.h, w = x.shape.w, c = x.shape.c;
  const int ry = kh / 2, rx = kw / 2;
  const std::int64_t row_len = std::int64_t(kh) * kw * c;
  col.assign(std::size_t(n) * h * w * row_len, T(0));
  T* dst = col.data();
  for (int in = 0; in < n; ++in) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx, dst += row_len) {
        for (int dy = 0; dy < kh; ++dy) {
          const int iy = y + dy - ry;
          if (iy < 0 || iy >= h) continue;
          for (int dx = 0; dx < kw; ++dx) {
            const int ix = xx + dx - rx;
            if (ix < 0 || ix >= w) continue;
            std::memcpy(dst + (std::int64_t(dy) * kw + dx) * c,
                        &x.data[x.index(in, iy, ix, 0)], sizeof(T) * c);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const std::vector<T>& col, int kh, int kw, Tensor<T>& dx) {
  const int n = dx.shape.n, h = dx.shape.h, w = dx.shape.w, c = dx.shape.c;
  const int ry = kh / 2, rx = kw / 2;
  const std::int64_t row_len = std::int64_t(kh) * kw * c;
  const T* src = col.data();
  for (int in = 0; in < n; ++in) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx, src += row_len) {
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = y + ky - ry;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = xx + kx - rx;
            if (ix < 0 || ix >= w) continue;
            const T* s = src + (std::int64_t(ky) * kw + kx) * c;
            T* d = &dx.data[dx.index(in, iy, ix, 0)];
            for (int ic = 0; ic < c; ++ic) d[ic] += s[ic];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel, const T* bias,
                    Tensor<T>& out) {
  const int kh = kernel.shape.n, kw = kernel.shape.h;
  const int c_out = kernel.shape.c;
  const std::int64_t m = std::int64_t(x.shape.n) * x.shape.h * x.shape.w;
  const std::int64_t k = std::int64_t(kh) * kw * x.shape.c;

  out = Tensor<T>(x.shape.n, x.shape.h, x.shape.w, c_out);
  static thread_local std::vector<T> col;
  im2col(x, kh, kw, col);
  gemm_acc<T>(int(m), c_out, int(k), col.data(), kernel.data.data(),
              out.data.data());
  if (bias != nullptr) {
    T* o = out.data.data();
    for (std::int64_t i = 0; i < m; ++i, o += c_out)
      for (int oc = 0; oc < c_out; ++oc) o[oc] += bias[oc];
  }
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& dout, const Tensor<T>& kernel,
                           Tensor<T>& dx) {
  const int kh = kernel.shape.n, kw = kernel.shape.h;
  const int c_in = kernel.shape.w, c_out = kernel.shape.c;
  const std::int64_t m = std::int64_t(dout.shape.n) * dout.shape.h * dout.shape.w;
  const std::int64_t k = std::int64_t(kh) * kw * c_in;

  static thread_local std::vector<T> w_t, dcol;
  w_t.resize(std::size_t(k) * c_out);
  transpose<T>(int(k), c_out, kernel.data.data(), w_t.data());
  dcol.assign(std::size_t(m) * k, T(0));
  gemm_acc<T>(int(m), int(k), c_out, dout.data.data(), w_t.data(), dcol.data());
  col2im_add(dcol, kh, kw, dx);
}

template <typename T>
void conv2d_backward_params(const Tensor<T>& x, const Tensor<T>& dout,
                            Tensor<T>& dkernel, T* dbias) {
  const int kh = dkernel.shape.n, kw = dkernel.shape.h;
  const int c_out = dkernel.shape.c;
  const std::int64_t m = std::int64_t(x.shape.n) * x.shape.h * x.shape.w;
  const std::int64_t k = std::int64_t(kh) * kw * x.shape.c;

  static thread_local std::vector<T> col;
  im2col(x, kh, kw, col);
  gemm_acc_at<T>(int(k), c_out, int(m), col.data(), dout.data.data(),
                 dkernel.data.data());
  if (dbias != nullptr) {
    const T* g = dout.data.data();
    for (std::int64_t i = 0; i < m; ++i, g += c_out)
      for (int oc = 0; oc < c_out; ++oc) dbias[oc] += g[oc];
  }
}

#define MKLSTM_CONV_DEF(T)                                                       \
  template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const T*, \
                                  Tensor<T>&);                                  \
  template void conv2d_backward_input<T>(const Tensor<T>&, const Tensor<T>&,    \
                                         Tensor<T>&);                           \
  template void conv2d_backward_params<T>(const Tensor<T>&, const Tensor<T>&,   \
                                          Tensor<T>&, T*);
MKLSTM_CONV_DEF(float)
MKLSTM_CONV_DEF(double)
#undef MKLSTM_CONV_DEF

}  // namespace mklstm
