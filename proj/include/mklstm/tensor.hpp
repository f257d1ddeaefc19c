#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mklstm {

// Dense 4-D array, batch-major / channel-minor contiguous layout.
// The four axes are (n, h, w, c); convolution kernels reuse the same
// storage with axes read as (kh, kw, c_in, c_out).
struct Shape {
  int n = 0, h = 0, w = 0, c = 0;

  bool operator==(const Shape&) const = default;
  std::int64_t count() const {
    return std::int64_t(n) * h * w * c;
  }
  std::string str() const;
};

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0))
      : shape(s), data(static_cast<std::size_t>(s.count()), fill) {}
  Tensor(int n, int h, int w, int c, T fill = T(0))
      : Tensor(Shape{n, h, w, c}, fill) {}

  std::int64_t size() const { return shape.count(); }
  bool empty() const { return data.empty(); }

  std::int64_t index(int i, int j, int k, int l) const {
    return ((std::int64_t(i) * shape.h + j) * shape.w + k) * shape.c + l;
  }
  T& at(int i, int j, int k, int l) { return data[index(i, j, k, l)]; }
  const T& at(int i, int j, int k, int l) const { return data[index(i, j, k, l)]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

// splitmix64: small deterministic generator used everywhere randomness is
// needed, so results do not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  // uniform in [0, 1)
  double next_double() {
    return double(next_u64() >> 11) * 0x1.0p-53;
  }
  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
  // uniform integer in [0, n)
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // independent stream for a named sub-task; stable under call order changes
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed ^ (0x517cc1b727220a95ULL * (stream + 1)));
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
}

extern template struct Tensor<float>;
extern template struct Tensor<double>;

}  // namespace mklstm
