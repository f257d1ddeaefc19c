#include "mklstm/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mklstm {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << h << "," << w << "," << c << ")";
  return os.str();
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (const T& v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template struct Tensor<float>;
template struct Tensor<double>;

}  // namespace mklstm
