#ifndef DAN_TENSOR_HPP
#define DAN_TENSOR_HPP

#include <stdexcept>

#include "dan/types.hpp"

namespace dan {

/// Dense N x C x H x W tensor, scalar-templated so the same network code runs
/// in float for training and double for finite-difference checks.
template <typename T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  Arr1<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(Arr1<T>::Zero(Eigen::Index(n_) * c_ * h_ * w_)) {}

  static Tensor zeros(int n, int c, int h, int w) { return Tensor(n, c, h, w); }

  Eigen::Index size() const { return data.size(); }

  T& at(int in, int ic, int ih, int iw) {
    return data[((Eigen::Index(in) * c + ic) * h + ih) * w + iw];
  }
  T at(int in, int ic, int ih, int iw) const {
    return data[((Eigen::Index(in) * c + ic) * h + ih) * w + iw];
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.n = n; out.c = c; out.h = h; out.w = w;
    out.data = data.template cast<U>();
    return out;
  }
};

}  // namespace dan

#endif
