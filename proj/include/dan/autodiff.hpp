#ifndef DAN_AUTODIFF_HPP
#define DAN_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <vector>

#include "dan/tensor.hpp"

namespace dan {

/// Reverse-mode tape over NCHW tensors. Nodes are created by the op methods;
/// backward() runs the recorded closures in reverse creation order.
template <typename T>
class Tape {
 public:
  using MatT = Eigen::Matrix<T, Dynamic, Dynamic>;
  using MatRM = Eigen::Matrix<T, Dynamic, Dynamic, Eigen::RowMajor>;
  using VecT = Eigen::Matrix<T, Dynamic, 1>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&)> back;
    bool needs_grad = false;
  };

  int constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

  int input(Tensor<T> v) { return push(std::move(v), true, nullptr); }

  /// Leaf bound to external parameter storage; gradients accumulate into
  /// *grad_out. One node per (tape, value_ptr) pair.
  int param(Tensor<T>* value, Tensor<T>* grad_out) {
    auto it = param_nodes_.find(value);
    if (it != param_nodes_.end()) return it->second;
    int id = push(*value, true, nullptr);
    nodes_[id].back = [id, grad_out](Tape& t) {
      grad_out->data += t.nodes_[id].grad.data;
    };
    param_nodes_[value] = id;
    return id;
  }

  const Tensor<T>& val(int id) const { return nodes_[id].value; }
  const Tensor<T>& grad(int id) const { return nodes_[id].grad; }

  // ---- ops ----

  int add(int a, int b) {
    check_same(a, b, "add");
    Tensor<T> out = nodes_[a].value;
    out.data += nodes_[b].value.data;
    int id = push(std::move(out), wants(a) || wants(b), nullptr);
    nodes_[id].back = [this, id, a, b](Tape& t) {
      if (wants(a)) t.acc(a).data += t.nodes_[id].grad.data;
      if (wants(b)) t.acc(b).data += t.nodes_[id].grad.data;
    };
    return id;
  }

  /// Elementwise product. b may have 1x1 spatial size, in which case it is
  /// broadcast over a's spatial extent.
  int mul(int a, int b) {
    const Tensor<T>& A = nodes_[a].value;
    const Tensor<T>& B = nodes_[b].value;
    const bool bcast = (B.h == 1 && B.w == 1 && (A.h != 1 || A.w != 1));
    if (!bcast && !A.same_shape(B)) throw std::invalid_argument("mul: shape mismatch");
    if (bcast && (A.n != B.n || A.c != B.c)) throw std::invalid_argument("mul: shape mismatch");
    Tensor<T> out(A.n, A.c, A.h, A.w);
    if (bcast) {
      const Eigen::Index hw = Eigen::Index(A.h) * A.w;
      for (Eigen::Index i = 0; i < Eigen::Index(A.n) * A.c; ++i)
        out.data.segment(i * hw, hw) = A.data.segment(i * hw, hw) * B.data[i];
    } else {
      out.data = A.data * B.data;
    }
    int id = push(std::move(out), wants(a) || wants(b), nullptr);
    nodes_[id].back = [this, id, a, b, bcast](Tape& t) {
      const Tensor<T>& A = t.nodes_[a].value;
      const Tensor<T>& B = t.nodes_[b].value;
      const Tensor<T>& g = t.nodes_[id].grad;
      const Eigen::Index hw = Eigen::Index(A.h) * A.w;
      if (wants(a)) {
        Tensor<T>& ga = t.acc(a);
        if (bcast) {
          for (Eigen::Index i = 0; i < Eigen::Index(A.n) * A.c; ++i)
            ga.data.segment(i * hw, hw) += g.data.segment(i * hw, hw) * B.data[i];
        } else {
          ga.data += g.data * B.data;
        }
      }
      if (wants(b)) {
        Tensor<T>& gb = t.acc(b);
        if (bcast) {
          for (Eigen::Index i = 0; i < Eigen::Index(A.n) * A.c; ++i)
            gb.data[i] += (g.data.segment(i * hw, hw) * A.data.segment(i * hw, hw)).sum();
        } else {
          gb.data += g.data * A.data;
        }
      }
    };
    return id;
  }

  int scale(int a, T s) {
    Tensor<T> out = nodes_[a].value;
    out.data *= s;
    int id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a, s](Tape& t) {
      if (wants(a)) t.acc(a).data += t.nodes_[id].grad.data * s;
    };
    return id;
  }

  int leaky_relu(int a, T slope) {
    Tensor<T> out = nodes_[a].value;
    out.data = out.data.max(T(0)) + out.data.min(T(0)) * slope;
    int id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a, slope](Tape& t) {
      if (!wants(a)) return;
      const auto& x = t.nodes_[a].value.data;
      t.acc(a).data +=
          t.nodes_[id].grad.data * (x > T(0)).select(Arr1<T>::Ones(x.size()),
                                                     Arr1<T>::Constant(x.size(), slope));
    };
    return id;
  }

  int sigmoid(int a) {
    Tensor<T> out = nodes_[a].value;
    out.data = T(1) / (T(1) + (-out.data).exp());
    int id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a](Tape& t) {
      if (!wants(a)) return;
      const auto& y = t.nodes_[id].value.data;
      t.acc(a).data += t.nodes_[id].grad.data * y * (T(1) - y);
    };
    return id;
  }

  /// Zero-padded 2-D correlation. weight is (Cout, Cin, k, k); bias (Cout,1,1,1).
  int conv2d(int x, int weight, int bias, int stride, int pad) {
    const Tensor<T>& X = nodes_[x].value;
    const Tensor<T>& W = nodes_[weight].value;
    if (W.c != X.c) throw std::invalid_argument("conv2d: channel mismatch");
    const int kh = W.h, kw = W.w, cout = W.n, cin = W.c;
    const int ho = (X.h + 2 * pad - kh) / stride + 1;
    const int wo = (X.w + 2 * pad - kw) / stride + 1;
    if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d: output would be empty");

    Tensor<T> out(X.n, cout, ho, wo);
    const Eigen::Index K = Eigen::Index(cin) * kh * kw;
    const Eigen::Index P = Eigen::Index(ho) * wo;
    Eigen::Map<const MatRM> Wm(W.data.data(), cout, K);
    const VecT bvec = nodes_[bias].value.data.matrix();
    MatT cols(K, P);
    for (int in = 0; in < X.n; ++in) {
      im2col(X, in, kh, kw, stride, pad, ho, wo, cols);
      Eigen::Map<MatRM> O(out.data.data() + Eigen::Index(in) * cout * P, cout, P);
      O.noalias() = Wm * cols;
      O.colwise() += bvec;
    }
    int id = push(std::move(out), wants(x) || wants(weight) || wants(bias), nullptr);
    nodes_[id].back = [this, id, x, weight, bias, stride, pad](Tape& t) {
      const Tensor<T>& X = t.nodes_[x].value;
      const Tensor<T>& W = t.nodes_[weight].value;
      const Tensor<T>& G = t.nodes_[id].grad;
      const int kh = W.h, kw = W.w, cout = W.n, cin = W.c;
      const int ho = G.h, wo = G.w;
      const Eigen::Index K = Eigen::Index(cin) * kh * kw;
      const Eigen::Index P = Eigen::Index(ho) * wo;
      MatT cols(K, P);
      const bool wx = wants(x), ww = wants(weight), wb = wants(bias);
      Eigen::Map<const MatRM> Wm(W.data.data(), cout, K);
      for (int in = 0; in < X.n; ++in) {
        Eigen::Map<const MatRM> Gm(G.data.data() + Eigen::Index(in) * cout * P, cout, P);
        if (ww || wx) im2col(X, in, kh, kw, stride, pad, ho, wo, cols);
        if (ww) {
          Eigen::Map<MatRM> dW(t.acc(weight).data.data(), cout, K);
          dW.noalias() += Gm * cols.transpose();
        }
        if (wb) t.acc(bias).data.matrix() += Gm.rowwise().sum();
        if (wx) {
          MatT dcols = Wm.transpose() * Gm;
          col2im_add(t.acc(x), in, kh, kw, stride, pad, ho, wo, dcols);
        }
      }
    };
    return id;
  }

  /// Fully connected map on N x C x 1 x 1 tensors. weight (M, C, 1, 1), bias (M,1,1,1).
  int dense(int x, int weight, int bias) {
    const Tensor<T>& X = nodes_[x].value;
    const Tensor<T>& W = nodes_[weight].value;
    if (X.h != 1 || X.w != 1 || W.c != X.c)
      throw std::invalid_argument("dense: expects N x C x 1 x 1 input with matching C");
    const int m = W.n;
    Tensor<T> out(X.n, m, 1, 1);
    Eigen::Map<const MatRM> Xm(X.data.data(), X.n, X.c);
    Eigen::Map<const MatRM> Wm(W.data.data(), m, W.c);
    Eigen::Map<MatRM> O(out.data.data(), X.n, m);
    O.noalias() = Xm * Wm.transpose();
    O.rowwise() += nodes_[bias].value.data.matrix().transpose();
    int id = push(std::move(out), wants(x) || wants(weight) || wants(bias), nullptr);
    nodes_[id].back = [this, id, x, weight, bias](Tape& t) {
      const Tensor<T>& X = t.nodes_[x].value;
      const Tensor<T>& W = t.nodes_[weight].value;
      const Tensor<T>& G = t.nodes_[id].grad;
      Eigen::Map<const MatRM> Xm(X.data.data(), X.n, X.c);
      Eigen::Map<const MatRM> Wm(W.data.data(), W.n, W.c);
      Eigen::Map<const MatRM> Gm(G.data.data(), G.n, G.c);
      if (wants(weight)) {
        Eigen::Map<MatRM> dW(t.acc(weight).data.data(), W.n, W.c);
        dW.noalias() += Gm.transpose() * Xm;
      }
      if (wants(bias)) t.acc(bias).data.matrix() += Gm.colwise().sum().transpose();
      if (wants(x)) {
        Eigen::Map<MatRM> dX(t.acc(x).data.data(), X.n, X.c);
        dX.noalias() += Gm * Wm;
      }
    };
    return id;
  }

  /// Linear map with constant coefficients: out = W x + b on N x C x 1 x 1.
  int linear_fixed(int x, const MatT& W, const VecT& b) {
    const Tensor<T>& X = nodes_[x].value;
    if (X.h != 1 || X.w != 1 || W.cols() != X.c)
      throw std::invalid_argument("linear_fixed: shape mismatch");
    Tensor<T> out(X.n, int(W.rows()), 1, 1);
    Eigen::Map<const MatRM> Xm(X.data.data(), X.n, X.c);
    Eigen::Map<MatRM> O(out.data.data(), X.n, int(W.rows()));
    O.noalias() = Xm * W.transpose();
    O.rowwise() += b.transpose();
    int id = push(std::move(out), wants(x), nullptr);
    nodes_[id].back = [this, id, x, W](Tape& t) {
      if (!wants(x)) return;
      const Tensor<T>& X = t.nodes_[x].value;
      const Tensor<T>& G = t.nodes_[id].grad;
      Eigen::Map<const MatRM> Gm(G.data.data(), G.n, G.c);
      Eigen::Map<MatRM> dX(t.acc(x).data.data(), X.n, X.c);
      dX.noalias() += Gm * W;
    };
    return id;
  }

  int concat_channels(int a, int b) {
    const Tensor<T>& A = nodes_[a].value;
    const Tensor<T>& B = nodes_[b].value;
    if (A.n != B.n || A.h != B.h || A.w != B.w)
      throw std::invalid_argument("concat_channels: shape mismatch");
    Tensor<T> out(A.n, A.c + B.c, A.h, A.w);
    const Eigen::Index hw = Eigen::Index(A.h) * A.w;
    for (int in = 0; in < A.n; ++in) {
      out.data.segment(Eigen::Index(in) * (A.c + B.c) * hw, Eigen::Index(A.c) * hw) =
          A.data.segment(Eigen::Index(in) * A.c * hw, Eigen::Index(A.c) * hw);
      out.data.segment(Eigen::Index(in) * (A.c + B.c) * hw + A.c * hw, Eigen::Index(B.c) * hw) =
          B.data.segment(Eigen::Index(in) * B.c * hw, Eigen::Index(B.c) * hw);
    }
    int id = push(std::move(out), wants(a) || wants(b), nullptr);
    nodes_[id].back = [this, id, a, b](Tape& t) {
      const Tensor<T>& A = t.nodes_[a].value;
      const Tensor<T>& B = t.nodes_[b].value;
      const Tensor<T>& G = t.nodes_[id].grad;
      const Eigen::Index hw = Eigen::Index(A.h) * A.w;
      for (int in = 0; in < A.n; ++in) {
        if (wants(a))
          t.acc(a).data.segment(Eigen::Index(in) * A.c * hw, Eigen::Index(A.c) * hw) +=
              G.data.segment(Eigen::Index(in) * (A.c + B.c) * hw, Eigen::Index(A.c) * hw);
        if (wants(b))
          t.acc(b).data.segment(Eigen::Index(in) * B.c * hw, Eigen::Index(B.c) * hw) +=
              G.data.segment(Eigen::Index(in) * (A.c + B.c) * hw + A.c * hw,
                             Eigen::Index(B.c) * hw);
      }
    };
    return id;
  }

  /// N x C x 1 x 1 -> N x C x H x W by spatial repetition.
  int broadcast_spatial(int a, int h, int w) {
    const Tensor<T>& A = nodes_[a].value;
    if (A.h != 1 || A.w != 1) throw std::invalid_argument("broadcast_spatial: expects 1x1 input");
    Tensor<T> out(A.n, A.c, h, w);
    const Eigen::Index hw = Eigen::Index(h) * w;
    for (Eigen::Index i = 0; i < A.data.size(); ++i)
      out.data.segment(i * hw, hw).setConstant(A.data[i]);
    int id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a, h, w](Tape& t) {
      if (!wants(a)) return;
      const Tensor<T>& G = t.nodes_[id].grad;
      const Eigen::Index hw = Eigen::Index(h) * w;
      for (Eigen::Index i = 0; i < t.acc(a).data.size(); ++i)
        t.acc(a).data[i] += G.data.segment(i * hw, hw).sum();
    };
    return id;
  }

  int global_avg_pool(int a) {
    const Tensor<T>& A = nodes_[a].value;
    Tensor<T> out(A.n, A.c, 1, 1);
    const Eigen::Index hw = Eigen::Index(A.h) * A.w;
    for (Eigen::Index i = 0; i < out.data.size(); ++i)
      out.data[i] = A.data.segment(i * hw, hw).mean();
    int id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a, hw](Tape& t) {
      if (!wants(a)) return;
      const Tensor<T>& G = t.nodes_[id].grad;
      for (Eigen::Index i = 0; i < G.data.size(); ++i)
        t.acc(a).data.segment(i * hw, hw) += G.data[i] / T(hw);
    };
    return id;
  }

  /// Softmax over channels of an N x C x 1 x 1 tensor.
  int softmax_channels(int a) {
    const Tensor<T>& A = nodes_[a].value;
    if (A.h != 1 || A.w != 1) throw std::invalid_argument("softmax_channels: expects 1x1 input");
    Tensor<T> out = A;
    for (int in = 0; in < A.n; ++in) {
      auto seg = out.data.segment(Eigen::Index(in) * A.c, A.c);
      seg = (seg - seg.maxCoeff()).exp();
      seg /= seg.sum();
    }
    int id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a](Tape& t) {
      if (!wants(a)) return;
      const Tensor<T>& Y = t.nodes_[id].value;
      const Tensor<T>& G = t.nodes_[id].grad;
      for (int in = 0; in < Y.n; ++in) {
        auto y = Y.data.segment(Eigen::Index(in) * Y.c, Y.c);
        auto g = G.data.segment(Eigen::Index(in) * Y.c, Y.c);
        const T dot = (y * g).sum();
        t.acc(a).data.segment(Eigen::Index(in) * Y.c, Y.c) += y * (g - dot);
      }
    };
    return id;
  }

  /// Depth-to-space: N x (C r^2) x H x W -> N x C x rH x rW.
  int pixel_shuffle(int a, int r) {
    const Tensor<T>& A = nodes_[a].value;
    if (A.c % (r * r) != 0) throw std::invalid_argument("pixel_shuffle: C not divisible by r^2");
    const int c = A.c / (r * r);
    Tensor<T> out(A.n, c, A.h * r, A.w * r);
    for (int in = 0; in < A.n; ++in)
      for (int oc = 0; oc < c; ++oc)
        for (int oh = 0; oh < out.h; ++oh)
          for (int ow = 0; ow < out.w; ++ow)
            out.at(in, oc, oh, ow) =
                A.at(in, oc * r * r + (oh % r) * r + (ow % r), oh / r, ow / r);
    int id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a, r, c](Tape& t) {
      if (!wants(a)) return;
      const Tensor<T>& G = t.nodes_[id].grad;
      Tensor<T>& ga = t.acc(a);
      for (int in = 0; in < G.n; ++in)
        for (int oc = 0; oc < c; ++oc)
          for (int oh = 0; oh < G.h; ++oh)
            for (int ow = 0; ow < G.w; ++ow)
              ga.at(in, oc * r * r + (oh % r) * r + (ow % r), oh / r, ow / r) +=
                  G.at(in, oc, oh, ow);
    };
    return id;
  }

  /// Mean absolute difference, as a 1x1x1x1 tensor.
  int mean_abs_diff(int a, int b) {
    check_same(a, b, "mean_abs_diff");
    const Tensor<T>& A = nodes_[a].value;
    const Tensor<T>& B = nodes_[b].value;
    Tensor<T> out(1, 1, 1, 1);
    out.data[0] = (A.data - B.data).abs().mean();
    int id = push(std::move(out), wants(a) || wants(b), nullptr);
    nodes_[id].back = [this, id, a, b](Tape& t) {
      const Tensor<T>& A = t.nodes_[a].value;
      const Tensor<T>& B = t.nodes_[b].value;
      const T g = t.nodes_[id].grad.data[0] / T(A.data.size());
      Arr1<T> s = (A.data - B.data).sign();
      if (wants(a)) t.acc(a).data += g * s;
      if (wants(b)) t.acc(b).data -= g * s;
    };
    return id;
  }

  /// Fixed-weight contraction to a scalar; used to scalarize outputs in tests.
  int dot_fixed(int a, const Arr1<T>& weights) {
    const Tensor<T>& A = nodes_[a].value;
    if (weights.size() != A.data.size()) throw std::invalid_argument("dot_fixed: size mismatch");
    Tensor<T> out(1, 1, 1, 1);
    out.data[0] = (A.data * weights).sum();
    int id = push(std::move(out), wants(a), nullptr);
    nodes_[id].back = [this, id, a, weights](Tape& t) {
      if (wants(a)) t.acc(a).data += t.nodes_[id].grad.data[0] * weights;
    };
    return id;
  }

  void backward(int loss) {
    if (nodes_[loss].value.size() != 1)
      throw std::invalid_argument("backward: loss must be scalar");
    for (auto& nd : nodes_)
      if (nd.grad.size() == 0 && nd.needs_grad)
        nd.grad = Tensor<T>::zeros(nd.value.n, nd.value.c, nd.value.h, nd.value.w);
    nodes_[loss].grad.data[0] = T(1);
    for (int id = int(nodes_.size()) - 1; id >= 0; --id)
      if (nodes_[id].needs_grad && nodes_[id].back) nodes_[id].back(*this);
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::map<const void*, int> param_nodes_;

  bool wants(int id) const { return nodes_[id].needs_grad; }

  Tensor<T>& acc(int id) { return nodes_[id].grad; }

  void check_same(int a, int b, const char* what) const {
    if (!nodes_[a].value.same_shape(nodes_[b].value))
      throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }

  int push(Tensor<T> v, bool needs_grad, std::function<void(Tape&)> back) {
    Node nd;
    nd.value = std::move(v);
    nd.needs_grad = needs_grad;
    nd.back = std::move(back);
    nodes_.push_back(std::move(nd));
    return int(nodes_.size()) - 1;
  }

  static void im2col(const Tensor<T>& X, int in, int kh, int kw, int stride, int pad,
                     int ho, int wo, MatT& cols) {
    const int cin = X.c;
    for (int ci = 0; ci < cin; ++ci)
      for (int a = 0; a < kh; ++a)
        for (int b = 0; b < kw; ++b) {
          const Eigen::Index row = (Eigen::Index(ci) * kh + a) * kw + b;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * stride + a - pad;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * stride + b - pad;
              cols(row, Eigen::Index(oh) * wo + ow) =
                  (ih >= 0 && ih < X.h && iw >= 0 && iw < X.w) ? X.at(in, ci, ih, iw) : T(0);
            }
          }
        }
  }

  static void col2im_add(Tensor<T>& dX, int in, int kh, int kw, int stride, int pad,
                         int ho, int wo, const MatT& dcols) {
    const int cin = dX.c;
    for (int ci = 0; ci < cin; ++ci)
      for (int a = 0; a < kh; ++a)
        for (int b = 0; b < kw; ++b) {
          const Eigen::Index row = (Eigen::Index(ci) * kh + a) * kw + b;
          for (int oh = 0; oh < ho; ++oh) {
            const int ih = oh * stride + a - pad;
            if (ih < 0 || ih >= dX.h) continue;
            for (int ow = 0; ow < wo; ++ow) {
              const int iw = ow * stride + b - pad;
              if (iw < 0 || iw >= dX.w) continue;
              dX.at(in, ci, ih, iw) += dcols(row, Eigen::Index(oh) * wo + ow);
            }
          }
        }
  }
};

}  // namespace dan

#endif
