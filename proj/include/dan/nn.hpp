#ifndef DAN_NN_HPP
#define DAN_NN_HPP

#include <map>
#include <random>
#include <string>
#include <vector>

#include "dan/autodiff.hpp"

namespace dan {

/// Named parameter tensors with gradient accumulators. Owned by one trainer.
template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
  };
  std::vector<Entry> entries;
  std::map<std::string, int> index;

  int add(const std::string& name, Tensor<T> init) {
    if (index.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor<T>::zeros(init.n, init.c, init.h, init.w);
    e.value = std::move(init);
    entries.push_back(std::move(e));
    index[name] = int(entries.size()) - 1;
    return int(entries.size()) - 1;
  }

  void zero_grad() {
    for (auto& e : entries) e.grad.data.setZero();
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += std::size_t(e.value.size());
    return n;
  }

  int use(Tape<T>& tape, int idx) {
    return tape.param(&entries[idx].value, &entries[idx].grad);
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries) out.add(e.name, e.value.template cast<U>());
    return out;
  }
};

/// Kaiming fan-in initialization for a conv/dense weight, leaky slope 0.2.
template <typename T>
Tensor<T> kaiming_init(int cout, int cin, int kh, int kw, std::mt19937_64& rng) {
  Tensor<T> w(cout, cin, kh, kw);
  const double fan_in = double(cin) * kh * kw;
  const double stddev = std::sqrt(2.0 / ((1.0 + 0.2 * 0.2) * fan_in));
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < w.data.size(); ++i) w.data[i] = T(dist(rng));
  return w;
}

template <typename T>
struct Conv2d {
  int w = -1, b = -1;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore<T>& ps, const std::string& name, int cin, int cout, int k,
         std::mt19937_64& rng, int stride_ = 1, T init_scale = T(1))
      : stride(stride_), pad(k / 2) {
    Tensor<T> wt = kaiming_init<T>(cout, cin, k, k, rng);
    if (init_scale != T(1))
      for (auto& v : wt.data) v *= init_scale;
    w = ps.add(name + ".w", std::move(wt));
    b = ps.add(name + ".b", Tensor<T>::zeros(cout, 1, 1, 1));
  }

  int operator()(Tape<T>& tape, ParamStore<T>& ps, int x) const {
    return tape.conv2d(x, ps.use(tape, w), ps.use(tape, b), stride, pad);
  }
};

template <typename T>
struct Dense {
  int w = -1, b = -1;

  Dense() = default;
  Dense(ParamStore<T>& ps, const std::string& name, int cin, int cout, std::mt19937_64& rng,
        T init_scale = T(1)) {
    Tensor<T> wt = kaiming_init<T>(cout, cin, 1, 1, rng);
    if (init_scale != T(1))
      for (auto& v : wt.data) v *= init_scale;
    w = ps.add(name + ".w", std::move(wt));
    b = ps.add(name + ".b", Tensor<T>::zeros(cout, 1, 1, 1));
  }

  int operator()(Tape<T>& tape, ParamStore<T>& ps, int x) const {
    return tape.dense(x, ps.use(tape, w), ps.use(tape, b));
  }
};

}  // namespace dan

#endif
