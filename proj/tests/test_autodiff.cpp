#include "doctest.h"

#include "dan/autodiff.hpp"
#include "support/gradcheck.hpp"

using namespace dan;
using namespace dan::testsupport;

namespace {

// Registers a tensor as a differentiated leaf and runs the full check.
double check_unary(Tensor<double> x,
                   const std::function<int(Tape<double>&, int)>& op) {
  ParamStore<double> ps;
  ps.add("x", std::move(x));
  return gradcheck_params(ps, [&](Tape<double>& tape, ParamStore<double>& ps) {
    int out = op(tape, ps.use(tape, 0));
    const auto& v = tape.val(out);
    if (v.size() == 1) return out;
    return tape.dot_fixed(out, random_weights(v.size(), 99));
  });
}

}  // namespace

TEST_CASE("add and scale forward values") {
  Tape<double> tape;
  Tensor<double> a(1, 1, 1, 3), b(1, 1, 1, 3);
  a.data << 1, 2, 3;
  b.data << 10, 20, 30;
  int s = tape.add(tape.constant(a), tape.constant(b));
  CHECK(tape.val(s).data[1] == 22);
  int sc = tape.scale(s, 0.5);
  CHECK(tape.val(sc).data[2] == 16.5);
  CHECK_THROWS_AS(tape.add(tape.constant(a), tape.constant(Tensor<double>(1, 1, 1, 2))),
                  std::invalid_argument);
}

TEST_CASE("mul broadcasts 1x1 spatial factors over channels") {
  Tape<double> tape;
  Tensor<double> x(1, 2, 2, 2);
  x.data << 1, 2, 3, 4, 5, 6, 7, 8;
  Tensor<double> g(1, 2, 1, 1);
  g.data << 2, 10;
  int y = tape.mul(tape.constant(x), tape.constant(g));
  CHECK(tape.val(y).data[0] == 2);
  CHECK(tape.val(y).data[3] == 8);
  CHECK(tape.val(y).data[4] == 50);
  CHECK(tape.val(y).data[7] == 80);
}

TEST_CASE("elementwise op gradients match finite differences") {
  Tensor<double> x = random_tensor(2, 3, 4, 4, 11);
  CHECK(check_unary(x, [](Tape<double>& t, int a) { return t.scale(a, -1.7); }) < 1e-6);
  CHECK(check_unary(x, [](Tape<double>& t, int a) { return t.sigmoid(a); }) < 1e-6);
  // keep activations away from the kink for the finite-difference probe
  Tensor<double> far = x;
  far.data = (far.data.abs() + 0.5) * far.data.sign();
  CHECK(check_unary(far, [](Tape<double>& t, int a) { return t.leaky_relu(a, 0.2); }) < 1e-6);
}

TEST_CASE("mul gradients, both operands and broadcast path") {
  ParamStore<double> ps;
  ps.add("a", random_tensor(2, 3, 3, 3, 21));
  ps.add("b", random_tensor(2, 3, 3, 3, 22));
  ps.add("g", random_tensor(2, 3, 1, 1, 23));
  CHECK(gradcheck_params(ps, [](Tape<double>& tape, ParamStore<double>& ps) {
          int full = tape.mul(ps.use(tape, 0), ps.use(tape, 1));
          int bc = tape.mul(full, ps.use(tape, 2));
          return tape.dot_fixed(bc, random_weights(tape.val(bc).size(), 5));
        }) < 1e-6);
}

TEST_CASE("conv2d matches a hand-computed 3x3 example") {
  Tape<double> tape;
  Tensor<double> x(1, 1, 3, 3);
  x.data << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  Tensor<double> w(1, 1, 3, 3);
  w.data.setZero();
  w.data[4] = 1.0;  // center tap: identity
  w.data[5] = 1.0;  // plus the right neighbour
  Tensor<double> b(1, 1, 1, 1);
  b.data[0] = 0.25;
  int y = tape.conv2d(tape.constant(x), tape.constant(w), tape.constant(b), 1, 1);
  // out(i,j) = x(i,j) + x(i,j+1) + 0.25, zero padding beyond the right edge
  CHECK(tape.val(y).at(0, 0, 0, 0) == doctest::Approx(1 + 2 + 0.25));
  CHECK(tape.val(y).at(0, 0, 0, 2) == doctest::Approx(3 + 0 + 0.25));
  CHECK(tape.val(y).at(0, 0, 2, 1) == doctest::Approx(8 + 9 + 0.25));
}

TEST_CASE("conv2d stride-2 output geometry") {
  Tape<double> tape;
  int y = tape.conv2d(tape.constant(random_tensor(1, 3, 8, 8, 31)),
                      tape.constant(random_tensor(5, 3, 3, 3, 32, 0.1)),
                      tape.constant(Tensor<double>::zeros(5, 1, 1, 1)), 2, 1);
  CHECK(tape.val(y).c == 5);
  CHECK(tape.val(y).h == 4);
  CHECK(tape.val(y).w == 4);
}

TEST_CASE("conv2d gradients: input, weight, and bias") {
  ParamStore<double> ps;
  ps.add("x", random_tensor(2, 2, 5, 5, 41));
  ps.add("w", random_tensor(3, 2, 3, 3, 42, 0.3));
  ps.add("b", random_tensor(3, 1, 1, 1, 43, 0.3));
  CHECK(gradcheck_params(ps, [](Tape<double>& tape, ParamStore<double>& ps) {
          int y = tape.conv2d(ps.use(tape, 0), ps.use(tape, 1), ps.use(tape, 2), 1, 1);
          return tape.dot_fixed(y, random_weights(tape.val(y).size(), 44));
        }) < 1e-6);
}

TEST_CASE("strided conv2d gradients") {
  ParamStore<double> ps;
  ps.add("x", random_tensor(1, 2, 6, 6, 51));
  ps.add("w", random_tensor(2, 2, 3, 3, 52, 0.3));
  ps.add("b", random_tensor(2, 1, 1, 1, 53, 0.3));
  CHECK(gradcheck_params(ps, [](Tape<double>& tape, ParamStore<double>& ps) {
          int y = tape.conv2d(ps.use(tape, 0), ps.use(tape, 1), ps.use(tape, 2), 2, 1);
          return tape.dot_fixed(y, random_weights(tape.val(y).size(), 54));
        }) < 1e-6);
}

TEST_CASE("dense forward and gradients") {
  {
    Tape<double> tape;
    Tensor<double> x(1, 2, 1, 1), w(3, 2, 1, 1), b(3, 1, 1, 1);
    x.data << 1, 2;
    w.data << 1, 0, 0, 1, 1, 1;
    b.data << 0, 0, 10;
    int y = tape.dense(tape.constant(x), tape.constant(w), tape.constant(b));
    CHECK(tape.val(y).data[0] == 1);
    CHECK(tape.val(y).data[1] == 2);
    CHECK(tape.val(y).data[2] == 13);
  }
  ParamStore<double> ps;
  ps.add("x", random_tensor(3, 4, 1, 1, 61));
  ps.add("w", random_tensor(5, 4, 1, 1, 62, 0.5));
  ps.add("b", random_tensor(5, 1, 1, 1, 63, 0.5));
  CHECK(gradcheck_params(ps, [](Tape<double>& tape, ParamStore<double>& ps) {
          int y = tape.dense(ps.use(tape, 0), ps.use(tape, 1), ps.use(tape, 2));
          return tape.dot_fixed(y, random_weights(tape.val(y).size(), 64));
        }) < 1e-6);
}

TEST_CASE("linear_fixed applies constant coefficients and backpropagates") {
  Eigen::MatrixXd W(2, 3);
  W << 1, 2, 3, 0, -1, 1;
  Eigen::VectorXd b(2);
  b << 0.5, -0.5;
  {
    Tape<double> tape;
    Tensor<double> x(1, 3, 1, 1);
    x.data << 1, 1, 2;
    int y = tape.linear_fixed(tape.constant(x), W, b);
    CHECK(tape.val(y).data[0] == doctest::Approx(9.5));
    CHECK(tape.val(y).data[1] == doctest::Approx(0.5));
  }
  Tensor<double> x = random_tensor(2, 3, 1, 1, 71);
  CHECK(check_unary(x, [&](Tape<double>& t, int a) { return t.linear_fixed(a, W, b); }) < 1e-6);
}

TEST_CASE("concat, broadcast, and pooling gradients") {
  ParamStore<double> ps;
  ps.add("a", random_tensor(2, 2, 3, 3, 81));
  ps.add("b", random_tensor(2, 3, 1, 1, 82));
  CHECK(gradcheck_params(ps, [](Tape<double>& tape, ParamStore<double>& ps) {
          int wide = tape.broadcast_spatial(ps.use(tape, 1), 3, 3);
          int cat = tape.concat_channels(ps.use(tape, 0), wide);
          int pooled = tape.global_avg_pool(cat);
          return tape.dot_fixed(pooled, random_weights(tape.val(pooled).size(), 83));
        }) < 1e-6);
}

TEST_CASE("global_avg_pool forward value") {
  Tape<double> tape;
  Tensor<double> x(1, 2, 2, 2);
  x.data << 1, 2, 3, 4, 10, 20, 30, 40;
  int y = tape.global_avg_pool(tape.constant(x));
  CHECK(tape.val(y).data[0] == doctest::Approx(2.5));
  CHECK(tape.val(y).data[1] == doctest::Approx(25.0));
}

TEST_CASE("softmax_channels sums to one per sample and backpropagates") {
  Tensor<double> x = random_tensor(3, 6, 1, 1, 91);
  {
    Tape<double> tape;
    int y = tape.softmax_channels(tape.constant(x));
    for (int n = 0; n < 3; ++n) {
      double s = 0, mn = 1;
      for (int c = 0; c < 6; ++c) {
        s += tape.val(y).at(n, c, 0, 0);
        mn = std::min(mn, tape.val(y).at(n, c, 0, 0));
      }
      CHECK(s == doctest::Approx(1.0));
      CHECK(mn > 0.0);
    }
  }
  CHECK(check_unary(x, [](Tape<double>& t, int a) { return t.softmax_channels(a); }) < 1e-6);
}

TEST_CASE("pixel_shuffle is the exact depth-to-space permutation") {
  Tape<double> tape;
  Tensor<double> x(1, 4, 1, 2);  // r=2, one output channel, 1x2 -> 2x4
  for (int i = 0; i < 8; ++i) x.data[i] = i;
  int y = tape.pixel_shuffle(tape.constant(x), 2);
  const auto& v = tape.val(y);
  CHECK(v.c == 1);
  CHECK(v.h == 2);
  CHECK(v.w == 4);
  // out(oh,ow) = in(channel (oh%2)*2 + ow%2, 0, ow/2); channel c holds {2c, 2c+1}
  CHECK(v.at(0, 0, 0, 0) == 0);
  CHECK(v.at(0, 0, 0, 1) == 2);
  CHECK(v.at(0, 0, 0, 2) == 1);
  CHECK(v.at(0, 0, 0, 3) == 3);
  CHECK(v.at(0, 0, 1, 0) == 4);
  CHECK(v.at(0, 0, 1, 1) == 6);

  CHECK(check_unary(random_tensor(2, 8, 2, 3, 101),
                    [](Tape<double>& t, int a) { return t.pixel_shuffle(a, 2); }) < 1e-6);
}

TEST_CASE("mean_abs_diff value and gradients") {
  {
    Tape<double> tape;
    Tensor<double> a(1, 1, 1, 4), b(1, 1, 1, 4);
    a.data << 1, 2, 3, 4;
    b.data << 2, 2, 1, 8;
    int l = tape.mean_abs_diff(tape.constant(a), tape.constant(b));
    CHECK(tape.val(l).data[0] == doctest::Approx((1 + 0 + 2 + 4) / 4.0));
  }
  ParamStore<double> ps;
  // keep the two sides apart so the probe never crosses |x|'s kink
  Tensor<double> a = random_tensor(1, 2, 3, 3, 111);
  Tensor<double> b = a;
  b.data += 0.5 + random_tensor(1, 2, 3, 3, 112, 0.1).data.abs();
  ps.add("a", a);
  ps.add("b", b);
  CHECK(gradcheck_params(ps, [](Tape<double>& tape, ParamStore<double>& ps) {
          return tape.mean_abs_diff(ps.use(tape, 0), ps.use(tape, 1));
        }) < 1e-6);
}

TEST_CASE("parameter leaves are memoized and accumulate over repeated use") {
  ParamStore<double> ps;
  ps.add("w", random_tensor(1, 1, 1, 4, 121));
  ps.add("x", random_tensor(1, 1, 1, 4, 122));
  std::size_t nodes_once = 0, nodes_twice = 0;
  {
    Tape<double> tape;
    tape.mul(ps.use(tape, 0), ps.use(tape, 1));
    nodes_once = tape.node_count();
  }
  {
    Tape<double> tape;
    int y1 = tape.mul(ps.use(tape, 0), ps.use(tape, 1));
    int y2 = tape.mul(ps.use(tape, 0), ps.use(tape, 1));
    tape.add(y1, y2);
    nodes_twice = tape.node_count();
  }
  // second use re-binds the same two leaves: only the op nodes grow
  CHECK(nodes_twice == nodes_once + 2);

  CHECK(gradcheck_params(ps, [](Tape<double>& tape, ParamStore<double>& ps) {
          int w = ps.use(tape, 0), x = ps.use(tape, 1);
          int y = tape.add(tape.mul(w, x), tape.mul(w, w));
          return tape.dot_fixed(y, random_weights(4, 123));
        }) < 1e-6);
}

TEST_CASE("constants receive no gradient work") {
  ParamStore<double> ps;
  ps.add("x", random_tensor(1, 1, 2, 2, 131));
  Tensor<double> frozen = random_tensor(1, 1, 2, 2, 132);
  CHECK(gradcheck_params(ps, [&](Tape<double>& tape, ParamStore<double>& ps) {
          int y = tape.mul(ps.use(tape, 0), tape.constant(frozen));
          return tape.dot_fixed(y, random_weights(4, 133));
        }) < 1e-6);
}
