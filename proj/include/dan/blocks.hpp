#ifndef DAN_BLOCKS_HPP
#define DAN_BLOCKS_HPP

#include <cstdint>
#include <utility>

#include "dan/nn.hpp"

namespace dan {

struct BlockConfig {
  int c_basic = 64;
  int c_cond = 64;
  int k_basic = 3;
  int k_cond = 3;  // 1 when the conditional input stays 1x1 spatially
};

/// Dual-path conditional block. Each path runs two convolutions with a
/// leaky rectifier between them; the conditional path carries a skip, the
/// processed paths are joined by elementwise multiplication, and the basic
/// path carries a residual skip.
template <typename T>
struct Dpcb {
  BlockConfig cfg;
  Conv2d<T> b1, b2, c1, c2;

  Dpcb() = default;
  // The second conv of each path starts at a tenth of the usual scale, so a
  // fresh block is close to an identity on both paths. Without this the
  // residual branches compound geometrically with depth, and the unrolled
  // kernel-estimate feedback amplifies the growth until floats overflow.
  Dpcb(ParamStore<T>& ps, const std::string& name, const BlockConfig& cfg_,
       std::mt19937_64& rng)
      : cfg(cfg_),
        b1(ps, name + ".b1", cfg_.c_basic, cfg_.c_basic, cfg_.k_basic, rng),
        b2(ps, name + ".b2", cfg_.c_basic, cfg_.c_basic, cfg_.k_basic, rng, 1, T(0.1)),
        c1(ps, name + ".c1", cfg_.c_cond, cfg_.c_cond, cfg_.k_cond, rng),
        c2(ps, name + ".c2", cfg_.c_cond, cfg_.c_cond, cfg_.k_cond, rng, 1, T(0.1)) {}

  std::pair<int, int> forward(Tape<T>& tape, ParamStore<T>& ps, int basic, int cond) const {
    int cp = c2(tape, ps, tape.leaky_relu(c1(tape, ps, cond), T(0.2)));
    int cond_out = tape.add(cond, cp);
    int bp = b2(tape, ps, tape.leaky_relu(b1(tape, ps, basic), T(0.2)));
    int basic_out = tape.add(basic, tape.mul(bp, cond_out));
    return {basic_out, cond_out};
  }

  /// Multiply-accumulate count for one forward pass at the given spatial sizes.
  std::uint64_t macs(int h, int w, int cond_h, int cond_w) const {
    const std::uint64_t basic_path = 2ull * h * w * cfg.c_basic * cfg.c_basic *
                                     cfg.k_basic * cfg.k_basic;
    const std::uint64_t cond_path = 2ull * cond_h * cond_w * cfg.c_cond * cfg.c_cond *
                                    cfg.k_cond * cfg.k_cond;
    return basic_path + cond_path + std::uint64_t(h) * w * cfg.c_basic;
  }
};

/// Stack of DPCBs with a trailing convolution and a long skip on the basic
/// path (residual-in-residual).
template <typename T>
struct Dpcg {
  BlockConfig cfg;
  std::vector<Dpcb<T>> blocks;
  Conv2d<T> tail;
  bool long_skip = true;

  Dpcg() = default;
  Dpcg(ParamStore<T>& ps, const std::string& name, const BlockConfig& cfg_, int n_blocks,
       std::mt19937_64& rng, bool long_skip_ = true)
      : cfg(cfg_), long_skip(long_skip_) {
    for (int i = 0; i < n_blocks; ++i)
      blocks.emplace_back(ps, name + ".block" + std::to_string(i), cfg_, rng);
    tail = Conv2d<T>(ps, name + ".tail", cfg_.c_basic, cfg_.c_basic, cfg_.k_basic, rng);
  }

  std::pair<int, int> forward(Tape<T>& tape, ParamStore<T>& ps, int basic, int cond) const {
    int b = basic, c = cond;
    for (const auto& blk : blocks) std::tie(b, c) = blk.forward(tape, ps, b, c);
    b = tail(tape, ps, b);
    if (long_skip) b = tape.add(basic, b);
    return {b, c};
  }

  std::uint64_t macs(int h, int w, int cond_h, int cond_w) const {
    std::uint64_t total = 0;
    for (const auto& blk : blocks) total += blk.macs(h, w, cond_h, cond_w);
    return total + std::uint64_t(h) * w * cfg.c_basic * cfg.c_basic * cfg.k_basic * cfg.k_basic;
  }
};

/// Legacy conditional residual block: channel concatenation of basic and
/// spatially expanded conditional features, two convolutions, channel
/// attention, residual skip. Kept for the ablation harness.
template <typename T>
struct Crb {
  BlockConfig cfg;
  Conv2d<T> conv1, conv2;
  Dense<T> att_down, att_up;

  Crb() = default;
  Crb(ParamStore<T>& ps, const std::string& name, const BlockConfig& cfg_, std::mt19937_64& rng)
      : cfg(cfg_),
        conv1(ps, name + ".conv1", cfg_.c_basic + cfg_.c_cond, cfg_.c_basic, cfg_.k_basic, rng),
        conv2(ps, name + ".conv2", cfg_.c_basic, cfg_.c_basic, cfg_.k_basic, rng),
        att_down(ps, name + ".att_down", cfg_.c_basic, std::max(1, cfg_.c_basic / 4), rng),
        att_up(ps, name + ".att_up", std::max(1, cfg_.c_basic / 4), cfg_.c_basic, rng) {}

  int forward(Tape<T>& tape, ParamStore<T>& ps, int basic, int cond) const {
    const auto& bv = tape.val(basic);
    const auto& cv = tape.val(cond);
    int cexp = (cv.h == 1 && cv.w == 1 && (bv.h != 1 || bv.w != 1))
                   ? tape.broadcast_spatial(cond, bv.h, bv.w)
                   : cond;
    int x = conv2(tape, ps, tape.leaky_relu(conv1(tape, ps, tape.concat_channels(basic, cexp)),
                                            T(0.2)));
    int att = tape.sigmoid(
        att_up(tape, ps, tape.leaky_relu(att_down(tape, ps, tape.global_avg_pool(x)), T(0.2))));
    return tape.add(basic, tape.mul(x, att));
  }

  std::uint64_t macs(int h, int w) const {
    const std::uint64_t c1 = std::uint64_t(h) * w * cfg.c_basic * (cfg.c_basic + cfg.c_cond) *
                             cfg.k_basic * cfg.k_basic;
    const std::uint64_t c2 = std::uint64_t(h) * w * cfg.c_basic * cfg.c_basic * cfg.k_basic *
                             cfg.k_basic;
    return c1 + c2 + 2ull * cfg.c_basic * std::max(1, cfg.c_basic / 4);
  }
};

}  // namespace dan

#endif
