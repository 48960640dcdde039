#ifndef DAN_TRAIN_HPP
#define DAN_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dan/data.hpp"
#include "dan/network.hpp"

namespace dan {

struct TrainConfig {
  int batch_size = 64;
  std::int64_t total_steps = 400000;
  double lr0 = 4e-4;
  std::int64_t halving_period = 200000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double adam_eps = 1e-8;
  int iterations = 4;  // T
  double lambda_kernel = 1.0;
  double clip_norm = 0.0;  // 0 disables; 10 for CRB runs
  std::uint64_t seed = 0;
  int lr_crop = 64;
  std::int64_t log_interval = 100;
};

struct LossReport {
  double l1_image = 0.0;
  double l1_kernel = 0.0;
  double total = 0.0;
  std::int64_t step = 0;
};

/// lr0 * 0.5^floor(step / halving_period); step must lie in [0, total_steps).
double lr_schedule(std::int64_t step, const TrainConfig& cfg);

/// Last-iteration supervision: mean-abs image error plus lambda times
/// mean-abs complete-kernel error.
LossReport dan_loss(const Image& sr_T, const Image& hr, const BlurKernel& k_T,
                    const BlurKernel& k_gt, double lambda);

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m, v;
  std::int64_t t = 0;

  void init_like(const ParamStore<T>& ps) {
    m.clear();
    v.clear();
    for (const auto& e : ps.entries) {
      m.push_back(Tensor<T>::zeros(e.value.n, e.value.c, e.value.h, e.value.w));
      v.push_back(Tensor<T>::zeros(e.value.n, e.value.c, e.value.h, e.value.w));
    }
  }
};

template <typename T>
double grad_global_norm(const ParamStore<T>& ps) {
  double sq = 0.0;
  for (const auto& e : ps.entries) sq += double(e.grad.data.square().sum());
  return std::sqrt(sq);
}

template <typename T>
void clip_gradients(ParamStore<T>& ps, double max_norm) {
  const double norm = grad_global_norm(ps);
  if (norm > max_norm && norm > 0.0) {
    const T f = T(max_norm / norm);
    for (auto& e : ps.entries) e.grad.data *= f;
  }
}

template <typename T>
void adam_update(ParamStore<T>& ps, AdamState<T>& st, double lr, double beta1, double beta2,
                 double eps) {
  ++st.t;
  const double bc1 = 1.0 - std::pow(beta1, double(st.t));
  const double bc2 = 1.0 - std::pow(beta2, double(st.t));
  for (size_t i = 0; i < ps.entries.size(); ++i) {
    auto& g = ps.entries[i].grad.data;
    auto& m = st.m[i].data;
    auto& v = st.v[i].data;
    m = T(beta1) * m + T(1.0 - beta1) * g;
    v = T(beta2) * v + T(1.0 - beta2) * g.square();
    ps.entries[i].value.data -=
        T(lr) * (m / T(bc1)) / ((v / T(bc2)).sqrt() + T(eps));
  }
}

/// Single-owner training driver: on-the-fly pair synthesis, unrolled forward,
/// last-iteration L1 loss, Adam with the step-halving schedule.
class Trainer {
 public:
  TrainConfig cfg;
  DegradationSpec spec;
  Dan<float>* model = nullptr;  // not owned
  AdamState<float> opt;
  std::vector<Image> patches;
  std::int64_t step = 0;
  std::uint64_t sample_counter = 0;

  Trainer(Dan<float>& model_, const TrainConfig& cfg_, const DegradationSpec& spec_,
          std::vector<Image> patches_)
      : cfg(cfg_), spec(spec_), model(&model_), patches(std::move(patches_)) {
    if (patches.empty()) throw std::invalid_argument("Trainer: no training patches");
    opt.init_like(model->params);
  }

  std::vector<TrainSample> next_batch();
  LossReport train_step(const std::vector<TrainSample>& batch);
  LossReport train_step() { return train_step(next_batch()); }

  /// Runs until cfg.total_steps, invoking on_log every log_interval steps.
  void run(const std::function<void(const LossReport&, double lr)>& on_log = nullptr);
};

// ---- checkpoints ----

struct Checkpoint {
  DanConfig dan_cfg;
  TrainConfig train_cfg;
  PcaBasis basis;
  std::vector<std::pair<std::string, Tensor<float>>> params;
  AdamState<float> adam;
  std::int64_t step = 0;
};

void checkpoint_save(const std::string& path, const Dan<float>& model,
                     const TrainConfig& train_cfg, const AdamState<float>& adam,
                     std::int64_t step);
Checkpoint checkpoint_load(const std::string& path);

/// Rebuilds the model and optimizer state from a checkpoint.
std::unique_ptr<Dan<float>> restore_dan(const Checkpoint& ckpt, AdamState<float>* adam_out = nullptr);

/// Throws with an explicit reason when the checkpoint does not match the
/// expected deployment configuration.
void check_checkpoint_compatible(const Checkpoint& ckpt, int expected_scale,
                                 int expected_kernel_size = -1);

}  // namespace dan

#endif
