#include "doctest.h"

#include <filesystem>

#include "dan/train.hpp"
#include "support/oracles.hpp"
#include "support/procedural.hpp"

namespace fs = std::filesystem;
using namespace dan;
using namespace dan::testsupport;

namespace {

DegradationSpec toy_spec() {
  DegradationSpec spec;
  spec.scale = 2;
  spec.kernel.family = KernelFamily::Isotropic;
  spec.kernel.size = 11;
  spec.kernel.sigma_min = 0.2;
  spec.kernel.sigma_max = 2.0;
  return spec;
}

PcaBasis toy_basis(const DegradationSpec& spec, int d) {
  std::vector<BlurKernel> ks;
  for (int i = 0; i < 100; ++i) ks.push_back(sample_kernel(spec.kernel, 300 + i));
  return pca_fit(ks, d);
}

DanConfig toy_dan_cfg(int d) {
  DanConfig cfg;
  cfg.restorer = RestorerConfig{1, 2, 8, 2, d, 3};
  cfg.estimator = EstimatorConfig{1, 2, 8, 11, 2, 3};
  return cfg;
}

TrainConfig toy_train_cfg() {
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.total_steps = 1000;
  cfg.lr0 = 1e-3;
  cfg.halving_period = 500;
  cfg.iterations = 2;
  cfg.lr_crop = 12;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("learning-rate schedule halves on the period boundary") {
  TrainConfig cfg;  // 4e-4, halving every 200k, 400k total
  CHECK(lr_schedule(0, cfg) == doctest::Approx(4e-4));
  CHECK(lr_schedule(199999, cfg) == doctest::Approx(4e-4));
  CHECK(lr_schedule(200000, cfg) == doctest::Approx(2e-4));
  CHECK(lr_schedule(350000, cfg) == doctest::Approx(2e-4));
  CHECK(lr_schedule(399999, cfg) == doctest::Approx(2e-4));
  CHECK_THROWS_AS(lr_schedule(-1, cfg), std::invalid_argument);
  CHECK_THROWS_AS(lr_schedule(400000, cfg), std::invalid_argument);
}

TEST_CASE("loss report closed forms") {
  Image hr = random_image(8, 8, 3, 1);
  Image sr = hr;
  for (auto& p : sr.planes) p += 0.25;
  BlurKernel ka = isotropic_gaussian(11, 0.9), kb = isotropic_gaussian(11, 1.5);
  LossReport rep = dan_loss(sr, hr, ka, kb, 2.0);
  CHECK(rep.l1_image == doctest::Approx(0.25));
  CHECK(rep.l1_kernel == doctest::Approx((ka.data - kb.data).abs().mean()));
  CHECK(rep.total == doctest::Approx(rep.l1_image + 2.0 * rep.l1_kernel));
  CHECK_THROWS_AS(dan_loss(random_image(8, 8, 3, 2), random_image(8, 10, 3, 3), ka, ka, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(dan_loss(hr, hr, ka, isotropic_gaussian(13, 1.0), 1.0),
                  std::invalid_argument);
}

TEST_CASE("first Adam step moves each weight by roughly the learning rate") {
  ParamStore<float> ps;
  Tensor<float> w(1, 1, 1, 2);
  w.data << 1.0f, -2.0f;
  ps.add("w", w);
  ps.entries[0].grad.data << 0.3f, -0.7f;
  AdamState<float> st;
  st.init_like(ps);
  adam_update(ps, st, 0.01, 0.9, 0.99, 1e-8);
  // m-hat = g, v-hat = g^2: the unscaled step is sign(g) times lr
  CHECK(ps.entries[0].value.data[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-5));
  CHECK(ps.entries[0].value.data[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-5));
  CHECK(st.t == 1);
}

TEST_CASE("gradient clipping rescales to the requested global norm") {
  ParamStore<float> ps;
  ps.add("a", Tensor<float>::zeros(1, 1, 1, 2));
  ps.add("b", Tensor<float>::zeros(1, 1, 1, 1));
  ps.entries[0].grad.data << 3.0f, 0.0f;
  ps.entries[1].grad.data << 4.0f;
  CHECK(grad_global_norm(ps) == doctest::Approx(5.0));
  clip_gradients(ps, 1.0);
  CHECK(grad_global_norm(ps) == doctest::Approx(1.0));
  CHECK(ps.entries[0].grad.data[0] == doctest::Approx(0.6));
  clip_gradients(ps, 10.0);  // already below: untouched
  CHECK(grad_global_norm(ps) == doctest::Approx(1.0));
}

TEST_CASE("a training step updates both sub-networks and overfitting shrinks the loss") {
  DegradationSpec spec = toy_spec();
  PcaBasis basis = toy_basis(spec, 4);
  Dan<float> model(toy_dan_cfg(4), basis, 9);
  std::vector<Image> patches = {procedural_image(48, 48, 1), procedural_image(48, 48, 2)};
  Trainer trainer(model, toy_train_cfg(), spec, patches);

  std::vector<Tensor<float>> before;
  for (const auto& e : model.params.entries) before.push_back(e.value);

  auto batch = trainer.next_batch();
  REQUIRE(batch.size() == 2);
  CHECK(batch[0].lr.height() == 12);
  CHECK(batch[0].hr.height() == 24);

  const double first = trainer.train_step(batch).total;
  CHECK(std::isfinite(first));
  int moved_restorer = 0, moved_estimator = 0;
  for (size_t i = 0; i < before.size(); ++i)
    if ((model.params.entries[i].value.data - before[i].data).abs().maxCoeff() > 0) {
      if (model.params.entries[i].name.rfind("restorer", 0) == 0) ++moved_restorer;
      if (model.params.entries[i].name.rfind("estimator", 0) == 0) ++moved_estimator;
    }
  CHECK(moved_restorer > 0);
  CHECK(moved_estimator > 0);

  // repeat the same batch: the loss must come down
  double last = first;
  for (int i = 0; i < 24; ++i) last = trainer.train_step(batch).total;
  CHECK(last < first);
}

TEST_CASE("training is deterministic per seed") {
  DegradationSpec spec = toy_spec();
  PcaBasis basis = toy_basis(spec, 4);
  std::vector<Image> patches = {procedural_image(48, 48, 3)};
  double totals[2];
  for (int run = 0; run < 2; ++run) {
    Dan<float> model(toy_dan_cfg(4), basis, 9);
    Trainer trainer(model, toy_train_cfg(), spec, patches);
    LossReport rep;
    for (int i = 0; i < 3; ++i) rep = trainer.train_step();
    totals[run] = rep.total;
  }
  CHECK(totals[0] == totals[1]);
}

TEST_CASE("checkpoints roundtrip bit-exactly and refuse the wrong deployment") {
  DegradationSpec spec = toy_spec();
  PcaBasis basis = toy_basis(spec, 4);
  Dan<float> model(toy_dan_cfg(4), basis, 11);
  std::vector<Image> patches = {procedural_image(48, 48, 4)};
  TrainConfig tcfg = toy_train_cfg();
  Trainer trainer(model, tcfg, spec, patches);
  for (int i = 0; i < 2; ++i) trainer.train_step();

  fs::path dir = fs::temp_directory_path() / "dan_test_ckpt";
  fs::create_directories(dir);
  const std::string path = (dir / "toy.danc").string();
  checkpoint_save(path, model, tcfg, trainer.opt, trainer.step);
  CHECK(fs::exists(path + ".json"));

  Checkpoint ckpt = checkpoint_load(path);
  CHECK(ckpt.step == 2);
  CHECK(ckpt.adam.t == 2);
  CHECK(ckpt.train_cfg.lr0 == tcfg.lr0);
  CHECK(ckpt.basis.kernel_size == 11);

  AdamState<float> adam;
  auto restored = restore_dan(ckpt, &adam);
  CHECK(adam.m.size() == trainer.opt.m.size());
  Image probe = random_image(10, 10, 3, 5);
  Image a = model.infer(probe, 2).sr;
  Image b = restored->infer(probe, 2).sr;
  CHECK(max_abs_diff(a, b) == 0.0);

  // resuming reproduces the uninterrupted trajectory
  Trainer resumed(*restored, tcfg, spec, patches);
  resumed.opt = adam;
  resumed.step = ckpt.step;
  resumed.sample_counter = std::uint64_t(ckpt.step) * tcfg.batch_size;
  LossReport r1, r2;
  for (int i = 0; i < 2; ++i) r1 = trainer.train_step();
  for (int i = 0; i < 2; ++i) r2 = resumed.train_step();
  CHECK(r1.total == r2.total);

  check_checkpoint_compatible(ckpt, 2, 11);
  CHECK_THROWS_AS(check_checkpoint_compatible(ckpt, 4, -1), std::runtime_error);
  CHECK_THROWS_AS(check_checkpoint_compatible(ckpt, 2, 21), std::runtime_error);
  CHECK_THROWS_AS(checkpoint_load((dir / "missing.danc").string()), std::runtime_error);
}
