#include "dan/train.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

using nlohmann::json;

namespace dan {

double lr_schedule(std::int64_t step, const TrainConfig& cfg) {
  if (step < 0 || step >= cfg.total_steps)
    throw std::invalid_argument("lr_schedule: step out of range");
  return cfg.lr0 * std::pow(0.5, double(step / cfg.halving_period));
}

LossReport dan_loss(const Image& sr_T, const Image& hr, const BlurKernel& k_T,
                    const BlurKernel& k_gt, double lambda) {
  if (sr_T.height() != hr.height() || sr_T.width() != hr.width() ||
      sr_T.channels() != hr.channels())
    throw std::invalid_argument("dan_loss: image shape mismatch");
  if (k_T.size() != k_gt.size()) throw std::invalid_argument("dan_loss: kernel size mismatch");
  LossReport rep;
  double acc = 0.0;
  for (int c = 0; c < sr_T.channels(); ++c)
    acc += (sr_T.planes[c] - hr.planes[c]).abs().mean();
  rep.l1_image = acc / sr_T.channels();
  rep.l1_kernel = (k_T.data - k_gt.data).abs().mean();
  rep.total = rep.l1_image + lambda * rep.l1_kernel;
  return rep;
}

std::vector<TrainSample> Trainer::next_batch() {
  std::vector<TrainSample> batch;
  batch.reserve(cfg.batch_size);
  for (int i = 0; i < cfg.batch_size; ++i) {
    const std::uint64_t seed = derive_seed(cfg.seed, sample_counter++);
    const Image& patch = patches[seed % patches.size()];
    batch.push_back(synth_pair(patch, spec, model->basis, seed, cfg.lr_crop));
  }
  return batch;
}

LossReport Trainer::train_step(const std::vector<TrainSample>& batch) {
  const int n = int(batch.size());
  const int s = spec.scale;
  const int ch = model->cfg.restorer.img_channels;
  const int ks = model->cfg.estimator.kernel_size;
  const int d = model->basis.dim();
  const int lh = batch[0].lr.height(), lw = batch[0].lr.width();

  Tensor<float> lr_t(n, ch, lh, lw), hr_t(n, ch, lh * s, lw * s);
  Tensor<float> kgt_t(n, ks * ks, 1, 1), rgt_t(n, d, 1, 1);
  for (int in = 0; in < n; ++in) {
    for (int c = 0; c < ch; ++c)
      for (int i = 0; i < lh; ++i)
        for (int j = 0; j < lw; ++j) lr_t.at(in, c, i, j) = float(batch[in].lr.planes[c](i, j));
    for (int c = 0; c < ch; ++c)
      for (int i = 0; i < lh * s; ++i)
        for (int j = 0; j < lw * s; ++j)
          hr_t.at(in, c, i, j) = float(batch[in].hr.planes[c](i, j));
    const VecX kflat = batch[in].kernel.flatten();
    for (int i = 0; i < ks * ks; ++i) kgt_t.at(in, i, 0, 0) = float(kflat[i]);
    for (int i = 0; i < d; ++i) rgt_t.at(in, i, 0, 0) = float(batch[in].reduced.coords[i]);
  }

  model->params.zero_grad();
  Tape<float> tape;
  int lr_node = tape.constant(std::move(lr_t));
  DanNodes nodes = model->unroll(tape, lr_node, cfg.iterations);

  int loss_img = tape.mean_abs_diff(nodes.sr.back(), tape.constant(std::move(hr_t)));
  int loss_k;
  if (model->cfg.options.predict_reduced)
    loss_k = tape.mean_abs_diff(nodes.reduced.back(), tape.constant(std::move(rgt_t)));
  else
    loss_k = tape.mean_abs_diff(nodes.kernel.back(), tape.constant(std::move(kgt_t)));
  int total = tape.add(loss_img, tape.scale(loss_k, float(cfg.lambda_kernel)));

  LossReport rep;
  rep.l1_image = double(tape.val(loss_img).data[0]);
  rep.l1_kernel = double(tape.val(loss_k).data[0]);
  rep.total = double(tape.val(total).data[0]);
  rep.step = step;

  const double lr = lr_schedule(step, cfg);
  if (!std::isfinite(rep.total)) {
    std::ostringstream oss;
    oss << "train_step: non-finite loss at step " << step << " (lr " << lr << ", l1_image "
        << rep.l1_image << ", l1_kernel " << rep.l1_kernel << ")";
    throw std::runtime_error(oss.str());
  }

  tape.backward(total);
  const double gnorm = grad_global_norm(model->params);
  if (!std::isfinite(gnorm)) {
    std::ostringstream oss;
    oss << "train_step: non-finite gradient at step " << step << " (lr " << lr << ", loss "
        << rep.total << ")";
    throw std::runtime_error(oss.str());
  }
  if (cfg.clip_norm > 0.0) clip_gradients(model->params, cfg.clip_norm);
  adam_update(model->params, opt, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  ++step;
  return rep;
}

void Trainer::run(const std::function<void(const LossReport&, double lr)>& on_log) {
  while (step < cfg.total_steps) {
    const double lr = lr_schedule(step, cfg);
    LossReport rep = train_step();
    if (on_log && (rep.step % cfg.log_interval == 0 || rep.step + 1 == cfg.total_steps))
      on_log(rep, lr);
  }
}

// ---- checkpoints ----

namespace {

constexpr char kMagic[4] = {'D', 'A', 'N', 'C'};
constexpr std::uint32_t kVersion = 1;

json dan_cfg_to_json(const DanConfig& c) {
  return json{
      {"restorer",
       {{"n_groups", c.restorer.n_groups},
        {"blocks_per_group", c.restorer.blocks_per_group},
        {"channels", c.restorer.channels},
        {"scale", c.restorer.scale},
        {"reduced_dim", c.restorer.reduced_dim},
        {"img_channels", c.restorer.img_channels}}},
      {"estimator",
       {{"n_groups", c.estimator.n_groups},
        {"blocks_per_group", c.estimator.blocks_per_group},
        {"channels", c.estimator.channels},
        {"kernel_size", c.estimator.kernel_size},
        {"scale", c.estimator.scale},
        {"img_channels", c.estimator.img_channels}}},
      {"options",
       {{"use_crb", c.options.use_crb},
        {"long_skip", c.options.long_skip},
        {"softmax", c.options.softmax},
        {"predict_reduced", c.options.predict_reduced}}},
      {"default_iterations", c.default_iterations}};
}

DanConfig dan_cfg_from_json(const json& j) {
  DanConfig c;
  const json& r = j.at("restorer");
  c.restorer = {r.at("n_groups"),    r.at("blocks_per_group"), r.at("channels"),
                r.at("scale"),       r.at("reduced_dim"),      r.at("img_channels")};
  const json& e = j.at("estimator");
  c.estimator = {e.at("n_groups"), e.at("blocks_per_group"), e.at("channels"),
                 e.at("kernel_size"), e.at("scale"),         e.at("img_channels")};
  const json& o = j.at("options");
  c.options = {o.at("use_crb"), o.at("long_skip"), o.at("softmax"), o.at("predict_reduced")};
  c.default_iterations = j.at("default_iterations");
  return c;
}

json train_cfg_to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},       {"total_steps", c.total_steps},
              {"lr0", c.lr0},                     {"halving_period", c.halving_period},
              {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},           {"iterations", c.iterations},
              {"lambda_kernel", c.lambda_kernel}, {"clip_norm", c.clip_norm},
              {"seed", c.seed},                   {"lr_crop", c.lr_crop},
              {"log_interval", c.log_interval}};
}

TrainConfig train_cfg_from_json(const json& j) {
  TrainConfig c;
  c.batch_size = j.at("batch_size");
  c.total_steps = j.at("total_steps");
  c.lr0 = j.at("lr0");
  c.halving_period = j.at("halving_period");
  c.adam_beta1 = j.at("adam_beta1");
  c.adam_beta2 = j.at("adam_beta2");
  c.adam_eps = j.at("adam_eps");
  c.iterations = j.at("iterations");
  c.lambda_kernel = j.at("lambda_kernel");
  c.clip_norm = j.at("clip_norm");
  c.seed = j.at("seed");
  c.lr_crop = j.at("lr_crop");
  c.log_interval = j.at("log_interval");
  return c;
}

void write_tensor(std::ostream& os, const Tensor<float>& t) {
  const std::int32_t shape[4] = {t.n, t.c, t.h, t.w};
  os.write(reinterpret_cast<const char*>(shape), sizeof(shape));
  os.write(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
}

Tensor<float> read_tensor(std::istream& is) {
  std::int32_t shape[4];
  is.read(reinterpret_cast<char*>(shape), sizeof(shape));
  Tensor<float> t(shape[0], shape[1], shape[2], shape[3]);
  is.read(reinterpret_cast<char*>(t.data.data()), t.data.size() * sizeof(float));
  return t;
}

void write_string(std::ostream& os, const std::string& s) {
  const std::uint32_t len = std::uint32_t(s.size());
  os.write(reinterpret_cast<const char*>(&len), 4);
  os.write(s.data(), len);
}

std::string read_string(std::istream& is) {
  std::uint32_t len;
  is.read(reinterpret_cast<char*>(&len), 4);
  std::string s(len, '\0');
  is.read(s.data(), len);
  return s;
}

void write_vecd(std::ostream& os, const VecX& v) {
  const std::uint64_t n = std::uint64_t(v.size());
  os.write(reinterpret_cast<const char*>(&n), 8);
  os.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

VecX read_vecd(std::istream& is) {
  std::uint64_t n;
  is.read(reinterpret_cast<char*>(&n), 8);
  VecX v(static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(v.data()), v.size() * sizeof(double));
  return v;
}

}  // namespace

void checkpoint_save(const std::string& path, const Dan<float>& model,
                     const TrainConfig& train_cfg, const AdamState<float>& adam,
                     std::int64_t step) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint_save: cannot open " + path);
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(&kVersion), 4);

  json manifest = {{"dan", dan_cfg_to_json(model.cfg)},
                   {"train", train_cfg_to_json(train_cfg)},
                   {"step", step},
                   {"pca_basis_ref", model.basis.kernel_size},
                   {"param_count", model.params.param_count()}};
  write_string(os, manifest.dump());

  // embedded PCA basis
  const std::int32_t bsize = model.basis.kernel_size, bd = model.basis.dim();
  os.write(reinterpret_cast<const char*>(&bsize), 4);
  os.write(reinterpret_cast<const char*>(&bd), 4);
  write_vecd(os, model.basis.mean);
  for (int i = 0; i < bd; ++i) write_vecd(os, model.basis.components.row(i).transpose());

  const std::uint32_t n = std::uint32_t(model.params.entries.size());
  os.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& e : model.params.entries) {
    write_string(os, e.name);
    write_tensor(os, e.value);
  }
  os.write(reinterpret_cast<const char*>(&adam.t), 8);
  os.write(reinterpret_cast<const char*>(&step), 8);
  const std::uint32_t na = std::uint32_t(adam.m.size());
  os.write(reinterpret_cast<const char*>(&na), 4);
  for (const auto& t : adam.m) write_tensor(os, t);
  for (const auto& t : adam.v) write_tensor(os, t);
  if (!os) throw std::runtime_error("checkpoint_save: write failed for " + path);

  // sidecar manifest for cross-implementation inspection
  std::ofstream js(path + ".json");
  js << manifest.dump(2) << "\n";
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint_load: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint_load: bad magic in " + path);
  std::uint32_t version;
  is.read(reinterpret_cast<char*>(&version), 4);
  if (version != kVersion)
    throw std::runtime_error("checkpoint_load: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  json manifest = json::parse(read_string(is));
  ckpt.dan_cfg = dan_cfg_from_json(manifest.at("dan"));
  ckpt.train_cfg = train_cfg_from_json(manifest.at("train"));

  std::int32_t bsize, bd;
  is.read(reinterpret_cast<char*>(&bsize), 4);
  is.read(reinterpret_cast<char*>(&bd), 4);
  ckpt.basis.kernel_size = bsize;
  ckpt.basis.mean = read_vecd(is);
  ckpt.basis.components.resize(bd, Eigen::Index(bsize) * bsize);
  for (int i = 0; i < bd; ++i) ckpt.basis.components.row(i) = read_vecd(is).transpose();

  std::uint32_t n;
  is.read(reinterpret_cast<char*>(&n), 4);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = read_string(is);
    ckpt.params.emplace_back(std::move(name), read_tensor(is));
  }
  is.read(reinterpret_cast<char*>(&ckpt.adam.t), 8);
  is.read(reinterpret_cast<char*>(&ckpt.step), 8);
  std::uint32_t na;
  is.read(reinterpret_cast<char*>(&na), 4);
  for (std::uint32_t i = 0; i < na; ++i) ckpt.adam.m.push_back(read_tensor(is));
  for (std::uint32_t i = 0; i < na; ++i) ckpt.adam.v.push_back(read_tensor(is));
  if (!is) throw std::runtime_error("checkpoint_load: truncated file " + path);
  return ckpt;
}

std::unique_ptr<Dan<float>> restore_dan(const Checkpoint& ckpt, AdamState<float>* adam_out) {
  auto model = std::make_unique<Dan<float>>(ckpt.dan_cfg, ckpt.basis, /*seed=*/0);
  if (model->params.entries.size() != ckpt.params.size())
    throw std::runtime_error("restore_dan: parameter list mismatch (config drift)");
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    auto& dst = model->params.entries[i];
    const auto& [name, value] = ckpt.params[i];
    if (dst.name != name || !dst.value.same_shape(value))
      throw std::runtime_error("restore_dan: parameter mismatch at " + name);
    dst.value = value;
  }
  if (adam_out) *adam_out = ckpt.adam;
  return model;
}

void check_checkpoint_compatible(const Checkpoint& ckpt, int expected_scale,
                                 int expected_kernel_size) {
  if (expected_scale > 0 && ckpt.dan_cfg.restorer.scale != expected_scale) {
    std::ostringstream oss;
    oss << "checkpoint incompatible: trained for scale x" << ckpt.dan_cfg.restorer.scale
        << ", requested x" << expected_scale;
    throw std::runtime_error(oss.str());
  }
  if (expected_kernel_size > 0 && ckpt.dan_cfg.estimator.kernel_size != expected_kernel_size) {
    std::ostringstream oss;
    oss << "checkpoint incompatible: kernel size " << ckpt.dan_cfg.estimator.kernel_size
        << ", requested " << expected_kernel_size;
    throw std::runtime_error(oss.str());
  }
}

}  // namespace dan
