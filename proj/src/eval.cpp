#include "dan/eval.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include "dan/data.hpp"
#include "dan/png_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dan {

namespace {

struct LoadedSet {
  EvalManifest manifest;
  std::vector<BlurKernel> kernels;
  std::string dir;
};

LoadedSet load_set(const std::string& set_dir) {
  LoadedSet set;
  set.dir = set_dir;
  set.manifest = load_manifest((fs::path(set_dir) / "manifest.jsonl").string());
  set.kernels = load_kernels((fs::path(set_dir) / set.manifest.kernels_path).string());
  return set;
}

void finalize_kernel_errors(EvalResult& res) {
  for (const auto& e : res.kernel_errors) {
    res.mean_l1_complete += e.l1_complete;
    res.mean_l1_reduced += e.l1_reduced;
  }
  if (!res.kernel_errors.empty()) {
    res.mean_l1_complete /= double(res.kernel_errors.size());
    res.mean_l1_reduced /= double(res.kernel_errors.size());
  }
}

}  // namespace

EvalResult evaluate_set(Dan<float>& model, const std::string& set_dir, const EvalOptions& opts) {
  LoadedSet set = load_set(set_dir);
  const int s = set.manifest.scale;
  const int shave = opts.shave >= 0 ? opts.shave : s;
  EvalResult res;
  res.metrics.shave = shave;
  for (const auto& entry : set.manifest.entries) {
    Image lr = read_png((fs::path(set.dir) / entry.lr_path).string());
    Image hr = center_crop_to_multiple(read_png(entry.hr_path), s);
    DanResult out = model.infer(lr, opts.iterations);
    res.metrics.per_image.push_back(
        {entry.lr_path, psnr_y(out.sr, hr, shave), ssim_y(out.sr, hr, shave)});
    if (opts.collect_kernel_errors)
      res.kernel_errors.push_back(
          kernel_error(out.kernel, set.kernels[entry.kernel_index], model.basis));
  }
  res.metrics.finalize();
  finalize_kernel_errors(res);
  return res;
}

EvalResult non_blind_eval(Dan<float>& model, const std::string& set_dir,
                          const EvalOptions& opts) {
  LoadedSet set = load_set(set_dir);
  if (set.kernels.empty())
    throw std::runtime_error("non_blind_eval: eval set carries no GT kernels");
  const int s = set.manifest.scale;
  const int shave = opts.shave >= 0 ? opts.shave : s;
  EvalResult res;
  res.metrics.shave = shave;
  for (const auto& entry : set.manifest.entries) {
    Image lr = read_png((fs::path(set.dir) / entry.lr_path).string());
    Image hr = center_crop_to_multiple(read_png(entry.hr_path), s);
    Image sr = model.restore_with_kernel(lr, set.kernels[entry.kernel_index]);
    res.metrics.per_image.push_back(
        {entry.lr_path, psnr_y(sr, hr, shave), ssim_y(sr, hr, shave)});
  }
  res.metrics.finalize();
  return res;
}

std::vector<SweepRow> iteration_sweep(Dan<float>& model, const std::string& set_dir,
                                      int t_min, int t_max, int shave) {
  std::vector<SweepRow> rows;
  for (int t = t_min; t <= t_max; ++t) {
    EvalOptions opts;
    opts.iterations = t;
    opts.shave = shave;
    opts.collect_kernel_errors = false;
    EvalResult res = evaluate_set(model, set_dir, opts);
    rows.push_back({t, res.metrics.mean_psnr, res.metrics.mean_ssim});
  }
  return rows;
}

BenchmarkReport benchmark(Dan<float>& model, int lr_h, int lr_w, int iterations,
                          int n_timing_runs) {
  BenchmarkReport rep;
  rep.param_count = model.params.param_count();
  rep.macs = model.macs(lr_h, lr_w, iterations);
  rep.probe_h = lr_h;
  rep.probe_w = lr_w;
  rep.iterations = iterations;

  Image probe(lr_h, lr_w, model.cfg.restorer.img_channels);
  for (int c = 0; c < probe.channels(); ++c)
    probe.planes[c] = 0.5 * (1.0 + (Arr2X::Random(lr_h, lr_w)));
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < n_timing_runs; ++i) model.infer(probe, iterations);
  const auto t1 = std::chrono::steady_clock::now();
  rep.sec_per_image = std::chrono::duration<double>(t1 - t0).count() / n_timing_runs;
  return rep;
}

void write_metric_csv(const std::string& path, const EvalResult& result) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_metric_csv: cannot open " + path);
  const bool with_kernels = !result.kernel_errors.empty();
  os << "image,psnr_y,ssim_y";
  if (with_kernels) os << ",kernel_l1_complete,kernel_l1_reduced";
  os << "\n";
  for (size_t i = 0; i < result.metrics.per_image.size(); ++i) {
    const auto& r = result.metrics.per_image[i];
    os << r.name << "," << r.psnr << "," << r.ssim;
    if (with_kernels)
      os << "," << result.kernel_errors[i].l1_complete << ","
         << result.kernel_errors[i].l1_reduced;
    os << "\n";
  }
}

void write_metric_json(const std::string& path, const EvalResult& result,
                       const EvalOptions& opts) {
  json j = {{"mean_psnr_y", result.metrics.mean_psnr},
            {"mean_ssim_y", result.metrics.mean_ssim},
            {"n_images", result.metrics.per_image.size()},
            {"shave", result.metrics.shave},
            {"iterations", opts.iterations},
            {"ycbcr", "bt601-video-range"}};
  if (!result.kernel_errors.empty()) {
    j["mean_kernel_l1_complete"] = result.mean_l1_complete;
    j["mean_kernel_l1_reduced"] = result.mean_l1_reduced;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_metric_json: cannot open " + path);
  os << j.dump(2) << "\n";
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_sweep_csv: cannot open " + path);
  os << "iterations,psnr_y,ssim_y\n";
  for (const auto& r : rows) os << r.iterations << "," << r.psnr << "," << r.ssim << "\n";
}

}  // namespace dan
