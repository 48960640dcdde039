#include "dan/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "dan/png_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dan {

DegradationSpec DegradationSpec::setting1(int scale) {
  DegradationSpec spec;
  spec.scale = scale;
  spec.kernel.family = KernelFamily::Isotropic;
  spec.kernel.size = 21;
  spec.kernel.sigma_min = 0.2;
  switch (scale) {
    case 2: spec.kernel.sigma_max = 2.0; break;
    case 3: spec.kernel.sigma_max = 3.0; break;
    case 4: spec.kernel.sigma_max = 4.0; break;
    default: throw std::invalid_argument("setting1: scale must be 2, 3 or 4");
  }
  return spec;
}

DegradationSpec DegradationSpec::setting2(int scale) {
  DegradationSpec spec;
  spec.scale = scale;
  spec.kernel.family = KernelFamily::Anisotropic;
  spec.kernel.axis_min = 0.6;
  spec.kernel.axis_max = 5.0;
  spec.kernel.mult_noise_max = 0.25;
  switch (scale) {
    case 2: spec.kernel.size = 11; break;
    case 4: spec.kernel.size = 31; break;
    default: throw std::invalid_argument("setting2: scale must be 2 or 4");
  }
  return spec;
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index) {
  // splitmix64 over the pair
  std::uint64_t z = global_seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

TrainSample synth_pair(const Image& hr_patch, const DegradationSpec& spec,
                       const PcaBasis& basis, std::uint64_t seed, int lr_crop) {
  const int s = spec.scale;
  if (hr_patch.height() < lr_crop * s || hr_patch.width() < lr_crop * s)
    throw std::invalid_argument("synth_pair: HR patch smaller than the crop window");

  Image hr = center_crop_to_multiple(hr_patch, s);
  std::mt19937_64 rng(seed);
  BlurKernel kernel = sample_kernel(spec.kernel, rng());
  NoiseSpec noise{spec.noise_sigma, rng()};
  Image lr_full = degrade(hr, kernel, s, noise);

  std::uniform_int_distribution<int> dt(0, lr_full.height() - lr_crop);
  std::uniform_int_distribution<int> dl(0, lr_full.width() - lr_crop);
  const int top = dt(rng), left = dl(rng);

  TrainSample sample;
  sample.lr = crop(lr_full, top, left, lr_crop, lr_crop);
  sample.hr = crop(hr, top * s, left * s, lr_crop * s, lr_crop * s);
  sample.reduced = pca_reduce(kernel, basis);
  sample.kernel = std::move(kernel);
  sample.seed = seed;
  return sample;
}

std::vector<Image> tile_patches(const Image& hr, int patch_size, int stride) {
  std::vector<Image> patches;
  const int h = hr.height(), w = hr.width();
  if (h < patch_size || w < patch_size) return patches;
  for (int top = 0; top + patch_size <= h; top += stride)
    for (int left = 0; left + patch_size <= w; left += stride)
      patches.push_back(crop(hr, top, left, patch_size, patch_size));
  return patches;
}

Image procedural_image(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Image img(h, w, 3);

  // smooth base gradient per channel
  for (int c = 0; c < 3; ++c) {
    const double gx = u01(rng) * 2 - 1, gy = u01(rng) * 2 - 1, off = u01(rng);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        img.planes[c](i, j) = 0.5 + 0.25 * (gx * j / w + gy * i / h) + 0.25 * (off - 0.5);
  }
  // sinusoidal textures (shared across channels with per-channel gain)
  for (int t = 0; t < 4; ++t) {
    const double fx = 0.5 + u01(rng) * 7.0, fy = 0.5 + u01(rng) * 7.0, ph = u01(rng) * 6.28;
    double gain[3] = {0.1 * u01(rng), 0.1 * u01(rng), 0.1 * u01(rng)};
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double v = std::sin(6.2832 * (fx * j / w + fy * i / h) + ph);
        for (int c = 0; c < 3; ++c) img.planes[c](i, j) += gain[c] * v;
      }
  }
  // sharp rectangles and bars
  const int n_rects = 6 + int(u01(rng) * 6);
  for (int r = 0; r < n_rects; ++r) {
    const int rh = 2 + int(u01(rng) * h / 3), rw = 2 + int(u01(rng) * w / 3);
    const int top = int(u01(rng) * (h - rh)), left = int(u01(rng) * (w - rw));
    double col[3] = {u01(rng), u01(rng), u01(rng)};
    const double alpha = 0.4 + 0.6 * u01(rng);
    for (int i = top; i < top + rh; ++i)
      for (int j = left; j < left + rw; ++j)
        for (int c = 0; c < 3; ++c)
          img.planes[c](i, j) = (1 - alpha) * img.planes[c](i, j) + alpha * col[c];
  }
  return img.clamp();
}

EvalManifest build_eval_set(const std::string& hr_dir, const DegradationSpec& spec,
                            const std::vector<BlurKernel>& kernels,
                            const std::string& out_dir, std::uint64_t seed) {
  std::vector<fs::path> hr_files;
  for (const auto& e : fs::directory_iterator(hr_dir))
    if (e.path().extension() == ".png") hr_files.push_back(e.path());
  std::sort(hr_files.begin(), hr_files.end());
  if (hr_files.empty()) throw std::runtime_error("build_eval_set: no PNGs in " + hr_dir);

  fs::create_directories(fs::path(out_dir) / "lr");
  EvalManifest manifest;
  manifest.scale = spec.scale;
  manifest.noise_sigma = spec.noise_sigma;
  manifest.kernels_path = "kernels.bkrn";
  save_kernels((fs::path(out_dir) / manifest.kernels_path).string(), kernels);

  std::uint64_t index = 0;
  for (const auto& hr_path : hr_files) {
    Image hr;
    try {
      hr = read_png(hr_path.string());
    } catch (const std::exception& e) {
      throw std::runtime_error("build_eval_set: failed reading " + hr_path.string() + ": " +
                               e.what());
    }
    Image hr_cropped = center_crop_to_multiple(hr, spec.scale);
    for (size_t ki = 0; ki < kernels.size(); ++ki, ++index) {
      NoiseSpec noise{spec.noise_sigma, derive_seed(seed, index)};
      Image lr = degrade(hr_cropped, kernels[ki], spec.scale, noise);
      std::ostringstream name;
      name << hr_path.stem().string() << "_k" << ki << ".png";
      const std::string rel = "lr/" + name.str();
      write_png((fs::path(out_dir) / rel).string(), lr);
      manifest.entries.push_back({rel, fs::absolute(hr_path).string(), int(ki)});
    }
  }
  save_manifest((fs::path(out_dir) / "manifest.jsonl").string(), manifest);
  return manifest;
}

void save_manifest(const std::string& path, const EvalManifest& manifest) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_manifest: cannot open " + path);
  json header = {{"kernels", manifest.kernels_path},
                 {"scale", manifest.scale},
                 {"noise_sigma", manifest.noise_sigma}};
  os << header.dump() << "\n";
  for (const auto& e : manifest.entries) {
    json rec = {{"lr", e.lr_path}, {"hr", e.hr_path}, {"kernel_index", e.kernel_index}};
    os << rec.dump() << "\n";
  }
}

EvalManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_manifest: cannot open " + path);
  EvalManifest manifest;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("load_manifest: empty file " + path);
  json header = json::parse(line);
  manifest.kernels_path = header.at("kernels");
  manifest.scale = header.at("scale");
  manifest.noise_sigma = header.value("noise_sigma", 0.0);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    manifest.entries.push_back({rec.at("lr"), rec.at("hr"), rec.at("kernel_index")});
  }
  return manifest;
}

PcaBasis fit_or_load_basis(const DegradationSpec& spec, int d, std::uint64_t seed,
                           const std::string& cache_dir, int n_samples) {
  std::string cache_path;
  if (!cache_dir.empty()) {
    std::ostringstream key;
    key << "pca_s" << spec.kernel.size << "_d" << d << "_f"
        << (spec.kernel.family == KernelFamily::Isotropic ? "iso" : "aniso") << "_"
        << spec.kernel.sigma_min << "_" << spec.kernel.sigma_max << "_" << spec.kernel.axis_min
        << "_" << spec.kernel.axis_max << "_m" << spec.kernel.mult_noise_max << "_seed" << seed
        << "_n" << n_samples << ".pcab";
    cache_path = (fs::path(cache_dir) / key.str()).string();
    if (fs::exists(cache_path)) return load_pca_basis(cache_path);
  }
  std::vector<BlurKernel> samples;
  samples.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i)
    samples.push_back(sample_kernel(spec.kernel, derive_seed(seed, i)));
  PcaBasis basis = pca_fit(samples, d);
  if (!cache_path.empty()) {
    fs::create_directories(cache_dir);
    save_pca_basis(cache_path, basis);
  }
  return basis;
}

}  // namespace dan
