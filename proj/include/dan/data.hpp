#ifndef DAN_DATA_HPP
#define DAN_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dan/image.hpp"
#include "dan/kernels.hpp"

namespace dan {

/// Fully determines degradation synthesis for one experimental setting.
struct DegradationSpec {
  int scale = 4;
  KernelFamilySpec kernel;
  double noise_sigma = 0.0;
  std::string pca_basis_ref;  // path of the serialized basis, when fitted

  /// Setting 1: isotropic widths per scale, kernel size 21.
  static DegradationSpec setting1(int scale);
  /// Setting 2: noisy anisotropic kernels, size 11 (x2) or 31 (x4).
  static DegradationSpec setting2(int scale);
};

struct TrainSample {
  Image lr;   // 64 x 64
  Image hr;   // 64s x 64s
  BlurKernel kernel;
  ReducedKernel reduced;
  std::uint64_t seed = 0;
};

/// Deterministic per-sample seed derived from (global_seed, index).
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index);

/// Samples a kernel, degrades the HR patch, and crops aligned LR/HR windows.
TrainSample synth_pair(const Image& hr_patch, const DegradationSpec& spec,
                       const PcaBasis& basis, std::uint64_t seed, int lr_crop = 64);

/// Tiles an HR image into patch_size x patch_size crops with the given stride.
std::vector<Image> tile_patches(const Image& hr, int patch_size = 256, int stride = 192);

/// Synthetic RGB image with mixed gradients, sinusoids, and sharp rectangles;
/// deterministic per seed. Stands in for photographic content in demos and
/// toy-scale experiments.
Image procedural_image(int h, int w, std::uint64_t seed);

struct EvalEntry {
  std::string lr_path;
  std::string hr_path;
  int kernel_index = 0;
};

struct EvalManifest {
  std::string kernels_path;
  std::vector<EvalEntry> entries;
  int scale = 0;
  double noise_sigma = 0.0;
};

/// Degrades every HR image under hr_dir with every kernel and writes LR PNGs,
/// the kernel container, and a JSON-lines manifest into out_dir.
EvalManifest build_eval_set(const std::string& hr_dir, const DegradationSpec& spec,
                            const std::vector<BlurKernel>& kernels,
                            const std::string& out_dir, std::uint64_t seed);

EvalManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const EvalManifest& manifest);

/// Fits (or loads from cache_dir, keyed by spec and seed) the PCA basis for a
/// degradation spec over n_samples freshly sampled kernels.
PcaBasis fit_or_load_basis(const DegradationSpec& spec, int d, std::uint64_t seed,
                           const std::string& cache_dir, int n_samples = 10000);

}  // namespace dan

#endif
