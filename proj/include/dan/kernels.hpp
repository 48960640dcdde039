#ifndef DAN_KERNELS_HPP
#define DAN_KERNELS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dan/types.hpp"

namespace dan {

/// A size x size blur kernel. Entries are non-negative and sum to one.
struct BlurKernel {
  Arr2X data;  // size x size, row index = vertical offset

  int size() const { return static_cast<int>(data.rows()); }
  double sum() const { return data.sum(); }
  VecX flatten() const;  // row-major

  static BlurKernel from_flat(const VecX& v);
};

/// PCA coordinates of a flattened kernel.
struct ReducedKernel {
  VecX coords;
  int dim() const { return static_cast<int>(coords.size()); }
};

/// Orthonormal row basis over flattened kernels, with the sample mean.
struct PcaBasis {
  VecX mean;        // size^2
  MatX components;  // d x size^2, rows orthonormal
  int kernel_size = 0;

  int dim() const { return static_cast<int>(components.rows()); }
};

enum class KernelFamily { Isotropic, Anisotropic };

struct KernelFamilySpec {
  KernelFamily family = KernelFamily::Isotropic;
  int size = 21;
  double sigma_min = 0.2, sigma_max = 4.0;  // isotropic width range
  double axis_min = 0.6, axis_max = 5.0;    // anisotropic axis range
  double rotation_min = -M_PI, rotation_max = M_PI;
  double mult_noise_max = 0.0;  // up to 0.25 in Setting 2
};

BlurKernel dirac_kernel(int size);
BlurKernel isotropic_gaussian(int size, double sigma);
BlurKernel anisotropic_gaussian(int size, double ax1, double ax2, double theta,
                                double mult_noise_max, std::uint64_t seed);

/// The 8 evenly spaced isotropic evaluation kernels for a given scale.
std::vector<BlurKernel> gaussian8(int scale);

/// Draws one kernel from the family; deterministic per seed.
BlurKernel sample_kernel(const KernelFamilySpec& spec, std::uint64_t seed);

PcaBasis pca_fit(const std::vector<BlurKernel>& samples, int d);
ReducedKernel pca_reduce(const BlurKernel& kernel, const PcaBasis& basis);
BlurKernel pca_expand(const ReducedKernel& reduced, const PcaBasis& basis);

// Binary containers ("BKRN" for kernel lists, "PCAB" for bases).
void save_kernels(const std::string& path, const std::vector<BlurKernel>& ks);
std::vector<BlurKernel> load_kernels(const std::string& path);
void save_pca_basis(const std::string& path, const PcaBasis& basis);
PcaBasis load_pca_basis(const std::string& path);

}  // namespace dan

#endif
