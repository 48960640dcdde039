#ifndef DAN_METRICS_HPP
#define DAN_METRICS_HPP

#include <string>
#include <vector>

#include "dan/image.hpp"
#include "dan/kernels.hpp"

namespace dan {

/// PSNR on the BT.601 Y channel, in dB, after shaving `shave` border pixels.
/// Identical inputs report the 100 dB cap.
double psnr_y(const Image& a, const Image& b, int shave);

/// Single-scale SSIM on Y: 11x11 Gaussian window (sigma 1.5), C1=0.01^2, C2=0.03^2.
double ssim_y(const Image& a, const Image& b, int shave);

struct KernelErrorReport {
  double l1_complete = 0.0;
  double l1_reduced = 0.0;
};

KernelErrorReport kernel_error(const BlurKernel& k_pred, const BlurKernel& k_gt,
                               const PcaBasis& basis);

/// Catmull-Rom bicubic upscale aligned with the upper-left-pixel downsampler:
/// out[i,j] interpolates the source at (i/s, j/s).
Image bicubic_upscale(const Image& lr, int s);

struct MetricRecord {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<MetricRecord> per_image;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  int shave = 0;

  void finalize();
};

}  // namespace dan

#endif
