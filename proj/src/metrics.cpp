#include "dan/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace dan {

namespace {

constexpr double kPsnrCap = 100.0;

Arr2X shaved_luminance(const Image& img, int shave) {
  Arr2X y = luminance(img);
  const int h = int(y.rows()), w = int(y.cols());
  if (2 * shave >= h || 2 * shave >= w)
    throw std::invalid_argument("metrics: shave leaves no pixels");
  return y.block(shave, shave, h - 2 * shave, w - 2 * shave);
}

void check_shapes(const Image& a, const Image& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels())
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

}  // namespace

double psnr_y(const Image& a, const Image& b, int shave) {
  check_shapes(a, b, "psnr_y");
  const Arr2X ya = shaved_luminance(a, shave), yb = shaved_luminance(b, shave);
  const double mse = (ya - yb).square().mean();
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim_y(const Image& a, const Image& b, int shave) {
  check_shapes(a, b, "ssim_y");
  const Arr2X ya = shaved_luminance(a, shave), yb = shaved_luminance(b, shave);
  const int h = int(ya.rows()), w = int(ya.cols());

  // 11x11 Gaussian window, sigma 1.5
  constexpr int win = 11, rad = 5;
  Arr2X g(win, win);
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j)
      g(i, j) = std::exp(-((i - rad) * (i - rad) + (j - rad) * (j - rad)) / (2.0 * 1.5 * 1.5));
  g /= g.sum();

  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  int count = 0;
  // valid positions only: the window must fit inside the shaved plane
  for (int i = rad; i < h - rad; ++i)
    for (int j = rad; j < w - rad; ++j) {
      double mu_a = 0, mu_b = 0;
      for (int di = -rad; di <= rad; ++di)
        for (int dj = -rad; dj <= rad; ++dj) {
          const double wgt = g(di + rad, dj + rad);
          mu_a += wgt * ya(i + di, j + dj);
          mu_b += wgt * yb(i + di, j + dj);
        }
      double var_a = 0, var_b = 0, cov = 0;
      for (int di = -rad; di <= rad; ++di)
        for (int dj = -rad; dj <= rad; ++dj) {
          const double wgt = g(di + rad, dj + rad);
          const double da = ya(i + di, j + dj) - mu_a;
          const double db = yb(i + di, j + dj) - mu_b;
          var_a += wgt * da * da;
          var_b += wgt * db * db;
          cov += wgt * da * db;
        }
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  if (count == 0) throw std::invalid_argument("ssim_y: image too small for the window");
  return total / count;
}

KernelErrorReport kernel_error(const BlurKernel& k_pred, const BlurKernel& k_gt,
                               const PcaBasis& basis) {
  if (k_pred.size() != k_gt.size())
    throw std::invalid_argument("kernel_error: size mismatch");
  KernelErrorReport rep;
  rep.l1_complete = (k_pred.data - k_gt.data).abs().mean();
  rep.l1_reduced = (pca_reduce(k_pred, basis).coords - pca_reduce(k_gt, basis).coords)
                       .cwiseAbs()
                       .mean();
  return rep;
}

namespace {

// Catmull-Rom (a = -0.5)
double cubic(double x) {
  x = std::abs(x);
  if (x < 1.0) return 1.5 * x * x * x - 2.5 * x * x + 1.0;
  if (x < 2.0) return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
  return 0.0;
}

}  // namespace

Image bicubic_upscale(const Image& lr, int s) {
  const int h = lr.height(), w = lr.width();
  Image out(h * s, w * s, lr.channels(), lr.color_space);
  for (int c = 0; c < lr.channels(); ++c) {
    const Arr2X& in = lr.planes[c];
    for (int i = 0; i < h * s; ++i) {
      const double fy = double(i) / s;
      const int iy = int(std::floor(fy));
      for (int j = 0; j < w * s; ++j) {
        const double fx = double(j) / s;
        const int ix = int(std::floor(fx));
        double acc = 0.0, wsum = 0.0;
        for (int dy = -1; dy <= 2; ++dy) {
          const int yy = std::clamp(iy + dy, 0, h - 1);
          const double wy = cubic(fy - (iy + dy));
          for (int dx = -1; dx <= 2; ++dx) {
            const int xx = std::clamp(ix + dx, 0, w - 1);
            const double wgt = wy * cubic(fx - (ix + dx));
            acc += wgt * in(yy, xx);
            wsum += wgt;
          }
        }
        out.planes[c](i, j) = acc / wsum;
      }
    }
  }
  return out.clamp();
}

void MetricReport::finalize() {
  mean_psnr = 0.0;
  mean_ssim = 0.0;
  for (const auto& r : per_image) {
    mean_psnr += r.psnr;
    mean_ssim += r.ssim;
  }
  if (!per_image.empty()) {
    mean_psnr /= double(per_image.size());
    mean_ssim /= double(per_image.size());
  }
}

}  // namespace dan
