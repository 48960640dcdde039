#include "doctest.h"

#include "dan/metrics.hpp"
#include "support/oracles.hpp"

using namespace dan;
using namespace dan::testsupport;

namespace {

// Independent single-scale SSIM: raw-moment formulation (E[x^2] - mu^2 etc.)
// instead of centered sums, same window and constants.
double ssim_oracle(const Arr2X& a, const Arr2X& b) {
  constexpr int win = 11, rad = 5;
  Arr2X g(win, win);
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j)
      g(i, j) = std::exp(-((i - rad) * (i - rad) + (j - rad) * (j - rad)) / 4.5);
  g /= g.sum();
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0;
  int count = 0;
  for (int i = rad; i < int(a.rows()) - rad; ++i)
    for (int j = rad; j < int(a.cols()) - rad; ++j) {
      double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
      for (int di = -rad; di <= rad; ++di)
        for (int dj = -rad; dj <= rad; ++dj) {
          const double w = g(di + rad, dj + rad);
          const double x = a(i + di, j + dj), y = b(i + di, j + dj);
          ma += w * x;
          mb += w * y;
          maa += w * x * x;
          mbb += w * y * y;
          mab += w * x * y;
        }
      const double va = maa - ma * ma, vb = mbb - mb * mb, cov = mab - ma * mb;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

Image offset_y(const Image& base, double delta) {
  Image out = base;
  out.planes[0] += delta;  // deliberately unclamped
  return out;
}

}  // namespace

TEST_CASE("identical images report the fidelity cap") {
  Image a = random_image(24, 24, 3, 1);
  CHECK(psnr_y(a, a, 0) == 100.0);
  CHECK(ssim_y(a, a, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("a constant luminance offset of 0.1 reads exactly 20 dB") {
  Image a = random_image(32, 32, 1, 2);
  a.color_space = ColorSpace::Y;
  CHECK(psnr_y(a, offset_y(a, 0.1), 0) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr_y(a, offset_y(a, 0.01), 0) == doctest::Approx(40.0).epsilon(1e-12));
  // symmetric
  CHECK(psnr_y(offset_y(a, 0.1), a, 0) == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("fidelity is computed on the BT.601 luminance of RGB inputs") {
  Image a = random_image(32, 32, 3, 3);
  Image b = a;
  b.planes[0] += 0.1;  // red-only offset
  const double dy = 0.1 * 65.481 / 255.0;
  CHECK(psnr_y(a, b, 0) == doctest::Approx(-20.0 * std::log10(dy)).epsilon(1e-9));
}

TEST_CASE("border shaving excludes edge-only differences") {
  Image a = random_image(20, 20, 1, 4);
  a.color_space = ColorSpace::Y;
  Image b = a;
  b.planes[0].row(0) += 0.5;
  b.planes[0].col(19) -= 0.3;
  CHECK(psnr_y(a, b, 0) < 40.0);
  CHECK(psnr_y(a, b, 1) == 100.0);
  CHECK_THROWS_AS(psnr_y(a, b, 10), std::invalid_argument);
  Image c = random_image(20, 21, 1, 5);
  CHECK_THROWS_AS(psnr_y(a, c, 0), std::invalid_argument);
}

TEST_CASE("structural similarity agrees with an independent formulation") {
  for (int trial = 0; trial < 3; ++trial) {
    Image a = random_image(26, 30, 1, 10 + trial);
    a.color_space = ColorSpace::Y;
    Image b = a;
    std::mt19937_64 rng(20 + trial);
    std::normal_distribution<double> g(0.0, 0.03);
    for (int i = 0; i < 26; ++i)
      for (int j = 0; j < 30; ++j) b.planes[0](i, j) += g(rng);
    CHECK(ssim_y(a, b, 0) ==
          doctest::Approx(ssim_oracle(a.planes[0], b.planes[0])).epsilon(1e-6));
    CHECK(ssim_y(a, b, 0) == doctest::Approx(ssim_y(b, a, 0)).epsilon(1e-12));
  }
}

TEST_CASE("structural similarity degrades monotonically with noise level") {
  Image a = random_image(40, 40, 3, 30);
  Image small = add_awgn(a, {0.02, 1});
  Image big = add_awgn(a, {0.10, 1});
  CHECK(ssim_y(a, small, 0) > ssim_y(a, big, 0));
  CHECK(ssim_y(a, big, 0) < 1.0);
  CHECK_THROWS_AS(ssim_y(random_image(8, 8, 1, 0), random_image(8, 8, 1, 1), 0),
                  std::invalid_argument);
}

TEST_CASE("kernel discrepancy report") {
  std::vector<BlurKernel> samples;
  for (int i = 0; i < 40; ++i)
    samples.push_back(isotropic_gaussian(11, 0.4 + 0.05 * i));
  PcaBasis basis = pca_fit(samples, 5);

  BlurKernel k = isotropic_gaussian(11, 1.0);
  KernelErrorReport same = kernel_error(k, k, basis);
  CHECK(same.l1_complete == 0.0);
  CHECK(same.l1_reduced == 0.0);

  BlurKernel k2 = isotropic_gaussian(11, 1.8);
  KernelErrorReport diff = kernel_error(k, k2, basis);
  CHECK(diff.l1_complete == doctest::Approx((k.data - k2.data).abs().mean()));
  CHECK(diff.l1_reduced > 0.0);
  CHECK_THROWS_AS(kernel_error(k, isotropic_gaussian(13, 1.0), basis), std::invalid_argument);
}

TEST_CASE("bicubic upscale: constants, identity at scale 1, linear reproduction") {
  Image flat(6, 6, 1, ColorSpace::Y);
  flat.planes[0].setConstant(0.37);
  Image up = bicubic_upscale(flat, 3);
  CHECK(up.height() == 18);
  CHECK((up.planes[0] - 0.37).abs().maxCoeff() < 1e-12);

  Image r = random_image(7, 9, 3, 40);
  CHECK(max_abs_diff(bicubic_upscale(r, 1), r) < 1e-12);

  // Catmull-Rom reproduces affine ramps away from the clamped borders
  Image ramp(8, 8, 1, ColorSpace::Y);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) ramp.planes[0](i, j) = 0.1 + 0.05 * i + 0.03 * j;
  Image up2 = bicubic_upscale(ramp, 2);
  for (int i = 4; i < 12; ++i)
    for (int j = 4; j < 12; ++j)
      CHECK(up2.planes[0](i, j) ==
            doctest::Approx(0.1 + 0.05 * (i / 2.0) + 0.03 * (j / 2.0)).epsilon(1e-9));
}

TEST_CASE("bicubic upscale aligns with the upper-left-pixel downsampler") {
  // downsampling a smooth image and upscaling back lands near the original
  Image smooth(32, 32, 1, ColorSpace::Y);
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j)
      smooth.planes[0](i, j) = 0.5 + 0.3 * std::sin(0.3 * i) * std::cos(0.25 * j);
  Image rec = bicubic_upscale(downsample_s(smooth, 2), 2);
  CHECK(psnr_y(smooth, rec, 2) > 35.0);
  // on the sample grid itself the interpolation is exact
  for (int i = 0; i < 16; ++i)
    CHECK(rec.planes[0](2 * i, 0) == doctest::Approx(smooth.planes[0](2 * i, 0)).epsilon(1e-9));
}

TEST_CASE("metric report averages its rows") {
  MetricReport rep;
  rep.per_image = {{"a", 30.0, 0.9}, {"b", 34.0, 0.7}};
  rep.finalize();
  CHECK(rep.mean_psnr == doctest::Approx(32.0));
  CHECK(rep.mean_ssim == doctest::Approx(0.8));
}
