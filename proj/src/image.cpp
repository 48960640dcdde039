#include "dan/image.hpp"

#include <random>
#include <stdexcept>

namespace dan {

Image& Image::clamp() {
  for (auto& p : planes) p = p.cwiseMax(0.0).cwiseMin(1.0);
  return *this;
}

Image convolve2d(const Image& image, const BlurKernel& kernel) {
  const int h = image.height(), w = image.width();
  const int ks = kernel.size();
  if (ks % 2 == 0) throw std::invalid_argument("convolve2d: kernel size must be odd");
  if (ks > h || ks > w)
    throw std::invalid_argument("convolve2d: kernel larger than image");
  const int c = (ks - 1) / 2;

  Image out(h, w, image.channels(), image.color_space);
  for (int ch = 0; ch < image.channels(); ++ch) {
    const Arr2X& in = image.planes[ch];
    Arr2X& o = out.planes[ch];
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        double acc = 0.0;
        for (int a = 0; a < ks; ++a) {
          // true convolution: the kernel is flipped relative to correlation
          int ii = std::clamp(i - (a - c), 0, h - 1);
          for (int b = 0; b < ks; ++b) {
            int jj = std::clamp(j - (b - c), 0, w - 1);
            acc += kernel.data(a, b) * in(ii, jj);
          }
        }
        o(i, j) = acc;
      }
    }
  }
  return out;
}

Image downsample_s(const Image& image, int s) {
  if (s < 1) throw std::invalid_argument("downsample_s: s must be >= 1");
  const int h = image.height(), w = image.width();
  if (h % s != 0 || w % s != 0)
    throw std::invalid_argument("downsample_s: dimensions not divisible by s");
  Image out(h / s, w / s, image.channels(), image.color_space);
  for (int ch = 0; ch < image.channels(); ++ch)
    for (int i = 0; i < h / s; ++i)
      for (int j = 0; j < w / s; ++j)
        out.planes[ch](i, j) = image.planes[ch](i * s, j * s);
  return out;
}

Image add_awgn(const Image& image, const NoiseSpec& noise) {
  if (noise.sigma == 0.0) return image;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> dist(0.0, noise.sigma);
  Image out = image;
  for (auto& p : out.planes)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, j) += dist(rng);
  return out.clamp();
}

Image degrade(const Image& hr, const BlurKernel& kernel, int s, const NoiseSpec& noise) {
  return add_awgn(downsample_s(convolve2d(hr, kernel), s), noise);
}

Image crop(const Image& image, int top, int left, int h, int w) {
  if (top < 0 || left < 0 || top + h > image.height() || left + w > image.width())
    throw std::invalid_argument("crop: window out of bounds");
  Image out(h, w, image.channels(), image.color_space);
  for (int ch = 0; ch < image.channels(); ++ch)
    out.planes[ch] = image.planes[ch].block(top, left, h, w);
  return out;
}

Image center_crop_to_multiple(const Image& image, int s) {
  const int h = image.height() / s * s;
  const int w = image.width() / s * s;
  return crop(image, (image.height() - h) / 2, (image.width() - w) / 2, h, w);
}

Arr2X luminance(const Image& image) {
  if (image.channels() == 1) return image.planes[0];
  // BT.601 video-range Y on [0,1] inputs
  return (16.0 + 65.481 * image.planes[0] + 128.553 * image.planes[1] +
          24.966 * image.planes[2]) /
         255.0;
}

}  // namespace dan
