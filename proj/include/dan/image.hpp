#ifndef DAN_IMAGE_HPP
#define DAN_IMAGE_HPP

#include <cstdint>
#include <vector>

#include "dan/kernels.hpp"
#include "dan/types.hpp"

namespace dan {

enum class ColorSpace { RGB, Y };

/// H x W x C image with values in [0,1], stored as one plane per channel.
struct Image {
  std::vector<Arr2X> planes;
  ColorSpace color_space = ColorSpace::RGB;

  Image() = default;
  Image(int h, int w, int c, ColorSpace cs = ColorSpace::RGB)
      : planes(c, Arr2X::Zero(h, w)), color_space(cs) {}

  int height() const { return planes.empty() ? 0 : static_cast<int>(planes[0].rows()); }
  int width() const { return planes.empty() ? 0 : static_cast<int>(planes[0].cols()); }
  int channels() const { return static_cast<int>(planes.size()); }

  Image& clamp();  // clamps all planes to [0,1] in place
};

struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// Replicate-padded 2-D convolution, per channel. Output size equals input size.
Image convolve2d(const Image& image, const BlurKernel& kernel);

/// Keeps the upper-left pixel of each s x s patch. H and W must divide by s.
Image downsample_s(const Image& image, int s);

/// Seeded AWGN followed by a clamp to [0,1].
Image add_awgn(const Image& image, const NoiseSpec& noise);

/// y = (x (*) k) down_s + n
Image degrade(const Image& hr, const BlurKernel& kernel, int s, const NoiseSpec& noise);

Image center_crop_to_multiple(const Image& image, int s);
Image crop(const Image& image, int top, int left, int h, int w);

/// BT.601 luminance plane of an RGB (or already-Y) image.
Arr2X luminance(const Image& image);

}  // namespace dan

#endif
