#ifndef DAN_PNG_IO_HPP
#define DAN_PNG_IO_HPP

#include <string>

#include "dan/image.hpp"

namespace dan {

/// Reads an 8- or 16-bit grayscale or RGB PNG; values divided by the max code value.
Image read_png(const std::string& path);

/// Writes 8-bit (default) or 16-bit PNG; values clamped to [0,1] and rounded.
void write_png(const std::string& path, const Image& image, int bit_depth = 8);

/// Min-max normalized single-kernel heatmap.
void write_kernel_heatmap(const std::string& path, const BlurKernel& kernel);

}  // namespace dan

#endif
