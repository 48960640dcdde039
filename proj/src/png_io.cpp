#include "dan/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace dan {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Image read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("read_png: libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: decode error in " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const int w = png_get_image_width(png, info);
  const int h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // little-endian reads below
  png_read_update_info(png, info);

  bit_depth = png_get_bit_depth(png, info);
  color_type = png_get_color_type(png, info);
  const int channels = (color_type == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
  const double maxval = bit_depth == 16 ? 65535.0 : 255.0;

  std::vector<std::vector<png_byte>> rows(h, std::vector<png_byte>(png_get_rowbytes(png, info)));
  std::vector<png_bytep> row_ptrs(h);
  for (int i = 0; i < h; ++i) row_ptrs[i] = rows[i].data();
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image out(h, w, channels, channels == 1 ? ColorSpace::Y : ColorSpace::RGB);
  for (int i = 0; i < h; ++i) {
    const png_byte* r = rows[i].data();
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < channels; ++c) {
        double v;
        if (bit_depth == 16) {
          const int idx = 2 * (j * channels + c);
          v = double(r[idx] | (r[idx + 1] << 8));
        } else {
          v = double(r[j * channels + c]);
        }
        out.planes[c](i, j) = v / maxval;
      }
  }
  return out;
}

void write_png(const std::string& path, const Image& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16)
    throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  const int h = image.height(), w = image.width(), channels = image.channels();
  if (h < 1 || w < 1 || (channels != 1 && channels != 3))
    throw std::invalid_argument("write_png: invalid image shape");

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw std::runtime_error("write_png: libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: encode error for " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, bit_depth,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const double maxval = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<png_byte> row(size_t(w) * channels * (bit_depth / 8));
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < channels; ++c) {
        const double v = std::clamp(image.planes[c](i, j), 0.0, 1.0);
        const unsigned q = unsigned(std::lround(v * maxval));
        if (bit_depth == 16) {
          row[2 * (j * channels + c)] = png_byte(q >> 8);  // PNG is big-endian
          row[2 * (j * channels + c) + 1] = png_byte(q & 0xff);
        } else {
          row[j * channels + c] = png_byte(q);
        }
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_kernel_heatmap(const std::string& path, const BlurKernel& kernel) {
  const double lo = kernel.data.minCoeff(), hi = kernel.data.maxCoeff();
  Image img(kernel.size(), kernel.size(), 1, ColorSpace::Y);
  img.planes[0] = hi > lo ? ((kernel.data - lo) / (hi - lo)).eval() : Arr2X::Zero(kernel.size(), kernel.size());
  write_png(path, img);
}

}  // namespace dan
