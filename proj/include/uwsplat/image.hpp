#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "uwsplat/common.hpp"

namespace uwsplat {

// Dense row-major H x W x C buffer of linear [0,1] values. Color images use
// C=3, depth/mask style maps use C=1.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

inline void require_same_shape(const Image& a, const Image& b,
                               const std::string& what) {
  require(a.same_shape(b), what + ": shape mismatch (" +
                               std::to_string(a.height) + "x" +
                               std::to_string(a.width) + "x" +
                               std::to_string(a.channels) + " vs " +
                               std::to_string(b.height) + "x" +
                               std::to_string(b.width) + "x" +
                               std::to_string(b.channels) + ")");
}

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

// Reads an 8- or 16-bit PNG into linear [0,1] values (divide by 255 / 65535,
// no color management). Palette images expand to RGB, alpha is dropped,
// grayscale stays single channel.
inline Image read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  require(fp != nullptr, "read_png: cannot open " + path);

  png_byte header[8];
  require(std::fread(header, 1, 8, fp.get()) == 8 &&
              png_sig_cmp(header, 0, 8) == 0,
          "read_png: not a PNG file: " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "read_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("read_png: png_create_info_struct failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("read_png: decode failed for " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // to host LE
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int c = static_cast<int>(png_get_channels(png, info));
  const int depth = static_cast<int>(png_get_bit_depth(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);

  pixels.resize(stride * static_cast<std::size_t>(h));
  row_ptrs.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + stride * y;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image out(h, w, c);
  if (depth == 16) {
    const double scale = 1.0 / 65535.0;
    for (int y = 0; y < h; ++y) {
      const auto* row = reinterpret_cast<const std::uint16_t*>(row_ptrs[y]);
      for (std::size_t i = 0; i < static_cast<std::size_t>(w) * c; ++i)
        out.data[(static_cast<std::size_t>(y) * w * c) + i] = row[i] * scale;
    }
  } else {
    require(depth == 8, "read_png: unsupported bit depth in " + path);
    const double scale = 1.0 / 255.0;
    for (int y = 0; y < h; ++y) {
      const png_byte* row = row_ptrs[y];
      for (std::size_t i = 0; i < static_cast<std::size_t>(w) * c; ++i)
        out.data[(static_cast<std::size_t>(y) * w * c) + i] = row[i] * scale;
    }
  }
  return out;
}

// Writes 1- or 3-channel data as grayscale / RGB PNG at 8 or 16 bits.
// Values clamp to [0,1] before quantization.
inline void write_png(const Image& img, const std::string& path,
                      int bit_depth = 16) {
  require(img.channels == 1 || img.channels == 3,
          "write_png: only 1- or 3-channel images supported");
  require(bit_depth == 8 || bit_depth == 16, "write_png: bit depth must be 8 or 16");
  require(img.height > 0 && img.width > 0, "write_png: empty image");

  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());

  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  require(fp != nullptr, "write_png: cannot open " + path);

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(png != nullptr, "write_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("write_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("write_png: encode failed for " + path);
  }
  png_init_io(png, fp.get());
  const int color_type =
      img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  const std::size_t samples =
      static_cast<std::size_t>(img.width) * img.channels;
  auto quant = [](double v, double maxv) {
    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    return v * maxv + 0.5;
  };
  if (bit_depth == 16) {
    std::vector<std::uint16_t> row(samples);
    for (int y = 0; y < img.height; ++y) {
      for (std::size_t i = 0; i < samples; ++i)
        row[i] = static_cast<std::uint16_t>(
            quant(img.data[static_cast<std::size_t>(y) * samples + i], 65535.0));
      png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
  } else {
    std::vector<png_byte> row(samples);
    for (int y = 0; y < img.height; ++y) {
      for (std::size_t i = 0; i < samples; ++i)
        row[i] = static_cast<png_byte>(
            quant(img.data[static_cast<std::size_t>(y) * samples + i], 255.0));
      png_write_row(png, row.data());
    }
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace uwsplat
