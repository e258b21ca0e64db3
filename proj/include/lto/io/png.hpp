#pragma once

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "lto/core.hpp"

namespace lto::io {

/// 8-bit interleaved raster (HWC), channels 1 or 3.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

inline void write_png(const std::filesystem::path& path, const Raster& r) {
  require(r.channels == 1 || r.channels == 3, "png: only gray or RGB rasters are supported");
  require(r.data.size() == static_cast<std::size_t>(r.height) * r.width * r.channels, "png: raster size mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ConfigError("png: cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (png == nullptr || info == nullptr) throw ConfigError("png: allocation failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ConfigError("png: write failed for '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, r.width, r.height, 8, r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(r.width) * r.channels;
  for (int y = 0; y < r.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(r.data.data() + y * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Raster read_png(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ConfigError("png: cannot open '" + path.string() + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (png == nullptr || info == nullptr) throw ConfigError("png: allocation failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ConfigError("png: read failed for '" + path.string() + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  Raster r;
  r.width = static_cast<int>(png_get_image_width(png, info));
  r.height = static_cast<int>(png_get_image_height(png, info));
  r.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  r.data.resize(stride * r.height);
  for (int y = 0; y < r.height; ++y) png_read_row(png, r.data.data() + y * stride, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return r;
}

}  // namespace lto::io
