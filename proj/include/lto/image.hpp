#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "lto/core.hpp"
#include "lto/io/png.hpp"

namespace lto {

/// Pixel observation, channel-major (C x H x W), values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t size() const { return pixels.size(); }
  float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }

  bool same_shape(const Image& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  /// (C x H*W) matrix view in double precision.
  Mat as_map() const {
    Mat m(channels, height * width);
    for (int c = 0; c < channels; ++c)
      for (int i = 0; i < height * width; ++i) m(c, i) = pixels[static_cast<std::size_t>(c) * height * width + i];
    return m;
  }

  Vec flat() const {
    Vec v(static_cast<Eigen::Index>(pixels.size()));
    for (std::size_t i = 0; i < pixels.size(); ++i) v[static_cast<Eigen::Index>(i)] = pixels[i];
    return v;
  }

  static Image from_flat(const Vec& v, int h, int w, int c) {
    require(v.size() == static_cast<Eigen::Index>(h) * w * c, "image: flat size mismatch");
    Image im(h, w, c);
    for (Eigen::Index i = 0; i < v.size(); ++i) im.pixels[static_cast<std::size_t>(i)] = static_cast<float>(v[i]);
    return im;
  }

  bool in_unit_range() const {
    for (float p : pixels)
      if (!(p >= 0.0f && p <= 1.0f)) return false;
    return true;
  }
};

/// Rounds every pixel to the nearest multiple of 1/255 so that 8-bit PNG
/// storage is lossless.
inline void quantize(Image& im) {
  for (float& p : im.pixels) p = std::round(std::clamp(p, 0.0f, 1.0f) * 255.0f) / 255.0f;
}

inline io::Raster to_raster(const Image& im) {
  io::Raster r;
  r.height = im.height;
  r.width = im.width;
  r.channels = im.channels;
  r.data.resize(im.size());
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x)
      for (int c = 0; c < im.channels; ++c)
        r.data[(static_cast<std::size_t>(y) * im.width + x) * im.channels + c] =
            static_cast<std::uint8_t>(std::lround(std::clamp(im.at(c, y, x), 0.0f, 1.0f) * 255.0f));
  return r;
}

inline Image from_raster(const io::Raster& r) {
  Image im(r.height, r.width, r.channels);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x)
      for (int c = 0; c < r.channels; ++c)
        im.at(c, y, x) = static_cast<float>(r.data[(static_cast<std::size_t>(y) * r.width + x) * r.channels + c]) / 255.0f;
  return im;
}

}  // namespace lto
