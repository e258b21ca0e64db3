#pragma once

#include "lto/core.hpp"

// 3x3 kernels with stride 2 and padding 1. Feature maps are stored as
// (channels x height*width) matrices, row-major within a channel.
namespace lto::nn {

inline constexpr int kKernel = 3;
inline constexpr int kStride = 2;
inline constexpr int kPad = 1;

inline int conv_out_size(int in) { return (in + 2 * kPad - kKernel) / kStride + 1; }

struct MapShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  int pixels() const { return height * width; }
  int size() const { return channels * height * width; }
};

/// Unfolds 3x3 patches: result is (C*9) x (Ho*Wo).
inline Mat im2col(const Mat& x, const MapShape& in, int out_h, int out_w) {
  Mat cols = Mat::Zero(in.channels * kKernel * kKernel, out_h * out_w);
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < kKernel; ++ky) {
      for (int kx = 0; kx < kKernel; ++kx) {
        const int row = (c * kKernel + ky) * kKernel + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * kStride - kPad + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * kStride - kPad + kx;
            if (ix < 0 || ix >= in.width) continue;
            cols(row, oy * out_w + ox) = x(c, iy * in.width + ix);
          }
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col: scatters patch columns back onto a (C x H*W) map.
inline Mat col2im(const Mat& cols, const MapShape& out, int in_h, int in_w) {
  Mat x = Mat::Zero(out.channels, out.pixels());
  for (int c = 0; c < out.channels; ++c) {
    for (int ky = 0; ky < kKernel; ++ky) {
      for (int kx = 0; kx < kKernel; ++kx) {
        const int row = (c * kKernel + ky) * kKernel + kx;
        for (int oy = 0; oy < in_h; ++oy) {
          const int iy = oy * kStride - kPad + ky;
          if (iy < 0 || iy >= out.height) continue;
          for (int ox = 0; ox < in_w; ++ox) {
            const int ix = ox * kStride - kPad + kx;
            if (ix < 0 || ix >= out.width) continue;
            x(c, iy * out.width + ix) += cols(row, oy * in_w + ox);
          }
        }
      }
    }
  }
  return x;
}

/// Strided convolution from `in` to `out` (out spatial size = conv_out_size).
struct Conv2d {
  MapShape in;
  MapShape out;
  Eigen::Index offset = 0;  // into the owning parameter vector

  Eigen::Index weight_size() const { return static_cast<Eigen::Index>(out.channels) * in.channels * 9; }
  Eigen::Index num_params() const { return weight_size() + out.channels; }

  Eigen::Map<const Mat> weight(const Vec& p) const { return {p.data() + offset, out.channels, in.channels * 9}; }
  Eigen::Map<const Vec> bias(const Vec& p) const { return {p.data() + offset + weight_size(), out.channels}; }

  /// Returns the pre-activation; cols receives the unfolded input.
  Mat forward(const Vec& p, const Mat& x, Mat& cols) const {
    cols = im2col(x, in, out.height, out.width);
    Mat y = weight(p) * cols;
    y.colwise() += bias(p);
    return y;
  }

  Mat backward(const Vec& p, const Mat& cols, const Mat& dy, Vec* grad) const {
    if (grad != nullptr) {
      Eigen::Map<Mat> gw(grad->data() + offset, out.channels, in.channels * 9);
      Eigen::Map<Vec> gb(grad->data() + offset + weight_size(), out.channels);
      gw.noalias() += dy * cols.transpose();
      gb += dy.rowwise().sum();
    }
    Mat dcols = weight(p).transpose() * dy;
    return col2im(dcols, in, out.height, out.width);
  }
};

/// Transposed strided convolution: the adjoint of a Conv2d from `out` to
/// `in`, plus a per-channel bias. Used by the decoder to upsample.
struct ConvTranspose2d {
  MapShape in;   // small map
  MapShape out;  // large map; conv_out_size(out.height) == in.height
  Eigen::Index offset = 0;

  Eigen::Index weight_size() const { return static_cast<Eigen::Index>(in.channels) * out.channels * 9; }
  Eigen::Index num_params() const { return weight_size() + out.channels; }

  Eigen::Map<const Mat> weight(const Vec& p) const { return {p.data() + offset, in.channels, out.channels * 9}; }
  Eigen::Map<const Vec> bias(const Vec& p) const { return {p.data() + offset + weight_size(), out.channels}; }

  Mat forward(const Vec& p, const Mat& x) const {
    Mat cols = weight(p).transpose() * x;
    Mat y = col2im(cols, out, in.height, in.width);
    y.colwise() += bias(p);
    return y;
  }

  Mat backward(const Vec& p, const Mat& x, const Mat& dy, Vec* grad) const {
    Mat dcols = im2col(dy, out, in.height, in.width);
    if (grad != nullptr) {
      Eigen::Map<Mat> gw(grad->data() + offset, in.channels, out.channels * 9);
      Eigen::Map<Vec> gb(grad->data() + offset + weight_size(), out.channels);
      gw.noalias() += x * dcols.transpose();
      gb += dy.rowwise().sum();
    }
    return weight(p) * dcols;
  }
};

}  // namespace lto::nn
