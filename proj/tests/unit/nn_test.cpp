#include <gtest/gtest.h>

#include "../common/oracles.hpp"
#include "lto/nn/adam.hpp"
#include "lto/nn/conv.hpp"
#include "lto/nn/mlp.hpp"
#include "lto/nn/normalize.hpp"

using namespace lto;
using lto::testing::fd_gradient;
using lto::testing::max_rel_error;

TEST(Normalize, UnitNormAndBackwardMatchesFiniteDifferences) {
  Rng rng(3);
  const Vec x = normal_vec(rng, 7);
  EXPECT_NEAR(nn::l2_normalize(x).norm(), 1.0, 1e-12);
  const Vec w = normal_vec(rng, 7);
  const auto f = [&](const Vec& v) { return w.dot(nn::l2_normalize(v)); };
  EXPECT_LT(max_rel_error(nn::l2_normalize_backward(x, w), fd_gradient(f, x)), 1e-6);
}

TEST(Normalize, ZeroVectorStaysFinite) {
  const Vec z = Vec::Zero(4);
  EXPECT_TRUE(nn::l2_normalize(z).allFinite());
  EXPECT_TRUE(nn::l2_normalize_backward(z, Vec::Ones(4)).allFinite());
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  Rng rng(11);
  nn::Mlp net({5, 8, 6, 3});
  net.init(rng);
  const Mat x = Mat::Random(5, 4);
  const Mat w = Mat::Random(3, 4);
  nn::Mlp::Tape tape;
  net.forward(x, tape);
  Vec grad;
  const Mat dx = net.backward(tape, w, &grad);

  const Vec p0 = net.params();
  const auto loss_p = [&](const Vec& p) {
    nn::Mlp n2 = net;
    n2.params() = p;
    return (n2.forward(x).array() * w.array()).sum();
  };
  EXPECT_LT(max_rel_error(grad, fd_gradient(loss_p, p0)), 1e-5);

  const auto loss_x = [&](const Vec& xv) {
    return (net.forward(Eigen::Map<const Mat>(xv.data(), 5, 4)).array() * w.array()).sum();
  };
  const Vec xv = Eigen::Map<const Vec>(x.data(), x.size());
  EXPECT_LT(max_rel_error(Eigen::Map<const Vec>(dx.data(), dx.size()), fd_gradient(loss_x, xv)), 1e-5);
}

TEST(Mlp, FinalLayerInitRange) {
  Rng rng(1);
  nn::Mlp net({4, 16, 2});
  net.init(rng, 3e-3);
  EXPECT_LE(net.weight(1).cwiseAbs().maxCoeff(), 3e-3);
  EXPECT_LE(net.bias(1).cwiseAbs().maxCoeff(), 3e-3);
  EXPECT_GT(net.weight(0).cwiseAbs().maxCoeff(), 3e-3);
}

TEST(Mlp, RejectsWrongInput) {
  nn::Mlp net({3, 2});
  EXPECT_THROW(net.forward(Mat::Zero(4, 1)), ConfigError);
}

TEST(Conv, ConvAndTransposeBackwardMatchFiniteDifferences) {
  Rng rng(5);
  const nn::MapShape in{2, 6, 5};
  const nn::MapShape out{3, nn::conv_out_size(6), nn::conv_out_size(5)};
  nn::Conv2d conv{in, out, 0};
  nn::ConvTranspose2d deconv{out, in, conv.num_params()};
  Vec p = normal_vec(rng, static_cast<int>(conv.num_params() + deconv.num_params()));
  const Mat x = Mat::Random(in.channels, in.pixels());
  const Mat w = Mat::Random(in.channels, in.pixels());

  const auto loss = [&](const Vec& pv, const Mat& xv) {
    Mat cols;
    const Mat h = conv.forward(pv, xv, cols);
    return (deconv.forward(pv, h).array() * w.array()).sum();
  };
  Mat cols;
  const Mat h = conv.forward(p, x, cols);
  Vec grad = Vec::Zero(p.size());
  const Mat dh = deconv.backward(p, h, w, &grad);
  const Mat dx = conv.backward(p, cols, dh, &grad);

  EXPECT_LT(max_rel_error(grad, fd_gradient([&](const Vec& pv) { return loss(pv, x); }, p)), 1e-6);
  const Vec xv = Eigen::Map<const Vec>(x.data(), x.size());
  const auto fx = [&](const Vec& v) { return loss(p, Eigen::Map<const Mat>(v.data(), x.rows(), x.cols())); };
  EXPECT_LT(max_rel_error(Eigen::Map<const Vec>(dx.data(), dx.size()), fd_gradient(fx, xv)), 1e-6);
}

TEST(Conv, Col2imIsAdjointOfIm2col) {
  Rng rng(2);
  const nn::MapShape s{2, 7, 6};
  const int oh = nn::conv_out_size(s.height), ow = nn::conv_out_size(s.width);
  const Mat x = Mat::Random(s.channels, s.pixels());
  const Mat c = Mat::Random(s.channels * 9, oh * ow);
  const double lhs = (nn::im2col(x, s, oh, ow).array() * c.array()).sum();
  const double rhs = (x.array() * nn::col2im(c, s, oh, ow).array()).sum();
  EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  nn::Adam opt(3, {.lr = 0.1});
  Vec p = Vec::Zero(3);
  opt.step(p, Vec(Eigen::Vector3d(2.0, -0.5, 0.0)));
  EXPECT_NEAR(p[0], -0.1, 1e-6);
  EXPECT_NEAR(p[1], 0.1, 1e-6);
  EXPECT_EQ(p[2], 0.0);
  EXPECT_EQ(opt.steps(), 1);
}

TEST(Adam, MinimizesQuadratic) {
  nn::Adam opt(2, {.lr = 0.05});
  Vec p(2);
  p << 3.0, -2.0;
  for (int i = 0; i < 2000; ++i) opt.step(p, 2.0 * p);
  EXPECT_LT(p.norm(), 1e-2);
}
