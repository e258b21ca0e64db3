#include <gtest/gtest.h>

#include <cmath>

#include "../common/oracles.hpp"

using namespace lto;
using lto::testing::fd_gradient;
using lto::testing::max_rel_error;

namespace {

EmbeddingConfig tiny_config() {
  EmbeddingConfig c;
  c.height = 4;
  c.width = 4;
  c.channels = 1;
  c.latent_dim = 2;
  c.conv_channels = {2};
  return c;
}

Image random_image(Rng& rng, int h, int w, int c) {
  Image im(h, w, c);
  for (auto& p : im.pixels) p = static_cast<float>(uniform(rng, 0.0, 1.0));
  return im;
}

Dataset peg_dataset(int n_total, int n_positive, std::uint64_t seed, int size = 16) {
  envs::Peg2dConfig pc;
  pc.image_size = size;
  pc.peg_radius_px = 1.5;
  envs::Peg2d env(pc);
  envs::DemoConfig dc;
  dc.n_total = n_total;
  dc.n_positive = n_positive;
  Rng rng(seed);
  return envs::generate_demonstrations(env, dc, rng);
}

}  // namespace

TEST(Embedding, EncoderOutputIsUnitNormAndDeterministic) {
  Rng rng(1);
  EmbeddingConfig c;
  c.height = c.width = 16;
  c.conv_channels = {4, 8};
  EmbeddingModel m(c);
  m.init(rng);
  for (int i = 0; i < 20; ++i) {
    const Image im = random_image(rng, 16, 16, 3);
    const Latent z = m.encode(im);
    EXPECT_NEAR(z.norm(), 1.0, 1e-6);
    EXPECT_EQ(z, m.encode(im));
  }
}

TEST(Embedding, OneDimensionalEncoderReturnsSign) {
  EmbeddingConfig c;
  c.height = c.width = c.channels = 1;
  c.latent_dim = 1;
  c.conv_channels = {};
  EmbeddingModel m(c);
  m.params().setZero();
  m.params()[0] = 3.0;  // encoder linear weight; bias stays 0
  Image im(1, 1, 1, 0.5f);
  const Latent z = m.encode(im);
  ASSERT_EQ(z.size(), 1);
  EXPECT_DOUBLE_EQ(z[0], 1.0);
}

TEST(Embedding, ShapeMismatchIsConfigError) {
  EmbeddingModel m(tiny_config());
  EXPECT_THROW(m.encode(Image(5, 4, 1)), ConfigError);
  EXPECT_THROW(m.decode(Vec::Zero(3)), ConfigError);
}

TEST(Embedding, DecodeShapeRangeAndDeterminism) {
  Rng rng(2);
  EmbeddingModel m(tiny_config());
  m.init(rng);
  const Image im = random_image(rng, 4, 4, 1);
  const Image out = m.decode(m.encode(im));
  EXPECT_TRUE(out.same_shape(im));
  EXPECT_TRUE(out.in_unit_range());
  EXPECT_EQ(out.pixels, m.decode(m.encode(im)).pixels);
}

TEST(Embedding, ParameterCountDependsOnlyOnShape) {
  EmbeddingModel a(tiny_config()), b(tiny_config());
  EXPECT_EQ(a.num_params(), b.num_params());
  EmbeddingConfig c = tiny_config();
  c.latent_dim = 3;
  EXPECT_NE(EmbeddingModel(c).num_params(), a.num_params());
}

TEST(Embedding, ContrastiveLossExamples) {
  // Identity encoder on two pixels: images on the unit circle are their own
  // latents, so chord lengths can be set directly.
  EmbeddingConfig c;
  c.height = 1;
  c.width = 2;
  c.channels = 1;
  c.latent_dim = 2;
  c.conv_channels = {};
  EmbeddingModel m(c);
  m.params().setZero();
  m.params()[0] = 1.0;  // W = I (column-major 2x2)
  m.params()[3] = 1.0;
  auto img = [](double angle) {
    Image im(1, 2, 1);
    im.pixels = {static_cast<float>(std::cos(angle)), static_cast<float>(std::sin(angle))};
    return im;
  };
  auto at_distance = [](double d) { return 2.0 * std::asin(d / 2.0); };  // chord length d on the unit circle
  const Image a = img(0.1);
  const Image p = img(0.1 + at_distance(0.1));
  const Image n = img(0.1 + at_distance(0.3));
  const double l = loss_contrastive({std::cref(a), std::cref(p), std::cref(n)}, m, 0.5);
  EXPECT_NEAR(l, 0.1 + 0.2, 1e-6);

  EXPECT_NEAR(loss_contrastive({std::cref(a), std::cref(a), std::cref(a)}, m, 0.5), 0.5, 1e-12);

  const Image far = img(0.1 + at_distance(0.8));
  EXPECT_NEAR(loss_contrastive({std::cref(a), std::cref(a), std::cref(far)}, m, 0.5), 0.0, 1e-12);
}

TEST(Embedding, HingeDeadzoneGivesNoNegativeGradient) {
  EmbeddingConfig c;
  c.height = 1;
  c.width = 2;
  c.channels = 1;
  c.latent_dim = 2;
  c.conv_channels = {};
  EmbeddingModel m(c);
  m.params().setZero();
  m.params()[0] = 1.0;
  m.params()[3] = 1.0;
  Image a(1, 2, 1), n(1, 2, 1);
  a.pixels = {0.9f, 0.1f};
  n.pixels = {0.1f, 0.9f};
  ASSERT_GE((m.encode(a) - m.encode(n)).norm(), 0.5);
  // Positive equals anchor, so any nonzero gradient would come from the negative.
  Vec grad;
  EXPECT_EQ(loss_contrastive({std::cref(a), std::cref(a), std::cref(n)}, m, 0.5, &grad), 0.0);
  EXPECT_TRUE(grad.isZero(0.0));
}

TEST(Embedding, AutoencoderLossExamples) {
  // No conv stages and a zero decoder: every reconstruction is sigmoid(0) = 0.5.
  EmbeddingConfig c;
  c.height = 1;
  c.width = 2;
  c.channels = 1;
  c.latent_dim = 2;
  c.conv_channels = {};
  EmbeddingModel m(c);
  m.params().setZero();
  m.params()[0] = 1.0;
  m.params()[3] = 1.0;
  Image im(1, 2, 1, 0.5f);
  EXPECT_EQ(loss_autoencoder(im, m), 0.0);
  im.pixels[1] = 1.0f;
  EXPECT_DOUBLE_EQ(loss_autoencoder(im, m), 0.5);
}

TEST(Embedding, LossTotalIsSumOfComponents) {
  Rng rng(8);
  EmbeddingModel m(tiny_config());
  m.init(rng);
  const Image a = random_image(rng, 4, 4, 1), p = random_image(rng, 4, 4, 1), n = random_image(rng, 4, 4, 1);
  const Triplet t{std::cref(a), std::cref(p), std::cref(n)};
  EXPECT_DOUBLE_EQ(loss_total(t, m, 0.5), loss_autoencoder(a, m) + loss_contrastive(t, m, 0.5));
  EXPECT_GE(loss_contrastive(t, m, 0.5), 0.0);
}

TEST(Embedding, LossTotalGradientMatchesFiniteDifferences) {
  Rng rng(21);
  EmbeddingModel m(tiny_config());
  m.init(rng);
  const Image a = random_image(rng, 4, 4, 1), p = random_image(rng, 4, 4, 1), n = random_image(rng, 4, 4, 1);
  const Triplet t{std::cref(a), std::cref(p), std::cref(n)};
  Vec grad;
  loss_total(t, m, 1.5, &grad);  // wide margin keeps the negative branch active
  const auto f = [&](const Vec& params) {
    EmbeddingModel mm = m;
    mm.params() = params;
    return loss_total(t, mm, 1.5);
  };
  EXPECT_LT(max_rel_error(grad, fd_gradient(f, m.params())), 1e-3);
}

TEST(Embedding, TripletsFromTwoFrameEpisode) {
  Dataset ds;
  Episode ep;
  ep.frames = {Image(2, 2, 1, 0.0f), Image(2, 2, 1, 1.0f)};
  ep.actions = {Vec::Zero(1)};
  ep.rewards = {0.0};
  ds.episodes.push_back(ep);
  Rng rng(1);
  for (const auto& t : sample_triplets(ds, 20, rng)) {
    EXPECT_EQ(t.anchor, (FrameRef{0, 0}));
    EXPECT_EQ(t.positive, (FrameRef{0, 1}));
  }
  EXPECT_THROW(sample_triplets(Dataset{}, 1, rng), ConfigError);
}

TEST(Embedding, TripletSamplingIsDeterministicAndAdjacent) {
  const Dataset ds = peg_dataset(4, 2, 9, 8);
  Rng r1(5), r2(5);
  const auto a = sample_triplets(ds, 50, r1);
  const auto b = sample_triplets(ds, 50, r2);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].anchor, b[i].anchor);
    EXPECT_EQ(a[i].negative, b[i].negative);
    EXPECT_EQ(a[i].anchor.episode, a[i].positive.episode);
    EXPECT_EQ(a[i].anchor.step + 1, a[i].positive.step);
    const bool near = a[i].negative.episode == a[i].anchor.episode &&
                      a[i].negative.step + 1 >= a[i].anchor.step && a[i].negative.step <= a[i].anchor.step + 1;
    EXPECT_FALSE(near);
  }
}

TEST(Embedding, NegativeSelectionIsUniformWithinThreeSigma) {
  // 100 frames in 10 episodes of 10; a frame is eligible as a negative unless
  // it lies within one step of the anchor, so the expected count of each frame
  // is the sum over anchors of 1 / (#eligible frames).
  Dataset ds;
  for (int e = 0; e < 10; ++e) {
    Episode ep;
    for (int t = 0; t < 10; ++t) ep.frames.emplace_back(1, 1, 1, 0.0f);
    for (int t = 0; t < 9; ++t) {
      ep.actions.push_back(Vec::Zero(1));
      ep.rewards.push_back(0.0);
    }
    ds.episodes.push_back(ep);
  }
  const int draws = 10000;
  Rng rng(77);
  const auto trips = sample_triplets(ds, draws, rng);
  std::vector<int> counts(100, 0);
  for (const auto& t : trips) ++counts[t.negative.episode * 10 + t.negative.step];

  std::vector<double> p(100, 0.0);
  const double anchors = 90.0;
  for (int e = 0; e < 10; ++e) {
    for (int s = 0; s < 9; ++s) {
      const int excluded = 1 + (s > 0 ? 1 : 0) + 1;
      for (int f = 0; f < 100; ++f) {
        const int fe = f / 10, fs = f % 10;
        const bool near = fe == e && fs + 1 >= s && fs <= s + 1;
        if (!near) p[f] += 1.0 / anchors / (100.0 - excluded);
      }
    }
  }
  for (int f = 0; f < 100; ++f) {
    const double mean = draws * p[f];
    const double sigma = std::sqrt(draws * p[f] * (1.0 - p[f]));
    EXPECT_LE(std::abs(counts[f] - mean), 3.0 * sigma + 1.0) << "frame " << f;
  }
}

TEST(Embedding, ZeroEpochsReturnsInitialization) {
  const Dataset ds = peg_dataset(2, 1, 3, 8);
  EmbeddingConfig c;
  c.height = c.width = 8;
  c.conv_channels = {2};
  EmbeddingTrainConfig tc;
  tc.epochs = 0;
  tc.seed = 17;
  const EmbeddingModel trained = train_embedding(ds, c, tc);
  EmbeddingModel init(c);
  Rng rng(17);
  init.init(rng);
  EXPECT_EQ(trained.params(), init.params());
}

TEST(Embedding, TrainingIsDeterministicAndReducesHeldOutLoss) {
  const Dataset train = peg_dataset(50, 19, 1);
  const Dataset held_out = peg_dataset(10, 4, 2);
  EmbeddingConfig c;
  c.height = c.width = 16;
  c.conv_channels = {4, 8};
  c.latent_dim = 8;
  EmbeddingTrainConfig tc;
  tc.epochs = 0;
  tc.seed = 5;
  const double before = mean_loss_total(held_out, train_embedding(train, c, tc), 200, 99);
  tc.epochs = 200;
  EmbeddingTrainReport rep;
  const EmbeddingModel m = train_embedding(train, c, tc, &rep);
  const double after = mean_loss_total(held_out, m, 200, 99);
  EXPECT_LT(after, before);
  EXPECT_EQ(rep.epoch_loss.size(), 200u);

  tc.epochs = 3;
  EXPECT_EQ(train_embedding(train, c, tc).params(), train_embedding(train, c, tc).params());
}

TEST(Embedding, CheckpointRoundTrip) {
  Rng rng(6);
  EmbeddingModel m(tiny_config());
  m.init(rng);
  const auto back = EmbeddingModel::from_checkpoint(m.to_checkpoint());
  EXPECT_EQ(back.params(), m.params());
  EXPECT_EQ(back.config().alpha, m.config().alpha);
  const auto h = m.to_checkpoint().header;
  EXPECT_EQ(h.at("d"), 2);
  EXPECT_EQ(h.at("kind"), "embedding");
}
