#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lto/dataset.hpp"
#include "lto/image.hpp"
#include "lto/io/checkpoint.hpp"
#include "lto/nn/adam.hpp"
#include "lto/nn/conv.hpp"
#include "lto/nn/normalize.hpp"

namespace lto {

struct EmbeddingConfig {
  int height = 64;
  int width = 64;
  int channels = 3;
  int latent_dim = 20;
  // One entry per stride-2 convolution stage of the encoder.
  std::vector<int> conv_channels{16, 32, 32};
  double alpha = 0.5;
};

/// Non-owning (anchor, positive, negative) view into a dataset.
struct Triplet {
  std::reference_wrapper<const Image> anchor;
  std::reference_wrapper<const Image> positive;
  std::reference_wrapper<const Image> negative;
};

namespace detail {
struct Linear {
  int in = 0;
  int out = 0;
  Eigen::Index offset = 0;
  Eigen::Index num_params() const { return static_cast<Eigen::Index>(in) * out + out; }
  Eigen::Map<const Mat> weight(const Vec& p) const { return {p.data() + offset, out, in}; }
  Eigen::Map<const Vec> bias(const Vec& p) const { return {p.data() + offset + static_cast<Eigen::Index>(in) * out, out}; }
  void backward_params(Vec* grad, const Vec& dy, const Vec& x) const {
    Eigen::Map<Mat>(grad->data() + offset, out, in).noalias() += dy * x.transpose();
    Eigen::Map<Vec>(grad->data() + offset + static_cast<Eigen::Index>(in) * out, out) += dy;
  }
};

inline Vec flatten(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }
inline Mat unflatten(const Vec& v, int rows, int cols) { return Eigen::Map<const Mat>(v.data(), rows, cols); }
inline Mat relu_mask(const Mat& pre) { return (pre.array() > 0.0).cast<double>().matrix(); }
}  // namespace detail

/// Convolutional encoder E (stride-2 3x3 stages, linear layer, l2
/// normalization) and its mirrored decoder D (linear layer, transposed
/// convolutions, logistic output). Hidden activations are rectified-linear.
class EmbeddingModel {
 public:
  struct EncoderTape {
    std::vector<Mat> cols;  // unfolded inputs per conv stage
    std::vector<Mat> pre;   // pre-activations per conv stage
    Vec flat;               // input of the linear layer
    Vec raw;                // pre-normalization embedding
  };
  struct DecoderTape {
    Vec z;
    Vec linear_pre;
    std::vector<Mat> inputs;  // inputs of each transposed conv stage
    std::vector<Mat> pre;     // pre-activations of each stage
    Mat output;               // sigmoid output (C x H*W)
  };

  EmbeddingModel() = default;

  explicit EmbeddingModel(EmbeddingConfig cfg) : cfg_(std::move(cfg)) {
    require(cfg_.height > 0 && cfg_.width > 0 && cfg_.channels > 0, "embedding: image dims must be positive");
    require(cfg_.latent_dim > 0, "embedding: latent_dim must be positive");
    Eigen::Index offset = 0;
    std::vector<nn::MapShape> shapes{{cfg_.channels, cfg_.height, cfg_.width}};
    for (int ch : cfg_.conv_channels) {
      require(ch > 0, "embedding: conv channel counts must be positive");
      const auto& in = shapes.back();
      nn::MapShape out{ch, nn::conv_out_size(in.height), nn::conv_out_size(in.width)};
      enc_convs_.push_back({in, out, offset});
      offset += enc_convs_.back().num_params();
      shapes.push_back(out);
    }
    bottleneck_ = shapes.back();
    enc_linear_ = {bottleneck_.size(), cfg_.latent_dim, offset};
    offset += enc_linear_.num_params();
    dec_linear_ = {cfg_.latent_dim, bottleneck_.size(), offset};
    offset += dec_linear_.num_params();
    for (int s = static_cast<int>(shapes.size()) - 1; s >= 1; --s) {
      dec_deconvs_.push_back({shapes[s], shapes[s - 1], offset});
      offset += dec_deconvs_.back().num_params();
    }
    params_ = Vec::Zero(offset);
  }

  void init(Rng& rng) {
    auto fill = [&](Eigen::Index begin, Eigen::Index n, double bound) {
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = begin; i < begin + n; ++i) params_[i] = dist(rng);
    };
    for (const auto& c : enc_convs_) fill(c.offset, c.num_params(), 1.0 / std::sqrt(c.in.channels * 9.0));
    fill(enc_linear_.offset, enc_linear_.num_params(), 1.0 / std::sqrt(enc_linear_.in));
    fill(dec_linear_.offset, dec_linear_.num_params(), 1.0 / std::sqrt(dec_linear_.in));
    for (const auto& d : dec_deconvs_) fill(d.offset, d.num_params(), 1.0 / std::sqrt(d.in.channels * 9.0 / 4.0));
  }

  const EmbeddingConfig& config() const { return cfg_; }
  int latent_dim() const { return cfg_.latent_dim; }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }
  Eigen::Index num_params() const { return params_.size(); }

  void check_image(const Image& im) const {
    require(im.height == cfg_.height && im.width == cfg_.width && im.channels == cfg_.channels,
            "embedding: image shape " + std::to_string(im.height) + "x" + std::to_string(im.width) + "x" +
                std::to_string(im.channels) + " does not match model " + std::to_string(cfg_.height) + "x" +
                std::to_string(cfg_.width) + "x" + std::to_string(cfg_.channels));
  }

  Latent encode(const Image& im) const {
    EncoderTape tape;
    return encode(im, tape);
  }

  Latent encode(const Image& im, EncoderTape& tape) const {
    check_image(im);
    Mat h = im.as_map();
    tape.cols.resize(enc_convs_.size());
    tape.pre.resize(enc_convs_.size());
    for (std::size_t i = 0; i < enc_convs_.size(); ++i) {
      tape.pre[i] = enc_convs_[i].forward(params_, h, tape.cols[i]);
      h = tape.pre[i].cwiseMax(0.0);
    }
    tape.flat = detail::flatten(h);
    tape.raw = enc_linear_.weight(params_) * tape.flat + enc_linear_.bias(params_);
    return nn::l2_normalize(tape.raw);
  }

  /// Accumulates dL/dparams given dL/dz for a recorded encoding.
  void encode_backward(const EncoderTape& tape, const Vec& dz, Vec* grad) const {
    const Vec draw = nn::l2_normalize_backward(tape.raw, dz);
    if (grad != nullptr) enc_linear_.backward_params(grad, draw, tape.flat);
    if (enc_convs_.empty()) return;
    Vec dflat = enc_linear_.weight(params_).transpose() * draw;
    Mat g = detail::unflatten(dflat, bottleneck_.channels, bottleneck_.pixels());
    for (int i = static_cast<int>(enc_convs_.size()) - 1; i >= 0; --i) {
      g = g.cwiseProduct(detail::relu_mask(tape.pre[i]));
      g = enc_convs_[i].backward(params_, tape.cols[i], g, grad);
    }
  }

  Image decode(const Latent& z) const {
    DecoderTape tape;
    decode(z, tape);
    return to_image(tape.output);
  }

  /// Returns the (C x H*W) reconstruction map.
  const Mat& decode(const Latent& z, DecoderTape& tape) const {
    require(z.size() == cfg_.latent_dim, "embedding: latent has dimension " + std::to_string(z.size()) +
                                             ", expected " + std::to_string(cfg_.latent_dim));
    tape.z = z;
    tape.linear_pre = dec_linear_.weight(params_) * z + dec_linear_.bias(params_);
    Mat h = detail::unflatten(tape.linear_pre, bottleneck_.channels, bottleneck_.pixels());
    tape.inputs.resize(dec_deconvs_.size());
    tape.pre.resize(dec_deconvs_.size());
    for (std::size_t i = 0; i < dec_deconvs_.size(); ++i) {
      tape.inputs[i] = h.cwiseMax(0.0);
      tape.pre[i] = dec_deconvs_[i].forward(params_, tape.inputs[i]);
      h = tape.pre[i];
    }
    tape.output = (1.0 / (1.0 + (-h.array()).exp())).matrix();
    return tape.output;
  }

  /// Accumulates dL/dparams given dL/d(output map); returns dL/dz.
  Vec decode_backward(const DecoderTape& tape, const Mat& dout, Vec* grad) const {
    Mat g = dout.cwiseProduct((tape.output.array() * (1.0 - tape.output.array())).matrix());
    for (int i = static_cast<int>(dec_deconvs_.size()) - 1; i >= 0; --i) {
      g = dec_deconvs_[i].backward(params_, tape.inputs[i], g, grad);
      g = g.cwiseProduct(detail::relu_mask(i > 0 ? tape.pre[i - 1] : detail::unflatten(tape.linear_pre, bottleneck_.channels, bottleneck_.pixels())));
    }
    const Vec dpre = detail::flatten(g);
    if (grad != nullptr) dec_linear_.backward_params(grad, dpre, tape.z);
    return dec_linear_.weight(params_).transpose() * dpre;
  }

  Image to_image(const Mat& map) const {
    Image im(cfg_.height, cfg_.width, cfg_.channels);
    for (int c = 0; c < cfg_.channels; ++c)
      for (int i = 0; i < cfg_.height * cfg_.width; ++i)
        im.pixels[static_cast<std::size_t>(c) * cfg_.height * cfg_.width + i] = static_cast<float>(map(c, i));
    return im;
  }

  std::vector<std::pair<std::string, std::vector<int>>> layout() const {
    std::vector<std::pair<std::string, std::vector<int>>> out;
    for (std::size_t i = 0; i < enc_convs_.size(); ++i) {
      const auto& c = enc_convs_[i];
      out.push_back({"encoder.conv" + std::to_string(i) + ".weight", {c.out.channels, c.in.channels, 3, 3}});
      out.push_back({"encoder.conv" + std::to_string(i) + ".bias", {c.out.channels}});
    }
    out.push_back({"encoder.linear.weight", {enc_linear_.out, enc_linear_.in}});
    out.push_back({"encoder.linear.bias", {enc_linear_.out}});
    out.push_back({"decoder.linear.weight", {dec_linear_.out, dec_linear_.in}});
    out.push_back({"decoder.linear.bias", {dec_linear_.out}});
    for (std::size_t i = 0; i < dec_deconvs_.size(); ++i) {
      const auto& d = dec_deconvs_[i];
      out.push_back({"decoder.deconv" + std::to_string(i) + ".weight", {d.in.channels, d.out.channels, 3, 3}});
      out.push_back({"decoder.deconv" + std::to_string(i) + ".bias", {d.out.channels}});
    }
    return out;
  }

  io::Checkpoint to_checkpoint() const {
    io::Checkpoint ck;
    ck.header = {{"kind", "embedding"},
                 {"d", cfg_.latent_dim},
                 {"H", cfg_.height},
                 {"W", cfg_.width},
                 {"C", cfg_.channels},
                 {"alpha", cfg_.alpha},
                 {"conv_channels", cfg_.conv_channels}};
    ck.add_flat("", params_, layout());
    return ck;
  }

  static EmbeddingModel from_checkpoint(const io::Checkpoint& ck) {
    const auto& h = ck.header;
    require(h.value("kind", "") == "embedding", "checkpoint: not an embedding checkpoint");
    EmbeddingConfig cfg;
    cfg.latent_dim = h.at("d").get<int>();
    cfg.height = h.at("H").get<int>();
    cfg.width = h.at("W").get<int>();
    cfg.channels = h.at("C").get<int>();
    cfg.alpha = h.at("alpha").get<double>();
    cfg.conv_channels = h.at("conv_channels").get<std::vector<int>>();
    EmbeddingModel m(cfg);
    ck.read_flat("", m.params_, m.layout());
    return m;
  }

 private:
  EmbeddingConfig cfg_;
  std::vector<nn::Conv2d> enc_convs_;
  std::vector<nn::ConvTranspose2d> dec_deconvs_;
  nn::MapShape bottleneck_;
  detail::Linear enc_linear_;
  detail::Linear dec_linear_;
  Vec params_;
};

inline Latent encode(const Image& image, const EmbeddingModel& model) { return model.encode(image); }
inline Image decode(const Latent& z, const EmbeddingModel& model) { return model.decode(z); }

/// ||Im - D(E(Im))||_2 over flattened pixels. When grad is non-null,
/// scale * dL/dparams is accumulated into it.
inline double loss_autoencoder(const Image& im, const EmbeddingModel& model, Vec* grad = nullptr,
                               double scale = 1.0) {
  EmbeddingModel::EncoderTape et;
  const Latent z = model.encode(im, et);
  EmbeddingModel::DecoderTape dt;
  const Mat& out = model.decode(z, dt);
  const Mat diff = out - im.as_map();
  const double loss = diff.norm();
  if (grad != nullptr && loss > 0.0) {
    if (grad->size() == 0) *grad = Vec::Zero(model.num_params());
    const Vec dz = model.decode_backward(dt, diff * (scale / loss), grad);
    model.encode_backward(et, dz, grad);
  }
  return loss;
}

/// ||E(a) - E(p)|| + max(alpha - ||E(a) - E(n)||, 0).
inline double loss_contrastive(const Triplet& t, const EmbeddingModel& model, double alpha, Vec* grad = nullptr,
                               double scale = 1.0) {
  require(alpha > 0.0, "loss_contrastive: alpha must be positive");
  EmbeddingModel::EncoderTape ta, tp, tn;
  const Latent za = model.encode(t.anchor.get(), ta);
  const Latent zp = model.encode(t.positive.get(), tp);
  const Latent zn = model.encode(t.negative.get(), tn);
  const Vec dpos = za - zp;
  const Vec dneg = za - zn;
  const double pos = dpos.norm();
  const double neg = dneg.norm();
  const double hinge = std::max(alpha - neg, 0.0);
  if (grad != nullptr) {
    if (grad->size() == 0) *grad = Vec::Zero(model.num_params());
    Vec ga = Vec::Zero(za.size());
    Vec gp = Vec::Zero(za.size());
    Vec gn = Vec::Zero(za.size());
    if (pos > 0.0) {
      ga += dpos / pos;
      gp -= dpos / pos;
    }
    // The negative branch is only active inside the margin.
    if (hinge > 0.0 && neg > 0.0) {
      ga -= dneg / neg;
      gn += dneg / neg;
    }
    model.encode_backward(ta, scale * ga, grad);
    model.encode_backward(tp, scale * gp, grad);
    if (hinge > 0.0) model.encode_backward(tn, scale * gn, grad);
  }
  return pos + hinge;
}

inline double loss_total(const Triplet& t, const EmbeddingModel& model, double alpha, Vec* grad = nullptr,
                         double scale = 1.0) {
  return loss_autoencoder(t.anchor.get(), model, grad, scale) + loss_contrastive(t, model, alpha, grad, scale);
}

/// Index of one frame: (episode, step).
struct FrameRef {
  std::size_t episode = 0;
  std::size_t step = 0;
  bool operator==(const FrameRef&) const = default;
};

struct TripletRef {
  FrameRef anchor;
  FrameRef positive;
  FrameRef negative;
};

/// Anchors are uniform over temporally adjacent pairs. Negatives are uniform
/// over all frames, redrawn while they fall within one step of the anchor in
/// the same episode (unless no other frame exists).
inline std::vector<TripletRef> sample_triplets(const Dataset& ds, std::size_t batch, Rng& rng) {
  require(!ds.empty(), "sample_triplets: empty dataset");
  std::vector<FrameRef> pairs;
  std::vector<FrameRef> frames;
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    const auto n = ds.episodes[e].frames.size();
    require(n >= 2, "sample_triplets: every episode needs at least two frames");
    for (std::size_t t = 0; t < n; ++t) {
      frames.push_back({e, t});
      if (t + 1 < n) pairs.push_back({e, t});
    }
  }
  std::vector<TripletRef> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const FrameRef a = pairs[uniform_index(rng, pairs.size())];
    const auto near = [&](const FrameRef& f) {
      return f.episode == a.episode && (f.step + 1 >= a.step && f.step <= a.step + 1);
    };
    const std::size_t len = ds.episodes[a.episode].frames.size();
    const std::size_t excluded = 1 + (a.step > 0 ? 1 : 0) + (a.step + 1 < len ? 1 : 0);
    FrameRef n = frames[uniform_index(rng, frames.size())];
    if (excluded < frames.size()) {
      while (near(n)) n = frames[uniform_index(rng, frames.size())];
    }
    out.push_back({a, {a.episode, a.step + 1}, n});
  }
  return out;
}

inline const Image& frame(const Dataset& ds, const FrameRef& f) { return ds.episodes[f.episode].frames[f.step]; }

inline Triplet resolve(const Dataset& ds, const TripletRef& t) {
  return {std::cref(frame(ds, t.anchor)), std::cref(frame(ds, t.positive)), std::cref(frame(ds, t.negative))};
}

struct EmbeddingTrainConfig {
  int epochs = 200;
  int batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct EmbeddingTrainReport {
  std::vector<double> epoch_loss;  // mean training loss_total per epoch
};

/// Mean loss_total over a fixed, seed-determined sample of triplets.
inline double mean_loss_total(const Dataset& ds, const EmbeddingModel& model, std::size_t samples,
                              std::uint64_t seed) {
  Rng rng(seed);
  const auto refs = sample_triplets(ds, samples, rng);
  double sum = 0.0;
  for (const auto& r : refs) sum += loss_total(resolve(ds, r), model, model.config().alpha);
  return sum / static_cast<double>(refs.size());
}

/// Mini-batch training of encoder and decoder with adaptive step sizes. One
/// epoch is ceil(#adjacent pairs / batch) updates. Initialization is drawn
/// from the seed, so identical inputs replay exactly.
inline EmbeddingModel train_embedding(const Dataset& ds, const EmbeddingConfig& cfg,
                                      const EmbeddingTrainConfig& tc, EmbeddingTrainReport* report = nullptr) {
  require(!ds.empty(), "train_embedding: empty dataset");
  require(tc.batch > 0 && tc.epochs >= 0, "train_embedding: batch must be positive and epochs nonnegative");
  Rng rng(tc.seed);
  EmbeddingModel model(cfg);
  model.init(rng);
  nn::Adam opt(model.num_params(), {.lr = tc.lr});
  std::size_t pairs = 0;
  for (const auto& e : ds.episodes) pairs += e.frames.size() > 0 ? e.frames.size() - 1 : 0;
  const std::size_t steps_per_epoch = std::max<std::size_t>(1, (pairs + tc.batch - 1) / tc.batch);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const auto refs = sample_triplets(ds, static_cast<std::size_t>(tc.batch), rng);
      Vec grad = Vec::Zero(model.num_params());
      double batch_sum = 0.0;
      const double scale = 1.0 / static_cast<double>(refs.size());
      for (const auto& r : refs) batch_sum += loss_total(resolve(ds, r), model, cfg.alpha, &grad, scale);
      if (!std::isfinite(batch_sum) || !grad.allFinite()) {
        throw DivergenceError("train_embedding: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(s));
      }
      opt.step(model.params(), grad);
      epoch_sum += batch_sum * scale;
    }
    if (report != nullptr) report->epoch_loss.push_back(epoch_sum / static_cast<double>(steps_per_epoch));
  }
  return model;
}

}  // namespace lto
