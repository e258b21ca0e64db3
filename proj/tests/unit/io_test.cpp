#include <gtest/gtest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "lto/lto.hpp"

using namespace lto;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("lto_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Checkpoint, RoundTripPreservesArraysAndHeader) {
  const auto dir = scratch("ckpt");
  io::Checkpoint ck;
  ck.header = {{"kind", "test"}, {"d", 3}};
  Vec flat(10);
  for (int i = 0; i < 10; ++i) flat[i] = 0.1 * i - 0.37;
  ck.add_flat("net.", flat, {{"w", {2, 3}}, {"b", {4}}});
  io::save_checkpoint(dir / "a.ckpt", ck);
  const auto back = io::load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.header.at("kind"), "test");
  EXPECT_EQ(back.header.at("d"), 3);
  Vec out = Vec::Zero(10);
  back.read_flat("net.", out, {{"w", {2, 3}}, {"b", {4}}});
  EXPECT_EQ(out, flat);
}

TEST(Checkpoint, RejectsGarbage) {
  const auto dir = scratch("garbage");
  std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
  EXPECT_ANY_THROW(io::load_checkpoint(dir / "bad.ckpt"));
  EXPECT_ANY_THROW(io::load_checkpoint(dir / "missing.ckpt"));
}

TEST(Png, RoundTripIsExactForQuantizedImages) {
  const auto dir = scratch("png");
  Image im(5, 7, 3);
  for (std::size_t i = 0; i < im.pixels.size(); ++i) im.pixels[i] = static_cast<float>((i * 37) % 256) / 255.0f;
  quantize(im);
  io::write_png(dir / "x.png", to_raster(im));
  const Image back = from_raster(io::read_png(dir / "x.png"));
  ASSERT_TRUE(back.same_shape(im));
  EXPECT_EQ(back.pixels, im.pixels);
}

TEST(Dataset, RoundTripPreservesEpisodes) {
  const auto dir = scratch("dataset");
  envs::Peg2dConfig pc;
  pc.image_size = 16;
  envs::Peg2d env(pc);
  Rng rng(4);
  envs::DemoConfig dc;
  dc.n_total = 3;
  dc.n_positive = 1;
  const Dataset ds = envs::generate_demonstrations(env, dc, rng);
  save_dataset(dir / "demos", ds);
  const Dataset back = load_dataset(dir / "demos");
  ASSERT_EQ(back.episodes.size(), ds.episodes.size());
  for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
    const auto& a = ds.episodes[e];
    const auto& b = back.episodes[e];
    EXPECT_EQ(a.success, b.success);
    ASSERT_EQ(a.frames.size(), b.frames.size());
    ASSERT_EQ(a.actions.size(), b.actions.size());
    for (std::size_t t = 0; t < a.frames.size(); ++t) EXPECT_EQ(a.frames[t].pixels, b.frames[t].pixels);
    for (std::size_t t = 0; t < a.actions.size(); ++t) {
      EXPECT_EQ(a.actions[t], b.actions[t]);
      EXPECT_EQ(a.rewards[t], b.rewards[t]);
    }
  }
}
