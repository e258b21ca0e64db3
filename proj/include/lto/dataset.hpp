#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lto/image.hpp"

namespace lto {

/// One recorded episode. frames has one more entry than actions: frames[0]
/// is the reset observation and frames[t + 1] follows actions[t].
struct Episode {
  std::vector<Image> frames;
  std::vector<Vec> actions;
  std::vector<double> rewards;
  bool success = false;

  std::size_t steps() const { return actions.size(); }
};

/// Episode-ordered image store.
struct Dataset {
  std::vector<Episode> episodes;

  std::size_t num_frames() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.frames.size();
    return n;
  }
  bool empty() const { return num_frames() == 0; }
  std::size_t num_positive() const {
    std::size_t n = 0;
    for (const auto& e : episodes) n += e.success ? 1 : 0;
    return n;
  }
};

inline constexpr int kDatasetFormatVersion = 1;

inline std::string episode_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "episode_%04zu", i);
  return buf;
}

inline std::string frame_file_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.png", step);
  return buf;
}

/// Writes one directory per episode with PNG frames named by zero-padded
/// step index, a per-episode trajectory.json (actions, rewards, success) and a
/// top-level manifest.json listing episode lengths.
inline void save_dataset(const std::filesystem::path& root, const Dataset& ds) {
  using nlohmann::json;
  std::filesystem::create_directories(root);
  json manifest;
  manifest["format_version"] = kDatasetFormatVersion;
  json episodes = json::array();
  for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
    const Episode& ep = ds.episodes[i];
    const auto dir = root / episode_dir_name(i);
    std::filesystem::create_directories(dir);
    for (std::size_t t = 0; t < ep.frames.size(); ++t) io::write_png(dir / frame_file_name(t), to_raster(ep.frames[t]));
    json traj;
    json acts = json::array();
    for (const auto& a : ep.actions) acts.push_back(std::vector<double>(a.data(), a.data() + a.size()));
    traj["actions"] = acts;
    traj["rewards"] = ep.rewards;
    traj["success"] = ep.success;
    std::ofstream(dir / "trajectory.json") << traj.dump(1) << "\n";
    episodes.push_back({{"name", episode_dir_name(i)}, {"length", ep.frames.size()}, {"success", ep.success}});
    if (!ep.frames.empty()) {
      manifest["height"] = ep.frames[0].height;
      manifest["width"] = ep.frames[0].width;
      manifest["channels"] = ep.frames[0].channels;
    }
  }
  manifest["episodes"] = episodes;
  std::ofstream(root / "manifest.json") << manifest.dump(1) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& root) {
  using nlohmann::json;
  std::ifstream in(root / "manifest.json");
  if (!in) throw ConfigError("dataset: missing manifest in '" + root.string() + "'");
  const json manifest = json::parse(in);
  if (manifest.value("format_version", 0) != kDatasetFormatVersion)
    throw ConfigError("dataset: unsupported format version");
  Dataset ds;
  for (const auto& entry : manifest.at("episodes")) {
    Episode ep;
    const auto dir = root / entry.at("name").get<std::string>();
    const auto length = entry.at("length").get<std::size_t>();
    for (std::size_t t = 0; t < length; ++t) ep.frames.push_back(from_raster(io::read_png(dir / frame_file_name(t))));
    std::ifstream tin(dir / "trajectory.json");
    if (tin) {
      const json traj = json::parse(tin);
      for (const auto& a : traj.at("actions")) {
        const auto v = a.get<std::vector<double>>();
        ep.actions.push_back(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
      }
      ep.rewards = traj.at("rewards").get<std::vector<double>>();
      ep.success = traj.at("success").get<bool>();
    }
    ds.episodes.push_back(std::move(ep));
  }
  return ds;
}

}  // namespace lto
