#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lto/core.hpp"

namespace lto::harness {

struct EpisodeRecord {
  int episode = 0;
  std::string stream;  // "explore" or "eval"
  double reward = 0.0;
  bool success = false;
  int steps = 0;
  double seconds = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const EpisodeRecord&) const = default;
};

inline nlohmann::json to_json(const EpisodeRecord& r) {
  return {{"episode", r.episode}, {"stream", r.stream}, {"reward", r.reward}, {"success", r.success},
          {"steps", r.steps},     {"seconds", r.seconds}, {"seed", r.seed}};
}

inline EpisodeRecord record_from_json(const nlohmann::json& j) {
  EpisodeRecord r;
  r.episode = j.at("episode").get<int>();
  r.stream = j.at("stream").get<std::string>();
  r.reward = j.at("reward").get<double>();
  r.success = j.at("success").get<bool>();
  r.steps = j.at("steps").get<int>();
  r.seconds = j.at("seconds").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

/// Appends one JSON object per line and flushes after every record, so a
/// crashed run leaves every completed episode readable.
class MetricsWriter {
 public:
  explicit MetricsWriter(std::filesystem::path path) : path_(std::move(path)) {}

  void append(const EpisodeRecord& r) {
    if (!os_.is_open()) {
      if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
      os_.open(path_, std::ios::app);
      if (!os_) throw ConfigError("metrics: cannot open '" + path_.string() + "'");
    }
    os_ << to_json(r).dump() << '\n';
    os_.flush();
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream os_;
};

/// Parses a metrics file. A malformed final line (interrupted write) is
/// dropped; malformed lines elsewhere are errors.
inline std::vector<EpisodeRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("metrics: cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  std::vector<EpisodeRecord> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(record_from_json(nlohmann::json::parse(lines[i])));
    } catch (const nlohmann::json::exception& e) {
      if (i + 1 == lines.size()) break;
      throw ConfigError("metrics: " + path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<EpisodeRecord> filter_stream(const std::vector<EpisodeRecord>& records, const std::string& stream) {
  std::vector<EpisodeRecord> out;
  for (const auto& r : records) {
    if (r.stream == stream) out.push_back(r);
  }
  return out;
}

}  // namespace lto::harness
