#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lto/core.hpp"

namespace lto::io {

using json = nlohmann::json;

inline constexpr char kCheckpointMagic[8] = {'L', 'T', 'O', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
};

/// Versioned container: a JSON header plus named float64 arrays.
///
/// Layout (little-endian): magic[8] | u32 version | u64 header_len | header
/// bytes | u32 n_arrays | per array: u32 name_len | name | u32 rank |
/// u64 dims[rank] | f64 values[prod(dims)].
struct Checkpoint {
  json header = json::object();
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return a;
    throw ConfigError("checkpoint: missing array '" + name + "'");
  }

  bool has(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return true;
    return false;
  }

  /// Appends arrays from a flat vector following an ordered shape layout.
  void add_flat(const std::string& prefix, const Vec& flat,
                const std::vector<std::pair<std::string, std::vector<int>>>& layout) {
    Eigen::Index pos = 0;
    for (const auto& [name, shape] : layout) {
      Eigen::Index n = 1;
      for (int d : shape) n *= d;
      require(pos + n <= flat.size(), "checkpoint: layout larger than parameter vector");
      arrays.push_back({prefix + name, shape, std::vector<double>(flat.data() + pos, flat.data() + pos + n)});
      pos += n;
    }
    require(pos == flat.size(), "checkpoint: layout smaller than parameter vector");
  }

  /// Inverse of add_flat; shapes must match exactly.
  void read_flat(const std::string& prefix, Vec& flat,
                 const std::vector<std::pair<std::string, std::vector<int>>>& layout) const {
    Eigen::Index pos = 0;
    for (const auto& [name, shape] : layout) {
      const auto& a = array(prefix + name);
      require(a.shape == shape, "checkpoint: shape mismatch for '" + prefix + name + "'");
      require(pos + static_cast<Eigen::Index>(a.values.size()) <= flat.size(),
              "checkpoint: array larger than parameter vector");
      std::copy(a.values.begin(), a.values.end(), flat.data() + pos);
      pos += static_cast<Eigen::Index>(a.values.size());
    }
    require(pos == flat.size(), "checkpoint: parameter count mismatch");
  }
};

namespace detail {
template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ConfigError("checkpoint: truncated file");
  return v;
}
}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("checkpoint: cannot open '" + path.string() + "' for writing");
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  json header = ckpt.header;
  header["format_version"] = kCheckpointVersion;
  const std::string text = header.dump();
  detail::put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.shape.size()));
    std::size_t n = 1;
    for (int d : a.shape) {
      detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
      n *= static_cast<std::size_t>(d);
    }
    require(n == a.values.size(), "checkpoint: array '" + a.name + "' size does not match its shape");
    os.write(reinterpret_cast<const char*>(a.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  }
  if (!os) throw ConfigError("checkpoint: write failed for '" + path.string() + "'");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot open '" + path.string() + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw ConfigError("checkpoint: bad magic in '" + path.string() + "'");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw ConfigError("checkpoint: unsupported format version " + std::to_string(version));
  Checkpoint ckpt;
  const auto header_len = detail::get<std::uint64_t>(is);
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  ckpt.header = json::parse(text);
  const auto n_arrays = detail::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    NamedArray a;
    a.name.resize(detail::get<std::uint32_t>(is));
    is.read(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    const auto rank = detail::get<std::uint32_t>(is);
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(static_cast<int>(detail::get<std::uint64_t>(is)));
      n *= static_cast<std::size_t>(a.shape.back());
    }
    a.values.resize(n);
    is.read(reinterpret_cast<char*>(a.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw ConfigError("checkpoint: truncated array '" + a.name + "'");
    ckpt.arrays.push_back(std::move(a));
  }
  return ckpt;
}

}  // namespace lto::io
