#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lto/harness/config.hpp"
#include "lto/harness/metrics.hpp"
#include "lto/harness/stats.hpp"
#include "lto/io/png.hpp"

namespace lto::harness {

using Rgb = std::array<std::uint8_t, 3>;

/// Minimal RGB raster with alpha-blended primitives.
class Canvas {
 public:
  Canvas(int width, int height, Rgb bg = {255, 255, 255}) : w_(width), h_(height), px_(3 * width * height) {
    for (int i = 0; i < w_ * h_; ++i) std::copy(bg.begin(), bg.end(), px_.begin() + 3 * i);
  }

  int width() const { return w_; }
  int height() const { return h_; }

  void blend(int x, int y, Rgb c, double alpha = 1.0) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    auto* p = &px_[3 * (y * w_ + x)];
    for (int k = 0; k < 3; ++k) p[k] = static_cast<std::uint8_t>(std::lround((1.0 - alpha) * p[k] + alpha * c[k]));
  }

  void fill_rect(int x0, int y0, int x1, int y1, Rgb c, double alpha = 1.0) {
    for (int y = std::max(0, y0); y <= std::min(h_ - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(w_ - 1, x1); ++x) blend(x, y, c, alpha);
  }

  /// Thick segment: every pixel within `radius` of the segment is painted once.
  void line(double x0, double y0, double x1, double y1, Rgb c, double radius = 0.6, double alpha = 1.0) {
    const int bx0 = static_cast<int>(std::floor(std::min(x0, x1) - radius));
    const int bx1 = static_cast<int>(std::ceil(std::max(x0, x1) + radius));
    const int by0 = static_cast<int>(std::floor(std::min(y0, y1) - radius));
    const int by1 = static_cast<int>(std::ceil(std::max(y0, y1) + radius));
    const double dx = x1 - x0, dy = y1 - y0, len2 = dx * dx + dy * dy;
    for (int y = by0; y <= by1; ++y) {
      for (int x = bx0; x <= bx1; ++x) {
        double t = len2 > 0.0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double ex = x - (x0 + t * dx), ey = y - (y0 + t * dy);
        if (ex * ex + ey * ey <= radius * radius) blend(x, y, c, alpha);
      }
    }
  }

  /// Digits, '.', '-' and 'e' in a 3x5 bitmap font, scaled by `s`.
  void text(int x, int y, const std::string& str, Rgb c, int s = 2) {
    static const std::map<char, std::array<const char*, 5>> glyphs = {
        {'0', {"111", "101", "101", "101", "111"}}, {'1', {"010", "110", "010", "010", "111"}},
        {'2', {"111", "001", "111", "100", "111"}}, {'3', {"111", "001", "111", "001", "111"}},
        {'4', {"101", "101", "111", "001", "001"}}, {'5', {"111", "100", "111", "001", "111"}},
        {'6', {"111", "100", "111", "101", "111"}}, {'7', {"111", "001", "010", "010", "010"}},
        {'8', {"111", "101", "111", "101", "111"}}, {'9', {"111", "101", "111", "001", "111"}},
        {'.', {"000", "000", "000", "000", "010"}}, {'-', {"000", "000", "111", "000", "000"}},
        {'e', {"000", "111", "111", "100", "111"}}, {'+', {"000", "010", "111", "010", "000"}},
    };
    for (char ch : str) {
      auto it = glyphs.find(ch);
      if (it != glyphs.end()) {
        for (int r = 0; r < 5; ++r)
          for (int col = 0; col < 3; ++col)
            if (it->second[r][col] == '1') fill_rect(x + col * s, y + r * s, x + col * s + s - 1, y + r * s + s - 1, c);
      }
      x += 4 * s;
    }
  }

  io::Raster raster() const {
    io::Raster r;
    r.height = h_;
    r.width = w_;
    r.channels = 3;
    r.data = px_;
    return r;
  }

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

inline Rgb palette(std::size_t i) {
  static const Rgb colors[] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},  {214, 39, 40},  {148, 103, 189},
                               {140, 86, 75},  {227, 119, 194}, {127, 127, 127}, {188, 189, 34}, {23, 190, 207}};
  return colors[i % 10];
}

inline std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

struct CurveSeries {
  std::string label;
  CurveBand band;
  std::vector<double> smoothed;
};

/// Learning-curve figure: per method a light mean line with a light std band
/// and the smoothed mean in bold.
inline Canvas plot_curves(const std::vector<CurveSeries>& series, int width = 800, int height = 500) {
  Canvas cv(width, height);
  const int left = 70, right = width - 20, top = 20, bottom = height - 40;
  double lo = 0.0, hi = 0.0;
  std::size_t n = 1;
  bool first = true;
  for (const auto& s : series) {
    n = std::max(n, s.band.mean.size());
    for (std::size_t i = 0; i < s.band.mean.size(); ++i) {
      const double a = s.band.mean[i] - s.band.std[i], b = s.band.mean[i] + s.band.std[i];
      if (first) lo = a, hi = b, first = false;
      lo = std::min(lo, a);
      hi = std::max(hi, b);
    }
  }
  if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto px = [&](double i) { return left + (n > 1 ? i / static_cast<double>(n - 1) : 0.5) * (right - left); };
  auto py = [&](double v) { return bottom - (v - lo) / (hi - lo) * (bottom - top); };

  const Rgb axis{60, 60, 60};
  cv.line(left, top, left, bottom, axis, 0.7);
  cv.line(left, bottom, right, bottom, axis, 0.7);
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    const double y = py(v);
    cv.line(left - 5, y, left, y, axis, 0.6);
    cv.line(left, y, right, y, {225, 225, 225}, 0.4);
    cv.text(4, static_cast<int>(y) - 5, format_tick(v), axis);
    const double i = (n - 1) * k / 4.0;
    cv.line(px(i), bottom, px(i), bottom + 5, axis, 0.6);
    cv.text(static_cast<int>(px(i)) - 8, bottom + 10, format_tick(std::round(i)), axis);
  }

  for (std::size_t s = 0; s < series.size(); ++s) {
    const Rgb c = palette(s);
    const auto& b = series[s].band;
    for (std::size_t i = 0; i + 1 < b.mean.size(); ++i) {
      for (double t = 0.0; t < 1.0; t += 0.25) {
        const double x = px(i + t);
        const double m = (1 - t) * b.mean[i] + t * b.mean[i + 1];
        const double d = (1 - t) * b.std[i] + t * b.std[i + 1];
        if (d > 0.0) cv.line(x, py(m - d), x, py(m + d), c, 0.6, 0.08);
      }
    }
    for (std::size_t i = 0; i + 1 < b.mean.size(); ++i)
      cv.line(px(i), py(b.mean[i]), px(i + 1), py(b.mean[i + 1]), c, 0.6, 0.35);
    const auto& sm = series[s].smoothed;
    for (std::size_t i = 0; i + 1 < sm.size(); ++i) cv.line(px(i), py(sm[i]), px(i + 1), py(sm[i + 1]), c, 1.6);
    cv.fill_rect(right - 30, top + 6 + 14 * static_cast<int>(s), right - 10, top + 14 + 14 * static_cast<int>(s), c);
  }
  return cv;
}

struct RunData {
  std::filesystem::path dir;
  std::string label;
  std::vector<EpisodeRecord> records;
};

struct ReportResult {
  std::vector<std::string> methods;
  std::vector<std::string> skipped;  // "dir: reason"
  std::filesystem::path table;
  std::vector<std::filesystem::path> plots;
};

inline std::string run_label(const std::filesystem::path& dir) {
  std::ifstream is(dir / "config.json");
  if (!is) throw ConfigError("missing config.json");
  auto j = nlohmann::json::parse(is);
  j.erase("seed");
  return parse_config(j).method_label();
}

inline std::vector<double> per_episode_reward(const std::vector<EpisodeRecord>& recs) {
  std::map<int, std::pair<double, int>> acc;
  for (const auto& r : recs) {
    acc[r.episode].first += r.reward;
    acc[r.episode].second += 1;
  }
  std::vector<double> out;
  for (const auto& [e, v] : acc) out.push_back(v.first / v.second);
  return out;
}

inline std::vector<bool> success_flags(const std::vector<EpisodeRecord>& recs) {
  std::vector<bool> out;
  for (const auto& r : recs) out.push_back(r.success);
  return out;
}

/// Aggregates run directories by method label into learning-curve plots (one
/// per stream) and a tab-separated summary with one row per method.
inline ReportResult report(const std::vector<std::filesystem::path>& run_dirs, const std::filesystem::path& out_dir,
                           int window = 50, int smooth_window = 21) {
  ReportResult res;
  std::map<std::string, std::vector<RunData>> groups;
  for (const auto& d : run_dirs) {
    try {
      if (!std::filesystem::exists(d / "metrics.jsonl")) throw ConfigError("missing metrics.jsonl");
      RunData r{d, run_label(d), read_metrics(d / "metrics.jsonl")};
      if (r.records.empty()) throw ConfigError("empty metrics.jsonl");
      groups[r.label].push_back(std::move(r));
    } catch (const std::exception& e) {
      res.skipped.push_back(d.string() + ": " + e.what());
    }
  }
  require(!groups.empty(), "report: no completed runs");
  std::filesystem::create_directories(out_dir);

  for (const std::string stream : {"explore", "eval"}) {
    std::vector<CurveSeries> series;
    for (const auto& [label, runs] : groups) {
      std::vector<std::vector<double>> curves;
      for (const auto& r : runs) {
        const auto c = per_episode_reward(filter_stream(r.records, stream));
        if (!c.empty()) curves.push_back(c);
      }
      if (curves.empty()) continue;
      CurveSeries s{label, aggregate_curves(curves), {}};
      int w = std::min<int>(smooth_window, static_cast<int>(s.band.mean.size()));
      if (w % 2 == 0) --w;
      s.smoothed = smooth(s.band.mean, w, 1);
      series.push_back(std::move(s));
    }
    if (series.empty()) continue;
    const auto path = out_dir / ("curves_" + std::string(stream) + ".png");
    io::write_png(path, plot_curves(series).raster());
    res.plots.push_back(path);
  }

  res.table = out_dir / "summary.tsv";
  std::ofstream os(res.table);
  os << "method\truns\tepisodes\tsuccess_explore_mean\tsuccess_explore_std\tsuccess_eval_mean\tsuccess_eval_std"
        "\treward_explore_mean\treward_eval_mean\tcolor\n";
  std::size_t idx = 0;
  for (const auto& [label, runs] : groups) {
    res.methods.push_back(label);
    std::size_t episodes = 0;
    double rex = 0.0, rev = 0.0;
    std::size_t nex = 0, nev = 0;
    std::vector<std::vector<bool>> sx, sv;
    for (const auto& r : runs) {
      const auto ex = filter_stream(r.records, "explore");
      const auto ev = filter_stream(r.records, "eval");
      episodes = std::max(episodes, ex.size());
      for (const auto& e : ex) rex += e.reward, ++nex;
      for (const auto& e : ev) rev += e.reward, ++nev;
      sx.push_back(success_flags(ex));
      sv.push_back(success_flags(ev));
    }
    auto rate = [&](const std::vector<std::vector<bool>>& s) -> std::pair<std::string, std::string> {
      for (const auto& v : s)
        if (v.size() < static_cast<std::size_t>(window)) return {"NA", "NA"};
      const auto sum = success_rate(s, window);
      return {format_tick(sum.mean), format_tick(sum.std)};
    };
    const auto [exm, exs] = rate(sx);
    const auto [evm, evs] = rate(sv);
    const Rgb c = palette(idx++);
    char color[16];
    std::snprintf(color, sizeof(color), "#%02x%02x%02x", c[0], c[1], c[2]);
    os << label << '\t' << runs.size() << '\t' << episodes << '\t' << exm << '\t' << exs << '\t' << evm << '\t' << evs
       << '\t' << (nex ? format_tick(rex / nex) : "NA") << '\t' << (nev ? format_tick(rev / nev) : "NA") << '\t'
       << color << '\n';
  }
  if (!res.skipped.empty()) {
    std::ofstream sk(out_dir / "skipped.txt");
    for (const auto& s : res.skipped) sk << s << '\n';
  }
  return res;
}

}  // namespace lto::harness
