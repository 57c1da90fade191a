#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "diffex/png.hpp"
#include "diffex/rng.hpp"

namespace diffex {

constexpr std::size_t kBallTypes = 5;
constexpr std::size_t kTargetBallType = 0;  // the patched off-white ball
constexpr std::size_t kCanvas = 32;
constexpr double kBaseRadius = 5.5;
constexpr double kMinScale = 0.7;
constexpr double kMaxScale = 1.3;

struct SceneObject {
  std::size_t ball_type = 0;
  double cx = 0.0;
  double cy = 0.0;
  double rotation = 0.0;  // radians
  double scale = 1.0;
};

inline double ball_radius(const SceneObject& o) { return kBaseRadius * o.scale; }

struct SceneSpec {
  std::vector<SceneObject> objects;  // painter's order; later entries on top
  std::size_t canvas = kCanvas;
};

inline bool scene_label(const SceneSpec& spec) {
  for (const auto& o : spec.objects)
    if (o.ball_type == kTargetBallType) return true;
  return false;
}

enum class Difficulty { any, non_overlapping, multi_target, occluded_target };

inline const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::any: return "any";
    case Difficulty::non_overlapping: return "non_overlapping";
    case Difficulty::multi_target: return "multi_target";
    case Difficulty::occluded_target: return "occluded_target";
  }
  return "?";
}

inline Difficulty parse_difficulty(const std::string& s) {
  if (s == "any") return Difficulty::any;
  if (s == "non_overlapping") return Difficulty::non_overlapping;
  if (s == "multi_target") return Difficulty::multi_target;
  if (s == "occluded_target") return Difficulty::occluded_target;
  throw std::invalid_argument("unknown difficulty: " + s);
}

namespace detail {

inline bool discs_overlap(const SceneObject& a, const SceneObject& b) {
  const double dx = a.cx - b.cx, dy = a.cy - b.cy;
  const double r = ball_radius(a) + ball_radius(b);
  return dx * dx + dy * dy < r * r;
}

inline bool satisfies(const SceneSpec& spec, Difficulty d) {
  const auto& obj = spec.objects;
  switch (d) {
    case Difficulty::any:
      return true;
    case Difficulty::non_overlapping:
      for (std::size_t i = 0; i < obj.size(); ++i)
        for (std::size_t j = i + 1; j < obj.size(); ++j)
          if (discs_overlap(obj[i], obj[j])) return false;
      return true;
    case Difficulty::multi_target: {
      std::size_t n = 0;
      for (const auto& o : obj) n += o.ball_type == kTargetBallType;
      return n >= 2;
    }
    case Difficulty::occluded_target:
      // A target ball drawn earlier with some later ball covering part of it.
      for (std::size_t i = 0; i < obj.size(); ++i) {
        if (obj[i].ball_type != kTargetBallType) continue;
        for (std::size_t j = i + 1; j < obj.size(); ++j)
          if (discs_overlap(obj[i], obj[j])) return true;
      }
      return false;
  }
  return false;
}

}  // namespace detail

inline SceneSpec sample_scene(Rng& rng, Difficulty difficulty = Difficulty::any,
                              std::size_t max_tries = 20000) {
  for (std::size_t attempt = 0; attempt < max_tries; ++attempt) {
    SceneSpec spec;
    for (int k = 0; k < 3; ++k) {
      SceneObject o;
      o.ball_type = rng.bounded(kBallTypes);
      o.scale = kMinScale + (kMaxScale - kMinScale) * rng.uniform();
      const double r = ball_radius(o);
      o.cx = r + (kCanvas - 2.0 * r) * rng.uniform();
      o.cy = r + (kCanvas - 2.0 * r) * rng.uniform();
      o.rotation = 2.0 * 3.14159265358979323846 * rng.uniform();
      spec.objects.push_back(o);
    }
    if (detail::satisfies(spec, difficulty)) return spec;
  }
  throw std::runtime_error(std::string("sample_scene: rejection budget exceeded for ") +
                           to_string(difficulty));
}

namespace detail {

struct Rgb {
  double r, g, b;
};

// Color of ball `type` at local coordinates (lx, ly) inside the unit disc.
// Five designs, told apart by base color and pattern; patterns live in the
// rotated frame so rotation visibly moves them, while the silhouette stays
// a disc. All balls share a thin dark rim.
inline Rgb ball_color(std::size_t type, double lx, double ly) {
  const double rho  = std::sqrt(lx * lx + ly * ly);
  if (rho > 0.90) return {0.20, 0.20, 0.20};
  switch (type) {
    case 0: {  // off-white with dark patches
      if (rho < 0.30) return {0.05, 0.05, 0.05};
      for (int k = 0; k < 5; ++k) {
        const double a = 2.0 * 3.14159265358979323846 * k / 5.0;
        const double px = 0.62 * std::cos(a), py = 0.62 * std::sin(a);
        const double dx = lx - px, dy = ly - py;
        if (dx * dx + dy * dy < 0.22 * 0.22) return {0.05, 0.05, 0.05};
      }
      return {0.96, 0.96, 0.96};
    }
    case 1: {  // orange with cross seams
      if (std::abs(lx) < 0.06 || std::abs(ly) < 0.06) return {0.05, 0.05, 0.05};
      return {0.90, 0.47, 0.12};
    }
    case 2: {  // yellow-green with a white wavy band
      if (std::abs(ly - 0.40 * std::sin(2.0 * lx)) < 0.10) return {0.97, 0.97, 0.97};
      return {0.78, 0.86, 0.24};
    }
    case 3: {  // red and white vertical stripes
      const int band = static_cast<int>(std::floor((lx + 1.0) / 0.40));
      if (band % 2 == 0) return {0.85, 0.15, 0.15};
      return {0.95, 0.95, 0.95};
    }
    default: {  // blue with a white ring and center dot
      if (rho < 0.18) return {0.97, 0.97, 0.97};
      if (rho > 0.45 && rho < 0.62) return {0.97, 0.97, 0.97};
      return {0.15, 0.30, 0.80};
    }
  }
}

}  // namespace detail

struct LabeledImage {
  std::vector<double> pixels;  // plane-major [0,1], 3 * canvas * canvas
  bool label = false;
};

// Deterministic raster with 4x4 supersampling on a white background.
inline LabeledImage render_scene(const SceneSpec& spec) {
  const std::size_t n = spec.canvas;
  const std::size_t hw = n * n;
  constexpr int kSub = 4;
  LabeledImage out;
  out.label = scene_label(spec);
  out.pixels.assign(3 * hw, 0.0);

  struct Frame {
    double cx, cy, r2, inv_r, c, s;
  };
  std::vector<Frame> frames;
  frames.reserve(spec.objects.size());
  for (const auto& o : spec.objects) {
    const double r = ball_radius(o);
    frames.push_back(
        {o.cx, o.cy, r * r, 1.0 / r, std::cos(o.rotation), std::sin(o.rotation)});
  }

  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double acc[3] = {0.0, 0.0, 0.0};
      for (int sy = 0; sy < kSub; ++sy)
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = x + (sx + 0.5) / kSub;
          const double py = y + (sy + 0.5) / kSub;
          detail::Rgb col{1.0, 1.0, 1.0};  // white background
          for (std::size_t i = 0; i < spec.objects.size(); ++i) {
            const Frame& f = frames[i];
            const double dx = px - f.cx, dy = py - f.cy;
            if (dx * dx + dy * dy > f.r2) continue;
            // Rotate into the ball frame and normalize by the radius.
            const double lx = (f.c * dx + f.s * dy) * f.inv_r;
            const double ly = (-f.s * dx + f.c * dy) * f.inv_r;
            col = detail::ball_color(spec.objects[i].ball_type, lx, ly);
          }
          acc[0] += col.r;
          acc[1] += col.g;
          acc[2] += col.b;
        }
      const std::size_t p = y * n + x;
      for (int c = 0; c < 3; ++c) out.pixels[c * hw + p] = acc[c] / (kSub * kSub);
    }
  return out;
}

struct DatasetEntry {
  std::string path;  // PNG file name relative to the dataset directory
  bool label = false;
  SceneSpec spec;
};

namespace detail {

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

template <typename F>
std::string join_fields(const SceneSpec& spec, F field) {
  std::string s;
  for (std::size_t i = 0; i < spec.objects.size(); ++i) {
    if (i) s += ';';
    s += field(spec.objects[i]);
  }
  return s;
}

inline std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ';')) out.push_back(std::stod(tok));
  return out;
}

}  // namespace detail

inline std::string dataset_csv_row(const DatasetEntry& e) {
  std::string row = e.path;
  row += ',';
  row += e.label ? '1' : '0';
  row += ',';
  row += detail::join_fields(e.spec,
                             [](const SceneObject& o) { return std::to_string(o.ball_type); });
  row += ',';
  row += detail::join_fields(e.spec, [](const SceneObject& o) {
    return detail::fmt6(o.cx) + ";" + detail::fmt6(o.cy);
  });
  row += ',';
  row += detail::join_fields(e.spec,
                             [](const SceneObject& o) { return detail::fmt6(o.rotation); });
  row += ',';
  row += detail::join_fields(e.spec,
                             [](const SceneObject& o) { return detail::fmt6(o.scale); });
  return row;
}

// Writes n scenes as zero-padded PNGs plus dataset.csv into dir. Every scene
// draws from its own child seed, so the set is stable under regeneration.
inline std::vector<DatasetEntry> generate_dataset(const std::string& dir, std::size_t n,
                                                  std::uint64_t seed,
                                                  const std::vector<Difficulty>& mix = {
                                                      Difficulty::any}) {
  if (mix.empty()) throw std::invalid_argument("generate_dataset: empty difficulty mix");
  std::filesystem::create_directories(dir);
  std::vector<DatasetEntry> entries;
  entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(child_seed(seed, i));
    DatasetEntry e;
    e.spec = sample_scene(rng, mix[i % mix.size()]);
    e.label = scene_label(e.spec);
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.png", i);
    e.path = name;
    const LabeledImage img = render_scene(e.spec);
    write_png(dir + "/" + e.path, unit_to_image(img.pixels, e.spec.canvas, e.spec.canvas));
    entries.push_back(std::move(e));
  }
  std::ofstream csv(dir + "/dataset.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("generate_dataset: cannot write " + dir + "/dataset.csv");
  csv << "path,label,ball_types,centers,rotations,scales\n";
  for (const auto& e : entries) csv << dataset_csv_row(e) << "\n";
  return entries;
}

inline std::vector<DatasetEntry> load_dataset_index(const std::string& dir) {
  std::ifstream csv(dir + "/dataset.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("load_dataset_index: cannot open " + dir + "/dataset.csv");
  std::string line;
  if (!std::getline(csv, line) || line != "path,label,ball_types,centers,rotations,scales")
    throw std::runtime_error("load_dataset_index: bad header in " + dir + "/dataset.csv");
  std::vector<DatasetEntry> entries;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string path, label, types, centers, rotations, scales;
    if (!std::getline(ss, path, ',') || !std::getline(ss, label, ',') ||
        !std::getline(ss, types, ',') || !std::getline(ss, centers, ',') ||
        !std::getline(ss, rotations, ',') || !std::getline(ss, scales, ','))
      throw std::runtime_error("load_dataset_index: malformed row: " + line);
    DatasetEntry e;
    e.path = path;
    e.label = label == "1";
    const auto t = detail::split_doubles(types);
    const auto c = detail::split_doubles(centers);
    const auto r = detail::split_doubles(rotations);
    const auto s = detail::split_doubles(scales);
    if (c.size() != 2 * t.size() || r.size() != t.size() || s.size() != t.size())
      throw std::runtime_error("load_dataset_index: inconsistent row: " + line);
    for (std::size_t i = 0; i < t.size(); ++i) {
      SceneObject o;
      o.ball_type = static_cast<std::size_t>(t[i]);
      o.cx = c[2 * i];
      o.cy = c[2 * i + 1];
      o.rotation = r[i];
      o.scale = s[i];
      e.spec.objects.push_back(o);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

// Pixels of one dataset image in the plane-major [0,1] layout.
inline std::vector<double> load_dataset_image(const std::string& dir, const DatasetEntry& e) {
  return image_to_unit(read_png(dir + "/" + e.path));
}

}  // namespace diffex
