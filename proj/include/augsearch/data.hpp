// Copyright 2026 The augsearch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "augsearch/errors.hpp"
#include "augsearch/image.hpp"
#include "augsearch/io.hpp"
#include "augsearch/nnet.hpp"
#include "augsearch/rng.hpp"

namespace augsearch {

enum class Split { train, val };

struct Dataset {
  std::vector<Image> images;
  std::vector<int> labels;
  int class_count = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return images.size(); }
  bool empty() const noexcept { return images.empty(); }
  LabeledView view() const { return {images, labels}; }

  void validate() const {
    if (images.size() != labels.size()) throw DataError("dataset images/labels length mismatch");
    for (int l : labels)
      if (l < 0 || l >= class_count) throw DataError("label " + std::to_string(l) + " outside class range");
  }
};

// ---------------------------------------------------------------------------
// CIFAR-10 binary layout: per record 1 label byte, then 1024 R, 1024 G,
// 1024 B bytes (row-major 32x32 planes).

inline constexpr int kCifarSide = 32;
inline constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

/// Parses fixed-size records of `1 + c*h*w` bytes with channel-planar pixels.
inline Dataset parse_records(std::span<const std::uint8_t> bytes, int h, int w, int c, int class_count,
                             Split split = Split::train) {
  const std::size_t record = 1 + static_cast<std::size_t>(h) * w * c;
  if (bytes.empty()) throw FormatError("empty record file");
  if (bytes.size() % record != 0)
    throw FormatError("file size " + std::to_string(bytes.size()) + " is not a multiple of the " +
                      std::to_string(record) + "-byte record");
  Dataset ds;
  ds.class_count = class_count;
  ds.split = split;
  const std::size_t n = bytes.size() / record;
  ds.images.reserve(n);
  ds.labels.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::uint8_t* rec = bytes.data() + r * record;
    if (rec[0] >= class_count)
      throw FormatError("record " + std::to_string(r) + " has label byte " + std::to_string(rec[0]));
    Image img(h, w, c);
    for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<float>(rec[1 + i] / 255.0);
    ds.images.push_back(std::move(img));
    ds.labels.push_back(rec[0]);
  }
  return ds;
}

inline std::vector<std::uint8_t> encode_records(const Dataset& ds) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.labels[i] < 0 || ds.labels[i] > 255) throw InvalidArgument("label does not fit in one byte");
    out.push_back(static_cast<std::uint8_t>(ds.labels[i]));
    for (float v : ds.images[i].data) out.push_back(static_cast<std::uint8_t>(to_byte(v)));
  }
  return out;
}

inline void write_records(const Dataset& ds, const std::filesystem::path& path) {
  io::write_atomic(path, encode_records(ds));
}

/// One CIFAR-10 batch file, or every `data_batch_*.bin` in a directory.
inline Dataset load_cifar10(const std::filesystem::path& path) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      const auto name = e.path().filename().string();
      if (name.rfind("data_batch_", 0) == 0 && e.path().extension() == ".bin") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no data_batch_*.bin files in " + path.string());
  } else {
    files.push_back(path);
  }
  Dataset all;
  all.class_count = 10;
  for (const auto& f : files) {
    auto part = parse_records(io::read_file(f), kCifarSide, kCifarSide, 3, 10);
    std::move(part.images.begin(), part.images.end(), std::back_inserter(all.images));
    all.labels.insert(all.labels.end(), part.labels.begin(), part.labels.end());
  }
  return all;
}

// ---------------------------------------------------------------------------
// Samplers

/// `k` distinct indices from [0, n), uniformly (partial Fisher-Yates).
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw InvalidArgument("cannot draw " + std::to_string(k) + " of " + std::to_string(n) + " without replacement");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(k);
  return idx;
}

inline Dataset select(const Dataset& ds, std::span<const std::size_t> idx) {
  Dataset out;
  out.class_count = ds.class_count;
  out.split = ds.split;
  out.images.reserve(idx.size());
  for (std::size_t i : idx) {
    out.images.push_back(ds.images.at(i));
    out.labels.push_back(ds.labels.at(i));
  }
  return out;
}

/// Uniform subset of size n without replacement, deterministic in `seed`.
inline Dataset subsample(const Dataset& ds, std::size_t n, std::uint64_t seed) {
  if (n > ds.size())
    throw InvalidArgument("subsample of " + std::to_string(n) + " from " + std::to_string(ds.size()) + " records");
  Rng rng(seed);
  const auto idx = sample_indices(ds.size(), n, rng);
  return select(ds, idx);
}

/// Deterministic split of one pool into (train, val) with `val_count` held out.
inline std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, std::size_t val_count, std::uint64_t seed) {
  Rng rng(seed);
  auto idx = sample_indices(ds.size(), ds.size(), rng);
  if (val_count >= ds.size()) throw InvalidArgument("holdout leaves no training data");
  std::span<const std::size_t> all(idx);
  auto val = select(ds, all.first(val_count));
  auto train = select(ds, all.subspan(val_count));
  train.split = Split::train;
  val.split = Split::val;
  return {std::move(train), std::move(val)};
}

struct Batch {
  std::vector<Image> images;
  std::vector<int> labels;
};

/// Uniform batch without replacement. With `only_class`, draws from that
/// class's records only.
inline Batch sample_val_batch(const Dataset& ds, std::size_t size, Rng& rng, std::optional<int> only_class = {}) {
  if (size == 0) throw InvalidArgument("validation batch size must be positive");
  std::vector<std::size_t> pool;
  if (only_class) {
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.labels[i] == *only_class) pool.push_back(i);
  }
  const std::size_t n = only_class ? pool.size() : ds.size();
  if (size > n) throw InvalidArgument("validation batch of " + std::to_string(size) + " exceeds " + std::to_string(n) + " records");
  const auto picks = sample_indices(n, size, rng);
  Batch b;
  b.images.reserve(size);
  for (std::size_t p : picks) {
    const std::size_t i = only_class ? pool[p] : p;
    b.images.push_back(ds.images[i]);
    b.labels.push_back(ds.labels[i]);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Synthetic glyph datasets

enum class Nuisance { none, rotation, brightness, translation };

/// Class templates: oriented bars (0, 45, 90, 135 degrees, then further
/// angles) or stroke glyphs (L, T, Z, V, +, X, -, F).
enum class ShapeSet { bars, glyphs };

inline std::string_view nuisance_name(Nuisance n) {
  switch (n) {
    case Nuisance::none: return "none";
    case Nuisance::rotation: return "rotation";
    case Nuisance::brightness: return "brightness";
    case Nuisance::translation: return "translation";
  }
  return "none";
}

inline std::optional<Nuisance> parse_nuisance(std::string_view s) {
  for (auto n : {Nuisance::none, Nuisance::rotation, Nuisance::brightness, Nuisance::translation})
    if (nuisance_name(n) == s) return n;
  return std::nullopt;
}

struct SynthConfig {
  Nuisance nuisance = Nuisance::none;
  ShapeSet shapes = ShapeSet::bars;
  bool nuisance_on_train = false;  // control: both splits carry the nuisance
  int size = 16;
  int channels = 1;
  int classes = 4;
  int train_per_class = 100;
  int val_per_class = 100;
  double rotation_min_deg = -30.0;  // val angle ~ U[min, max]
  double rotation_max_deg = 30.0;
  double brightness_spread = 0.5;   // val factor ~ U[1-s, 1+s]
  double translation_frac = 0.25;   // val shift ~ U[-f, f] * size per axis
  double noise = 0.03;
  std::uint64_t seed = 0;

  void validate() const {
    if (train_per_class <= 0 || val_per_class <= 0) throw InvalidConfig("synthetic config needs samples per class > 0");
    if (classes < 2 || classes > 8) throw InvalidConfig("synthetic config supports 2..8 classes");
    if (size < 8) throw InvalidConfig("synthetic images must be at least 8x8");
    if (channels != 1 && channels != 3) throw InvalidConfig("synthetic images need 1 or 3 channels");
    if (!(rotation_min_deg <= rotation_max_deg)) throw InvalidConfig("synthetic rotation range is empty");
  }
};

namespace detail {

struct Segment {
  double x0, y0, x1, y1;
};

/// Bars through the centre at 0, 45, 90, 135, 22.5, 67.5, 112.5, 157.5
/// degrees.
inline const std::array<std::vector<Segment>, 8>& bars() {
  static const std::array<std::vector<Segment>, 8> b = [] {
    std::array<std::vector<Segment>, 8> out;
    constexpr std::array<double, 8> deg = {0.0, 45.0, 90.0, 135.0, 22.5, 67.5, 112.5, 157.5};
    for (std::size_t i = 0; i < deg.size(); ++i) {
      const double r = deg[i] * std::numbers::pi / 180.0;
      const double dx = 0.7 * std::cos(r), dy = -0.7 * std::sin(r);
      out[i] = {{-dx, -dy, dx, dy}};
    }
    return out;
  }();
  return b;
}

/// Stroke glyphs in unit coordinates ([-1, 1], y down); one per class.
inline const std::array<std::vector<Segment>, 8>& glyphs() {
  static const std::array<std::vector<Segment>, 8> g = {{
      {{-0.35, -0.6, -0.35, 0.6}, {-0.35, 0.6, 0.45, 0.6}},                              // L
      {{-0.5, -0.55, 0.5, -0.55}, {0.0, -0.55, 0.0, 0.6}},                               // T
      {{-0.45, -0.6, 0.45, -0.6}, {0.45, -0.6, -0.45, 0.6}, {-0.45, 0.6, 0.45, 0.6}},    // Z
      {{-0.45, -0.6, 0.0, 0.6}, {0.0, 0.6, 0.45, -0.6}},                                 // V
      {{-0.6, 0.0, 0.6, 0.0}, {0.0, -0.6, 0.0, 0.6}},                                    // +
      {{-0.5, -0.5, 0.5, 0.5}, {0.5, -0.5, -0.5, 0.5}},                                  // X
      {{-0.6, 0.0, 0.6, 0.0}},                                                           // -
      {{-0.4, -0.6, -0.4, 0.6}, {-0.4, -0.6, 0.4, -0.6}, {-0.4, 0.0, 0.25, 0.0}},        // F
  }};
  return g;
}

inline double segment_distance(double px, double py, const Segment& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = px - (s.x0 + t * dx), ey = py - (s.y0 + t * dy);
  return std::sqrt(ex * ex + ey * ey);
}

struct GlyphPose {
  double scale = 1.0, thickness = 0.13, shift_x = 0.0, shift_y = 0.0, angle_deg = 0.0;
  double foreground = 1.0, background = 0.5;
};

/// 4x4 supersampled coverage render; `noise` holds one value per pixel.
inline Image render_glyph(ShapeSet shapes, int cls, int size, int channels, const GlyphPose& pose,
                          std::span<const double> noise, std::span<const double> tint) {
  const auto& segs = (shapes == ShapeSet::bars ? bars() : glyphs())[static_cast<std::size_t>(cls)];
  const double rad = pose.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  Image img(size, size, channels);
  constexpr int ss = 4;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx) {
          const double ux = (x + (sx + 0.5) / ss) / size * 2.0 - 1.0 - pose.shift_x;
          const double uy = (y + (sy + 0.5) / ss) / size * 2.0 - 1.0 - pose.shift_y;
          // Same sense as the rotate op: positive angle is counter-clockwise.
          const double lx = (c * ux - s * uy) / pose.scale, ly = (s * ux + c * uy) / pose.scale;
          for (const auto& seg : segs)
            if (segment_distance(lx, ly, seg) <= pose.thickness) {
              ++hits;
              break;
            }
        }
      const double cover = static_cast<double>(hits) / (ss * ss);
      const std::size_t p = static_cast<std::size_t>(y) * size + x;
      for (int ch = 0; ch < channels; ++ch) {
        const double fg = pose.foreground * tint[static_cast<std::size_t>(ch)];
        img.at(ch, y, x) = clamp01(pose.background + (fg - pose.background) * cover + noise[p]);
      }
    }
  return img;
}

/// Shape randomness comes from `shape_rng`, nuisance draws from
/// `nuisance_rng`, so the same seed yields the same underlying glyphs with
/// or without a nuisance.
inline Dataset make_split(const SynthConfig& conf, int per_class, bool with_nuisance, Split split, Rng& shape_rng,
                          Rng& nuisance_rng) {
  Dataset ds;
  ds.class_count = conf.classes;
  ds.split = split;
  const std::size_t pixels = static_cast<std::size_t>(conf.size) * conf.size;
  std::vector<double> noise(pixels);
  std::vector<double> tint(static_cast<std::size_t>(conf.channels), 1.0);
  for (int i = 0; i < per_class; ++i)
    for (int cls = 0; cls < conf.classes; ++cls) {
      GlyphPose pose;
      pose.scale = uniform(shape_rng, 0.85, 1.05);
      pose.thickness = uniform(shape_rng, 0.11, 0.16);
      pose.shift_x = uniform(shape_rng, -1.0, 1.0) / conf.size;
      pose.shift_y = uniform(shape_rng, -1.0, 1.0) / conf.size;
      pose.foreground = uniform(shape_rng, 0.85, 1.0);
      for (auto& t : tint) t = conf.channels == 1 ? 1.0 : uniform(shape_rng, 0.8, 1.0);
      for (auto& n : noise) n = normal(shape_rng, 0.0, conf.noise);

      const double angle = uniform(nuisance_rng, conf.rotation_min_deg, conf.rotation_max_deg);
      const double factor = uniform(nuisance_rng, 1.0 - conf.brightness_spread, 1.0 + conf.brightness_spread);
      const double tx = uniform(nuisance_rng, -conf.translation_frac, conf.translation_frac) * 2.0;
      const double ty = uniform(nuisance_rng, -conf.translation_frac, conf.translation_frac) * 2.0;
      if (with_nuisance) {
        if (conf.nuisance == Nuisance::rotation) pose.angle_deg = angle;
        if (conf.nuisance == Nuisance::translation) {
          pose.shift_x += tx;
          pose.shift_y += ty;
        }
      }
      Image img = render_glyph(conf.shapes, cls, conf.size, conf.channels, pose, noise, tint);
      if (with_nuisance && conf.nuisance == Nuisance::brightness)
        for (auto& v : img.data) v = clamp01(v * factor);
      ds.images.push_back(std::move(img));
      ds.labels.push_back(cls);
    }
  return ds;
}

}  // namespace detail

/// (train, val) glyph datasets. The nuisance is applied to val only, or to
/// both splits when `nuisance_on_train` is set.
inline std::pair<Dataset, Dataset> make_synthetic(const SynthConfig& conf) {
  conf.validate();
  Rng seeder(conf.seed);
  Rng train_shape(split_seed(seeder)), train_nuisance(split_seed(seeder));
  Rng val_shape(split_seed(seeder)), val_nuisance(split_seed(seeder));
  auto train = detail::make_split(conf, conf.train_per_class, conf.nuisance_on_train, Split::train, train_shape,
                                  train_nuisance);
  auto val = detail::make_split(conf, conf.val_per_class, true, Split::val, val_shape, val_nuisance);
  return {std::move(train), std::move(val)};
}

}  // namespace augsearch
