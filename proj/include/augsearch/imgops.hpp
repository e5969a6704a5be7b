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

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "augsearch/errors.hpp"
#include "augsearch/image.hpp"
#include "augsearch/io.hpp"
#include "augsearch/rng.hpp"

namespace augsearch {

enum class OpKind : std::uint8_t {
  identity,
  shear_x,
  shear_y,
  translate_x,
  translate_y,
  rotate,
  solarize,
  equalize,
  color,
  posterize,
  contrast,
  brightness,
  sharpness,
  auto_contrast,
  invert,
  cutout,
  flips,
  crop,
};

inline constexpr std::size_t kOpCount = 18;

inline constexpr std::array<std::string_view, kOpCount> kOpNames = {
    "identity", "shear_x",   "shear_y",    "translate_x", "translate_y",   "rotate",
    "solarize", "equalize",  "color",      "posterize",   "contrast",      "brightness",
    "sharpness", "auto_contrast", "invert", "cutout",     "flips",         "crop"};

inline std::string_view op_name(OpKind op) { return kOpNames[static_cast<std::size_t>(op)]; }

inline std::optional<OpKind> parse_op(std::string_view name) {
  for (std::size_t i = 0; i < kOpCount; ++i)
    if (kOpNames[i] == name) return static_cast<OpKind>(i);
  return std::nullopt;
}

inline constexpr bool has_magnitude(OpKind op) {
  switch (op) {
    case OpKind::shear_x:
    case OpKind::shear_y:
    case OpKind::translate_x:
    case OpKind::translate_y:
    case OpKind::rotate:
    case OpKind::solarize:
    case OpKind::posterize:
    case OpKind::contrast:
    case OpKind::color:
    case OpKind::brightness:
    case OpKind::sharpness:
      return true;
    default:
      return false;
  }
}

/// Ops whose output depends on an rng draw.
inline constexpr bool is_stochastic(OpKind op) {
  return op == OpKind::flips || op == OpKind::crop || op == OpKind::cutout;
}

/// One entry of the transform set: an op at a fixed magnitude. `level` is -1
/// for magnitude-free ops.
struct Transform {
  OpKind op = OpKind::identity;
  int level = -1;
  double magnitude = 0.0;

  friend bool operator==(const Transform&, const Transform&) = default;
};

/// Parameters shared by every transform in a table that are not part of the
/// searched magnitude.
struct OpParams {
  double fill = 0.5;         // out-of-bounds value for geometric resampling
  int cutout_size = 16;
  double cutout_fill = 0.5;
  int crop_pad = 4;
};

struct OpSetting {
  OpKind op = OpKind::identity;
  std::optional<std::pair<double, double>> range;
};

struct OpConfig {
  int levels = 12;
  OpParams params;
  std::vector<OpSetting> ops;
};

/// `n` uniformly spaced values from `lo` to `hi`, both endpoints included.
inline std::vector<double> magnitude_levels(double lo, double hi, int n) {
  if (!(lo < hi)) throw InvalidConfig("magnitude range needs lo < hi");
  if (n < 2) throw InvalidConfig("need at least 2 magnitude levels");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double step = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + step * i;
  out.back() = hi;
  return out;
}

/// The standard CIFAR-scale space: 18 ops, 12 levels, 139 transforms.
inline OpConfig standard_op_config() {
  using R = std::pair<double, double>;
  OpConfig cfg;
  cfg.levels = 12;
  cfg.ops = {
      {OpKind::identity, {}},
      {OpKind::shear_x, R{-0.3, 0.3}},
      {OpKind::shear_y, R{-0.3, 0.3}},
      {OpKind::translate_x, R{-0.45, 0.45}},
      {OpKind::translate_y, R{-0.45, 0.45}},
      {OpKind::rotate, R{-30.0, 30.0}},
      {OpKind::auto_contrast, {}},
      {OpKind::invert, {}},
      {OpKind::equalize, {}},
      {OpKind::solarize, R{0.0, 256.0}},
      {OpKind::posterize, R{4.0, 8.0}},
      {OpKind::contrast, R{0.1, 1.9}},
      {OpKind::color, R{0.1, 1.9}},
      {OpKind::brightness, R{0.1, 1.9}},
      {OpKind::sharpness, R{0.1, 1.9}},
      {OpKind::flips, {}},
      {OpKind::cutout, {}},
      {OpKind::crop, {}},
  };
  return cfg;
}

inline nlohmann::json op_config_to_json(const OpConfig& cfg) {
  nlohmann::json j;
  j["levels"] = cfg.levels;
  j["fill"] = cfg.params.fill;
  j["cutout_size"] = cfg.params.cutout_size;
  j["cutout_fill"] = cfg.params.cutout_fill;
  j["crop_pad"] = cfg.params.crop_pad;
  j["ops"] = nlohmann::json::array();
  for (const auto& conf : cfg.ops) {
    nlohmann::json o;
    o["name"] = std::string(op_name(conf.op));
    if (conf.range) o["range"] = {conf.range->first, conf.range->second};
    j["ops"].push_back(o);
  }
  return j;
}

/// Parses the key-value op configuration. Unknown op names are rejected;
/// duplicates and missing ranges are left for `build_transform_table`.
inline OpConfig op_config_from_json(const nlohmann::json& j) {
  try {
    OpConfig cfg;
    cfg.levels = j.value("levels", 12);
    cfg.params.fill = j.value("fill", 0.5);
    cfg.params.cutout_size = j.value("cutout_size", 16);
    cfg.params.cutout_fill = j.value("cutout_fill", 0.5);
    cfg.params.crop_pad = j.value("crop_pad", 4);
    for (const auto& o : j.at("ops")) {
      const auto name = o.at("name").get<std::string>();
      auto op = parse_op(name);
      if (!op) throw InvalidConfig("unknown op '" + name + "'");
      OpSetting conf{*op, {}};
      if (o.contains("range")) {
        const auto& r = o.at("range");
        if (!r.is_array() || r.size() != 2) throw InvalidConfig("range of '" + name + "' must be [lo, hi]");
        conf.range = std::pair{r[0].get<double>(), r[1].get<double>()};
      }
      cfg.ops.push_back(conf);
    }
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("op config: ") + e.what());
  }
}

/// Ordered transform set. The order defines the categorical axis of every
/// policy layer built on it.
struct TransformTable {
  OpConfig config;
  std::vector<Transform> entries;
  std::size_t identity_index = 0;

  std::size_t size() const noexcept { return entries.size(); }
  const Transform& operator[](std::size_t i) const { return entries.at(i); }

  /// One line per entry, `name|level|hexfloat`, followed by the shared params.
  std::string canonical_listing() const {
    std::string s;
    for (const auto& t : entries)
      s += std::string(op_name(t.op)) + "|" + std::to_string(t.level) + "|" + io::hexfloat(t.magnitude) + "\n";
    s += "fill=" + io::hexfloat(config.params.fill) + ";cutout_size=" + std::to_string(config.params.cutout_size) +
         ";cutout_fill=" + io::hexfloat(config.params.cutout_fill) + ";crop_pad=" + std::to_string(config.params.crop_pad) +
         "\n";
    return s;
  }

  std::uint64_t hash() const { return io::fnv1a64(canonical_listing()); }

  std::string label(std::size_t i) const {
    const auto& t = entries.at(i);
    std::string s(op_name(t.op));
    if (t.level >= 0) s += "@" + std::to_string(t.level);
    return s;
  }
};

inline TransformTable build_transform_table(const OpConfig& cfg) {
  TransformTable table;
  table.config = cfg;
  std::set<OpKind> seen;
  bool have_identity = false;
  for (const auto& conf : cfg.ops) {
    if (!seen.insert(conf.op).second)
      throw InvalidConfig("duplicate op '" + std::string(op_name(conf.op)) + "'");
    if (has_magnitude(conf.op)) {
      if (!conf.range)
        throw InvalidConfig("op '" + std::string(op_name(conf.op)) + "' needs a magnitude range");
      const auto mags = magnitude_levels(conf.range->first, conf.range->second, cfg.levels);
      for (int l = 0; l < cfg.levels; ++l) table.entries.push_back({conf.op, l, mags[static_cast<std::size_t>(l)]});
    } else {
      if (conf.op == OpKind::identity) {
        table.identity_index = table.entries.size();
        have_identity = true;
      }
      table.entries.push_back({conf.op, -1, 0.0});
    }
  }
  if (!have_identity) throw InvalidConfig("transform table must contain identity");
  if (cfg.params.cutout_size < 0 || cfg.params.crop_pad < 0)
    throw InvalidConfig("cutout_size and crop_pad must be non-negative");
  return table;
}

// ---------------------------------------------------------------------------
// Deterministic primitives

namespace detail {

inline float bilinear(const Image& img, int c, double sx, double sy, double fill) {
  const double fx0 = std::floor(sx), fy0 = std::floor(sy);
  const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
  const double fx = sx - fx0, fy = sy - fy0;
  auto pix = [&](int y, int x) -> double {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return fill;
    return img.at(c, y, x);
  };
  const double v = (1.0 - fx) * (1.0 - fy) * pix(y0, x0) + fx * (1.0 - fy) * pix(y0, x0 + 1) +
                   (1.0 - fx) * fy * pix(y0 + 1, x0) + fx * fy * pix(y0 + 1, x0 + 1);
  return clamp01(v);
}

/// Inverse-mapping warp: `src(x, y)` gives the source coordinate for each
/// output pixel centre.
template <typename SourceFn>
Image warp(const Image& img, double fill, SourceFn&& src) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const auto [sx, sy] = src(static_cast<double>(x), static_cast<double>(y));
      for (int c = 0; c < img.channels; ++c) out.at(c, y, x) = bilinear(img, c, sx, sy, fill);
    }
  return out;
}

inline Image luminance(const Image& img) {
  Image out(img.height, img.width, 1);
  if (img.channels == 1) {
    out.data = img.data;
    return out;
  }
  for (std::size_t i = 0; i < img.plane(); ++i)
    out.data[i] = static_cast<float>(0.299 * img.data[i] + 0.587 * img.data[img.plane() + i] +
                                     0.114 * img.data[2 * img.plane() + i]);
  return out;
}

/// out = clamp((1 - m) * degenerate + m * img)
inline Image blend(const Image& degenerate, const Image& img, double m) {
  Image out(img.height, img.width, img.channels);
  for (std::size_t i = 0; i < img.size(); ++i)
    out.data[i] = clamp01((1.0 - m) * degenerate.data[i] + m * img.data[i]);
  return out;
}

}  // namespace detail

inline Image shear_x(const Image& img, double m, double fill = 0.5) {
  const double cy = (img.height - 1) / 2.0;
  return detail::warp(img, fill, [&](double x, double y) { return std::pair{x + m * (y - cy), y}; });
}

inline Image shear_y(const Image& img, double m, double fill = 0.5) {
  const double cx = (img.width - 1) / 2.0;
  return detail::warp(img, fill, [&](double x, double y) { return std::pair{x, y + m * (x - cx)}; });
}

/// Shifts content right by m * width.
inline Image translate_x(const Image& img, double m, double fill = 0.5) {
  const double dx = m * img.width;
  return detail::warp(img, fill, [&](double x, double y) { return std::pair{x - dx, y}; });
}

/// Shifts content down by m * height.
inline Image translate_y(const Image& img, double m, double fill = 0.5) {
  const double dy = m * img.height;
  return detail::warp(img, fill, [&](double x, double y) { return std::pair{x, y - dy}; });
}

/// Counter-clockwise (as displayed, rows growing downward) about the image
/// centre.
inline Image rotate(const Image& img, double degrees, double fill = 0.5) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  return detail::warp(img, fill, [&](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    return std::pair{cx + c * dx - s * dy, cy + s * dx + c * dy};
  });
}

/// Inverts every pixel whose 8-bit value is at or above `threshold`.
inline Image solarize(const Image& img, double threshold) {
  Image out = img;
  for (auto& v : out.data)
    if (to_byte(v) >= threshold) v = 1.0f - v;
  return out;
}

/// Keeps the top round(bits) bits of each 8-bit value.
inline Image posterize(const Image& img, double bits) {
  const int b = std::clamp(static_cast<int>(std::lround(bits)), 1, 8);
  const int mask = (0xFF << (8 - b)) & 0xFF;
  Image out = img;
  for (auto& v : out.data) v = static_cast<float>((to_byte(v) & mask) / 255.0);
  return out;
}

/// Per-channel histogram equalization on 8-bit values (PIL's lookup-table
/// construction). Channels with a degenerate histogram are left untouched.
inline Image equalize(const Image& img) {
  Image out = img;
  const std::size_t plane = img.plane();
  for (int c = 0; c < img.channels; ++c) {
    std::array<long, 256> hist{};
    for (std::size_t i = 0; i < plane; ++i) ++hist[static_cast<std::size_t>(to_byte(img.data[c * plane + i]))];
    long total = 0, last_nonzero = 0, nonzero_bins = 0;
    for (long h : hist)
      if (h) {
        total += h;
        last_nonzero = h;
        ++nonzero_bins;
      }
    if (nonzero_bins <= 1) continue;
    const long step = (total - last_nonzero) / 255;
    if (step == 0) continue;
    std::array<int, 256> lut{};
    long n = step / 2;
    for (int i = 0; i < 256; ++i) {
      lut[static_cast<std::size_t>(i)] = static_cast<int>(std::min<long>(n / step, 255));
      n += hist[static_cast<std::size_t>(i)];
    }
    for (std::size_t i = 0; i < plane; ++i) {
      auto& v = out.data[c * plane + i];
      v = static_cast<float>(lut[static_cast<std::size_t>(to_byte(v))] / 255.0);
    }
  }
  return out;
}

/// Per-channel min/max stretch to [0, 1]; flat channels unchanged.
inline Image auto_contrast(const Image& img) {
  Image out = img;
  const std::size_t plane = img.plane();
  for (int c = 0; c < img.channels; ++c) {
    float lo = 1.0f, hi = 0.0f;
    for (std::size_t i = 0; i < plane; ++i) {
      lo = std::min(lo, img.data[c * plane + i]);
      hi = std::max(hi, img.data[c * plane + i]);
    }
    if (!(hi > lo)) continue;
    const double scale = 1.0 / (static_cast<double>(hi) - lo);
    for (std::size_t i = 0; i < plane; ++i) {
      auto& v = out.data[c * plane + i];
      v = clamp01((v - lo) * scale);
    }
  }
  return out;
}

inline Image invert(const Image& img) {
  Image out = img;
  for (auto& v : out.data) v = 1.0f - v;
  return out;
}

/// Saturation blend toward the grey-scale image.
inline Image color(const Image& img, double m) {
  const Image lum = detail::luminance(img);
  Image degenerate(img.height, img.width, img.channels);
  for (int c = 0; c < img.channels; ++c)
    std::copy(lum.data.begin(), lum.data.end(), degenerate.data.begin() + static_cast<std::ptrdiff_t>(c * img.plane()));
  return detail::blend(degenerate, img, m);
}

/// Blend toward the mean luminance.
inline Image contrast(const Image& img, double m) {
  const Image lum = detail::luminance(img);
  double mean = 0.0;
  for (float v : lum.data) mean += v;
  mean /= static_cast<double>(lum.size());
  return detail::blend(Image(img.height, img.width, img.channels, static_cast<float>(mean)), img, m);
}

/// Blend toward black.
inline Image brightness(const Image& img, double m) {
  return detail::blend(Image(img.height, img.width, img.channels, 0.0f), img, m);
}

/// Blend toward a 3x3 box-smoothed copy; the one-pixel border of the smoothed
/// copy keeps the original values.
inline Image sharpness(const Image& img, double m) {
  Image smooth = img;
  for (int c = 0; c < img.channels; ++c)
    for (int y = 1; y + 1 < img.height; ++y)
      for (int x = 1; x + 1 < img.width; ++x) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) s += img.at(c, y + dy, x + dx);
        smooth.at(c, y, x) = static_cast<float>(s / 9.0);
      }
  return detail::blend(smooth, img, m);
}

/// Horizontal mirror.
inline Image mirror(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

/// Square patch of side `size` centred at (row, col), clipped to the image.
inline Image cutout_at(const Image& img, int size, int row, int col, float fill = 0.5f) {
  if (size < 0) throw InvalidArgument("cutout size must be non-negative");
  Image out = img;
  if (size == 0) return out;
  const int y0 = std::max(0, row - size / 2), y1 = std::min(img.height, row - size / 2 + size);
  const int x0 = std::max(0, col - size / 2), x1 = std::min(img.width, col - size / 2 + size);
  for (int c = 0; c < img.channels; ++c)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) out.at(c, y, x) = fill;
  return out;
}

/// Zero-pads by `pad` on every side and crops an HxW window whose top-left
/// corner sits at `offset` in the padded frame.
inline Image pad_crop_at(const Image& img, int pad, int row_offset, int col_offset) {
  if (pad < 0) throw InvalidArgument("pad must be non-negative");
  if (row_offset < 0 || col_offset < 0 || row_offset > 2 * pad || col_offset > 2 * pad)
    throw InvalidArgument("crop offset (" + std::to_string(row_offset) + "," + std::to_string(col_offset) +
                          ") outside [0, " + std::to_string(2 * pad) + "]");
  Image out(img.height, img.width, img.channels, 0.0f);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const int sy = y + row_offset - pad, sx = x + col_offset - pad;
        if (sy >= 0 && sy < img.height && sx >= 0 && sx < img.width) out.at(c, y, x) = img.at(c, sy, sx);
      }
  return out;
}

/// Applies one transform. Only flips, crop and cutout touch `rng`.
inline Image apply_transform(const Image& img, const Transform& t, const OpParams& params, Rng& rng) {
  const double m = t.magnitude;
  switch (t.op) {
    case OpKind::identity: return img;
    case OpKind::shear_x: return shear_x(img, m, params.fill);
    case OpKind::shear_y: return shear_y(img, m, params.fill);
    case OpKind::translate_x: return translate_x(img, m, params.fill);
    case OpKind::translate_y: return translate_y(img, m, params.fill);
    case OpKind::rotate: return rotate(img, m, params.fill);
    case OpKind::solarize: return solarize(img, m);
    case OpKind::equalize: return equalize(img);
    case OpKind::color: return color(img, m);
    case OpKind::posterize: return posterize(img, m);
    case OpKind::contrast: return contrast(img, m);
    case OpKind::brightness: return brightness(img, m);
    case OpKind::sharpness: return sharpness(img, m);
    case OpKind::auto_contrast: return auto_contrast(img);
    case OpKind::invert: return invert(img);
    case OpKind::cutout: {
      const int row = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(img.height)));
      const int col = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(img.width)));
      return cutout_at(img, params.cutout_size, row, col, static_cast<float>(params.cutout_fill));
    }
    case OpKind::flips:
      return uniform01(rng) < 0.5 ? mirror(img) : img;
    case OpKind::crop: {
      const auto span = static_cast<std::size_t>(2 * params.crop_pad + 1);
      const int row = static_cast<int>(uniform_index(rng, span));
      const int col = static_cast<int>(uniform_index(rng, span));
      return pad_crop_at(img, params.crop_pad, row, col);
    }
  }
  return img;
}

inline Image apply_transform(const Image& img, const TransformTable& table, std::size_t index, Rng& rng) {
  return apply_transform(img, table.entries.at(index), table.config.params, rng);
}

}  // namespace augsearch
