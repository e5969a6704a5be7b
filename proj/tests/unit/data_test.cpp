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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "augsearch/data.hpp"
#include "augsearch/imgops.hpp"
#include "test_util.hpp"

using namespace augsearch;

namespace {

std::vector<std::uint8_t> cifar_bytes(int n) {
  std::vector<std::uint8_t> bytes;
  for (int r = 0; r < n; ++r) {
    bytes.push_back(static_cast<std::uint8_t>(r % 10));
    for (int i = 0; i < 3 * 1024; ++i) bytes.push_back(static_cast<std::uint8_t>((r * 7 + i) % 256));
  }
  return bytes;
}

}  // namespace

TEST(Records, CifarLayoutIsChannelPlanar) {
  const auto bytes = cifar_bytes(3);
  const Dataset ds = parse_records(bytes, 32, 32, 3, 10);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 2}));
  // record 1, green plane, row 2, col 5 is byte 1 + 1024 + 2*32 + 5 of that record
  const int i = 1024 + 2 * 32 + 5;
  EXPECT_FLOAT_EQ(ds.images[1].at(1, 2, 5), static_cast<float>(((7 + i) % 256) / 255.0));
  EXPECT_EQ(encode_records(ds), bytes);
}

TEST(Records, RejectsMalformedFiles) {
  auto bytes = cifar_bytes(2);
  EXPECT_THROW(parse_records(std::span(bytes).first(bytes.size() - 1), 32, 32, 3, 10), FormatError);
  EXPECT_THROW(parse_records(std::vector<std::uint8_t>{}, 32, 32, 3, 10), FormatError);
  bytes[0] = 10;
  EXPECT_THROW(parse_records(bytes, 32, 32, 3, 10), FormatError);
}

TEST(Records, LoadsDirectoryOfBatches) {
  testutil::TempDir dir("cifar");
  const Dataset a = parse_records(cifar_bytes(2), 32, 32, 3, 10);
  const Dataset b = parse_records(cifar_bytes(3), 32, 32, 3, 10);
  write_records(b, dir.path() / "data_batch_2.bin");
  write_records(a, dir.path() / "data_batch_1.bin");
  write_records(a, dir.path() / "test_batch.bin");
  const Dataset all = load_cifar10(dir.path());
  ASSERT_EQ(all.size(), 5u);
  EXPECT_EQ(all.labels, (std::vector<int>{0, 1, 0, 1, 2}));
  EXPECT_EQ(load_cifar10(dir.path() / "data_batch_2.bin").size(), 3u);

  testutil::TempDir empty("empty");
  EXPECT_THROW(load_cifar10(empty.path()), DataError);
  EXPECT_THROW(load_cifar10(empty.path() / "missing.bin"), DataError);
}

TEST(Samplers, IndicesAreDistinctAndInRange) {
  Rng rng(1);
  for (std::size_t k : {0u, 1u, 7u, 20u}) {
    const auto idx = sample_indices(20, k, rng);
    ASSERT_EQ(idx.size(), k);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), k);
    for (auto i : idx) EXPECT_LT(i, 20u);
  }
  EXPECT_THROW(sample_indices(3, 4, rng), InvalidArgument);
}

TEST(Samplers, HoldoutPartitionsTheData) {
  Dataset ds;
  ds.class_count = 3;
  for (int i = 0; i < 30; ++i) {
    Image img(2, 2, 1);
    img.data[0] = static_cast<float>(i);
    ds.images.push_back(img);
    ds.labels.push_back(i % 3);
  }
  const auto [train, val] = split_holdout(ds, 10, 4);
  EXPECT_EQ(train.size(), 20u);
  EXPECT_EQ(val.size(), 10u);
  EXPECT_EQ(val.split, Split::val);
  std::set<float> seen;
  for (const auto* part : {&train, &val})
    for (std::size_t i = 0; i < part->size(); ++i) {
      seen.insert(part->images[i].data[0]);
      EXPECT_EQ(part->labels[i], static_cast<int>(part->images[i].data[0]) % 3);
    }
  EXPECT_EQ(seen.size(), 30u);
  EXPECT_THROW(split_holdout(ds, 30, 4), InvalidArgument);

  const auto [train2, val2] = split_holdout(ds, 10, 4);
  for (std::size_t i = 0; i < val.size(); ++i) EXPECT_EQ(val2.images[i].data, val.images[i].data);
}

TEST(Samplers, ClassConditionedBatchHasOneLabel) {
  SynthConfig conf;
  conf.val_per_class = 10;
  const auto [train, val] = make_synthetic(conf);
  Rng rng(2);
  const Batch b = sample_val_batch(val, 10, rng, 3);
  EXPECT_EQ(b.labels, std::vector<int>(10, 3));
  EXPECT_THROW(sample_val_batch(val, 11, rng, 3), InvalidArgument);
  EXPECT_THROW(sample_val_batch(val, 0, rng), InvalidArgument);
  EXPECT_EQ(sample_val_batch(val, 40, rng).images.size(), 40u);
}

TEST(Synthetic, SizesLabelsAndRange) {
  SynthConfig conf;
  conf.channels = 3;
  conf.classes = 5;
  conf.train_per_class = 6;
  conf.val_per_class = 4;
  const auto [train, val] = make_synthetic(conf);
  EXPECT_EQ(train.size(), 30u);
  EXPECT_EQ(val.size(), 20u);
  train.validate();
  val.validate();
  for (int c = 0; c < 5; ++c) EXPECT_EQ(std::count(train.labels.begin(), train.labels.end(), c), 6);
  for (const auto& img : train.images) {
    EXPECT_EQ(img.channels, 3);
    EXPECT_EQ(img.height, 16);
    for (float v : img.data) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
}

TEST(Synthetic, SameSeedSameData) {
  SynthConfig conf;
  conf.nuisance = Nuisance::rotation;
  conf.seed = 9;
  const auto a = make_synthetic(conf);
  const auto b = make_synthetic(conf);
  for (std::size_t i = 0; i < a.second.size(); ++i) EXPECT_EQ(a.second.images[i].data, b.second.images[i].data);
  conf.seed = 10;
  const auto c = make_synthetic(conf);
  EXPECT_NE(a.first.images[0].data, c.first.images[0].data);
}

TEST(Synthetic, NuisanceTouchesValOnly) {
  SynthConfig clean;
  clean.seed = 3;
  SynthConfig rotated = clean;
  rotated.nuisance = Nuisance::rotation;
  const auto [train_a, val_a] = make_synthetic(clean);
  const auto [train_b, val_b] = make_synthetic(rotated);
  for (std::size_t i = 0; i < train_a.size(); ++i) ASSERT_EQ(train_a.images[i].data, train_b.images[i].data);
  double moved = 0.0;
  for (std::size_t i = 0; i < val_a.size(); ++i) moved += mean_abs_diff(val_a.images[i], val_b.images[i]);
  EXPECT_GT(moved / static_cast<double>(val_a.size()), 0.02);

  rotated.rotation_min_deg = rotated.rotation_max_deg = 0.0;
  const auto [train_c, val_c] = make_synthetic(rotated);
  for (std::size_t i = 0; i < val_a.size(); ++i) EXPECT_EQ(val_a.images[i].data, val_c.images[i].data);

  rotated.nuisance_on_train = true;
  rotated.rotation_min_deg = 10.0;
  rotated.rotation_max_deg = 20.0;
  const auto [train_d, val_d] = make_synthetic(rotated);
  EXPECT_NE(train_a.images[0].data, train_d.images[0].data);
}

TEST(Synthetic, RotatedBarMatchesItsNeighbourClass) {
  // The 0-degree bar turned 90 degrees counter-clockwise is the 90-degree bar.
  const std::vector<double> noise(16 * 16, 0.0), tint{1.0};
  detail::GlyphPose upright, turned;
  turned.angle_deg = 90.0;
  const Image a = detail::render_glyph(ShapeSet::bars, 0, 16, 1, turned, noise, tint);
  const Image b = detail::render_glyph(ShapeSet::bars, 2, 16, 1, upright, noise, tint);
  EXPECT_LT(mean_abs_diff(a, b), 0.01);
  // and the rotate op agrees on the direction
  const Image c = rotate(detail::render_glyph(ShapeSet::bars, 4, 16, 1, upright, noise, tint), 22.5, 0.5);
  const Image d = detail::render_glyph(ShapeSet::bars, 1, 16, 1, upright, noise, tint);
  const Image e = detail::render_glyph(ShapeSet::bars, 0, 16, 1, upright, noise, tint);
  EXPECT_LT(mean_abs_diff(c, d), mean_abs_diff(c, e));
}

TEST(Synthetic, GlyphClassesAreDistinct) {
  SynthConfig conf;
  conf.shapes = ShapeSet::glyphs;
  conf.classes = 8;
  conf.noise = 0.0;
  conf.train_per_class = 1;
  const auto [train, val] = make_synthetic(conf);
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b) EXPECT_GT(mean_abs_diff(train.images[a], train.images[b]), 0.01) << a << " " << b;
}

TEST(Synthetic, RejectsBadConfigs) {
  SynthConfig s;
  s.classes = 9;
  EXPECT_THROW(make_synthetic(s), InvalidConfig);
  s = {};
  s.rotation_min_deg = 5;
  s.rotation_max_deg = 4;
  EXPECT_THROW(make_synthetic(s), InvalidConfig);
  s = {};
  s.channels = 2;
  EXPECT_THROW(make_synthetic(s), InvalidConfig);
  s = {};
  s.val_per_class = 0;
  EXPECT_THROW(make_synthetic(s), InvalidConfig);
  EXPECT_EQ(parse_nuisance("rotation"), Nuisance::rotation);
  EXPECT_FALSE(parse_nuisance("blur"));
}
