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

#include <cmath>
#include <limits>

#include "augsearch/data.hpp"
#include "augsearch/nnet.hpp"
#include "test_util.hpp"

using namespace augsearch;

namespace {

/// Central-difference check of loss_and_grad on every coordinate.
double worst_fd_error(Network& net, const Image& img, int label, double eps = 1e-4) {
  const GradVec g = net.loss_and_grad(img, label).grad;
  double worst = 0.0;
  for (std::size_t j = 0; j < net.size(); ++j) {
    const double w0 = net.weights()[j];
    net.weights()[j] = w0 + eps;
    const double up = net.loss(img, label);
    net.weights()[j] = w0 - eps;
    const double down = net.loss(img, label);
    net.weights()[j] = w0;
    const double fd = (up - down) / (2 * eps);
    worst = std::max(worst, std::abs(fd - g[j]) / std::max({std::abs(fd), std::abs(g[j]), 1e-6}));
  }
  return worst;
}

/// Straightforward conv forward: nested loops over the flat weight vector.
std::vector<double> reference_conv_scores(const Network& net, const Image& img) {
  const Architecture& a = net.arch();
  const int c = a.channels, h = a.height, w = a.width, f1 = a.widths[0], f2 = a.widths[1], k = a.classes;
  const auto& p = net.weights();
  std::size_t at = 0;
  auto take = [&](std::size_t n) {
    const std::size_t start = at;
    at += n;
    return start;
  };
  const std::size_t w1 = take(static_cast<std::size_t>(f1 * c * 9)), b1 = take(static_cast<std::size_t>(f1));
  const std::size_t w2 = take(static_cast<std::size_t>(f2 * f1 * 9)), b2 = take(static_cast<std::size_t>(f2));
  const std::size_t wd = take(static_cast<std::size_t>(k * f2)), bd = take(static_cast<std::size_t>(k));

  auto conv = [&](const std::vector<std::vector<std::vector<double>>>& in, std::size_t wo, std::size_t bo, int cout) {
    const int cin = static_cast<int>(in.size()), hh = static_cast<int>(in[0].size()),
              ww = static_cast<int>(in[0][0].size());
    std::vector<std::vector<std::vector<double>>> out(cout, std::vector<std::vector<double>>(hh, std::vector<double>(ww)));
    for (int o = 0; o < cout; ++o)
      for (int y = 0; y < hh; ++y)
        for (int x = 0; x < ww; ++x) {
          double s = p[bo + o];
          for (int i = 0; i < cin; ++i)
            for (int ky = 0; ky < 3; ++ky)
              for (int kx = 0; kx < 3; ++kx) {
                const int sy = y + ky - 1, sx = x + kx - 1;
                if (sy < 0 || sy >= hh || sx < 0 || sx >= ww) continue;
                s += p[wo + static_cast<std::size_t>(((o * cin + i) * 3 + ky) * 3 + kx)] * in[i][sy][sx];
              }
          out[o][y][x] = std::max(s, 0.0);
        }
    return out;
  };

  std::vector<std::vector<std::vector<double>>> x0(c, std::vector<std::vector<double>>(h, std::vector<double>(w)));
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) x0[ch][y][x] = img.at(ch, y, x);
  const auto a1 = conv(x0, w1, b1, f1);
  std::vector<std::vector<std::vector<double>>> pooled(f1, std::vector<std::vector<double>>(h / 2, std::vector<double>(w / 2)));
  for (int ch = 0; ch < f1; ++ch)
    for (int y = 0; y < h / 2; ++y)
      for (int x = 0; x < w / 2; ++x)
        pooled[ch][y][x] = std::max({a1[ch][2 * y][2 * x], a1[ch][2 * y][2 * x + 1], a1[ch][2 * y + 1][2 * x],
                                     a1[ch][2 * y + 1][2 * x + 1]});
  const auto a2 = conv(pooled, w2, b2, f2);
  std::vector<double> feat(f2, 0.0);
  for (int ch = 0; ch < f2; ++ch) {
    for (const auto& row : a2[ch])
      for (double v : row) feat[ch] += v;
    feat[ch] /= (h / 2) * (w / 2);
  }
  std::vector<double> scores(k);
  for (int o = 0; o < k; ++o) {
    scores[o] = p[bd + o];
    for (int i = 0; i < f2; ++i) scores[o] += p[wd + static_cast<std::size_t>(o * f2 + i)] * feat[i];
  }
  return scores;
}

}  // namespace

TEST(Architecture, ParameterCountOfDefaultConv) {
  // conv1 32x3x3x3+32, conv2 128x32x3x3+128, dense 10x128+10
  const std::size_t want = 32 * 3 * 9 + 32 + 128 * 32 * 9 + 128 + 10 * 128 + 10;
  EXPECT_EQ(Architecture::conv(3, 32, 32, 10).parameter_count(), want);
  EXPECT_EQ(Network(Architecture::conv(3, 32, 32, 10)).size(), 39178u);
}

TEST(Architecture, ParameterCountOfMlp) {
  const std::size_t want = 256 * 16 + 16 + 16 * 8 + 8 + 8 * 4 + 4;
  EXPECT_EQ(Architecture::mlp(1, 16, 16, 4, {16, 8}).parameter_count(), want);
}

TEST(Architecture, DescribeParseRoundTrip) {
  for (const auto& a : {Architecture::conv(3, 32, 32, 10), Architecture::mlp(1, 16, 16, 4, {16, 8})})
    EXPECT_EQ(Architecture::parse(a.describe()), a);
  EXPECT_EQ(Architecture::conv(3, 32, 32, 10).describe(), "conv in=3x32x32 widths=32,128 classes=10");
  EXPECT_THROW(Architecture::parse("rnn in=1x2x2 widths=3 classes=2"), FormatError);
  EXPECT_THROW(Architecture::parse("mlp in=1x2 widths=3 classes=2"), FormatError);
}

TEST(Architecture, RejectsInvalidShapes) {
  EXPECT_THROW(Network(Architecture::conv(3, 7, 8, 10)), InvalidConfig);
  EXPECT_THROW(Network(Architecture::mlp(1, 4, 4, 1)), InvalidConfig);
  EXPECT_THROW(Network(Architecture::mlp(1, 4, 4, 3, {0})), InvalidConfig);
}

TEST(Network, ZeroWeightsGiveUniformLoss) {
  Rng rng(1);
  const Network net(Architecture::mlp(1, 6, 6, 5, {4}));
  EXPECT_NEAR(net.loss(testutil::random_image(1, 6, 6, rng), 2), std::log(5.0), 1e-12);
}

TEST(Network, ConvScoresMatchReferenceForward) {
  Rng rng(21);
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    Network net = Network::random(Architecture::conv(3, 8, 6, 4, 3, 5), seed);
    for (auto& v : net.weights()) v += 0.05 * normal(rng);  // nonzero biases too
    const Image img = testutil::random_image(3, 8, 6, rng);
    const auto got = net.forward(img);
    const auto want = reference_conv_scores(net, img);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-6);
    EXPECT_EQ(net.forward(img), got);
  }
}

TEST(Network, ConvGradientMatchesFiniteDifferences) {
  Rng rng(2);
  for (int t = 0; t < 3; ++t) {
    Network net = Network::random(Architecture::conv(3, 6, 6, 4, 3, 5), 40 + t);
    for (auto& w : net.weights()) w += normal(rng, 0, 0.05);
    const Image img = testutil::random_image(3, 6, 6, rng);
    EXPECT_LT(worst_fd_error(net, img, t % 4), 1e-3);
  }
}

TEST(Network, MlpGradientMatchesFiniteDifferences) {
  Rng rng(3);
  for (int t = 0; t < 3; ++t) {
    Network net = Network::random(Architecture::mlp(1, 5, 5, 3, {7, 6}), 50 + t);
    for (auto& w : net.weights()) w += normal(rng, 0, 0.05);
    const Image img = testutil::random_image(1, 5, 5, rng);
    EXPECT_LT(worst_fd_error(net, img, t % 3), 1e-3);
  }
}

TEST(Network, RejectsMismatchedInputs) {
  const Network net = Network::random(Architecture::mlp(1, 4, 4, 3, {4}), 1);
  EXPECT_THROW(net.loss(Image(5, 4, 1), 0), InvalidArgument);
  EXPECT_THROW(net.loss(Image(4, 4, 1), 3), InvalidArgument);
  EXPECT_THROW(net.loss(Image(4, 4, 1), -1), InvalidArgument);
}

TEST(BatchGrad, IsMeanOfPerExampleGradients) {
  Rng rng(4);
  const Network net = Network::random(Architecture::mlp(1, 4, 4, 3, {5}), 9);
  std::vector<Image> imgs;
  std::vector<int> labels;
  for (int i = 0; i < 5; ++i) {
    imgs.push_back(testutil::random_image(1, 4, 4, rng));
    labels.push_back(i % 3);
  }
  const GradVec mean = batch_grad(net, imgs, labels);
  GradVec want(net.size(), 0.0);
  for (int i = 0; i < 5; ++i) {
    const auto g = net.loss_and_grad(imgs[i], labels[i]).grad;
    for (std::size_t j = 0; j < g.size(); ++j) want[j] += g[j] / 5.0;
  }
  for (std::size_t j = 0; j < want.size(); ++j) EXPECT_NEAR(mean[j], want[j], 1e-12);
  EXPECT_EQ(batch_grad(net, imgs, labels, Parallel(3)), mean);
  EXPECT_EQ(batch_grad(net, std::span(imgs).first(1), std::span(labels).first(1)),
            net.loss_and_grad(imgs[0], labels[0]).grad);
}

TEST(Pretrain, SeparableSyntheticReachesHighAccuracy) {
  SynthConfig conf;
  conf.seed = 5;
  const auto [train, val] = make_synthetic(conf);
  Network net = Network::random(Architecture::mlp(1, 16, 16, 4, {16}), 5);
  TrainConfig tc;
  tc.epochs = 10;
  tc.lr = 0.02;
  const auto res = pretrain(net, train.view(), tc);
  EXPECT_EQ(res.epoch_loss.size(), 11u);
  EXPECT_NEAR(res.epoch_loss.front(), mean_loss(Network::random(net.arch(), 5), train.view()), 1e-12);
  EXPECT_LT(res.epoch_loss.back(), res.epoch_loss.front());
  EXPECT_GT(res.accuracy, 0.95);
}

TEST(Pretrain, StopLossEndsEarly) {
  SynthConfig conf;
  conf.seed = 6;
  const auto [train, val] = make_synthetic(conf);
  Network net = Network::random(Architecture::mlp(1, 16, 16, 4, {16}), 6);
  TrainConfig tc;
  tc.epochs = 50;
  tc.lr = 0.01;
  tc.stop_loss = 0.5;
  const auto res = pretrain(net, train.view(), tc);
  EXPECT_LT(res.epoch_loss.size(), 51u);
  EXPECT_LE(res.epoch_loss.back(), 0.5);
  EXPECT_GT(res.epoch_loss[res.epoch_loss.size() - 2], 0.5);
}

TEST(Pretrain, DivergenceIsReported) {
  SynthConfig conf;
  auto [train, val] = make_synthetic(conf);
  train.images[3].data[10] = std::numeric_limits<float>::quiet_NaN();
  Network net = Network::random(Architecture::mlp(1, 16, 16, 4, {16}), 1);
  TrainConfig tc;
  tc.epochs = 2;
  EXPECT_THROW(pretrain(net, train.view(), tc), TrainingFailure);
}

TEST(Pretrain, RejectsEmptyDataAndBadConfig) {
  Network net = Network::random(Architecture::mlp(1, 4, 4, 2, {3}), 1);
  EXPECT_THROW(pretrain(net, LabeledView{}, TrainConfig{}), InvalidArgument);
  TrainConfig bad;
  bad.lr = 0;
  Dataset ds;
  ds.images = {Image(4, 4, 1)};
  ds.labels = {0};
  ds.class_count = 2;
  EXPECT_THROW(pretrain(net, ds.view(), bad), InvalidConfig);
}

TEST(Pretrain, SameSeedSameWeights) {
  SynthConfig conf;
  conf.train_per_class = 20;
  const auto [train, val] = make_synthetic(conf);
  auto run = [&] {
    Network net = Network::random(Architecture::mlp(1, 16, 16, 4, {8}), 3);
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 17;
    pretrain(net, train.view(), tc);
    return encode_checkpoint(net);
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const Network net = Network::random(Architecture::conv(3, 8, 8, 5, 4, 6), 12);
  const auto bytes = encode_checkpoint(net);
  const Network back = decode_checkpoint(bytes);
  EXPECT_EQ(back.arch(), net.arch());
  ASSERT_EQ(back.size(), net.size());
  for (std::size_t j = 0; j < net.size(); ++j)
    EXPECT_EQ(std::bit_cast<std::uint64_t>(back.weights()[j]), std::bit_cast<std::uint64_t>(net.weights()[j]));
  EXPECT_EQ(encode_checkpoint(back), bytes);

  testutil::TempDir dir("ckpt");
  save_checkpoint(net, dir.path() / "n.ckpt");
  EXPECT_EQ(encode_checkpoint(load_checkpoint(dir.path() / "n.ckpt")), bytes);
}

TEST(Checkpoint, CorruptInputsAreRejected) {
  const auto bytes = encode_checkpoint(Network::random(Architecture::mlp(1, 4, 4, 2, {3}), 1));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_THROW(decode_checkpoint(truncated), FormatError);
  auto bad_version = bytes;
  bad_version[8] = 9;
  EXPECT_THROW(decode_checkpoint(bad_version), LoadError);
  EXPECT_THROW(decode_checkpoint(std::vector<std::uint8_t>{}), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/net.ckpt"), DataError);
}
