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

// Small classifier with hand-written forward/backward passes. Everything is
// float64: the matcher compares nearly parallel gradients in high dimension
// and cosine similarity is sensitive to accumulated rounding.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "augsearch/errors.hpp"
#include "augsearch/image.hpp"
#include "augsearch/io.hpp"
#include "augsearch/parallel.hpp"
#include "augsearch/rng.hpp"

namespace augsearch {

using GradVec = std::vector<double>;

enum class ArchKind { mlp, conv };

/// Layer stack description.
///  - conv: conv3x3(filters[0]) -> relu -> maxpool2 -> conv3x3(filters[1]) ->
///          relu -> global-avg-pool -> dense(classes)
///  - mlp:  dense(hidden[i]) -> relu ... -> dense(classes)
struct Architecture {
  ArchKind kind = ArchKind::conv;
  int channels = 3;
  int height = 32;
  int width = 32;
  int classes = 10;
  std::vector<int> widths = {32, 128};  // conv filters, or mlp hidden sizes

  static Architecture conv(int c, int h, int w, int classes, int f1 = 32, int f2 = 128) {
    return {ArchKind::conv, c, h, w, classes, {f1, f2}};
  }
  static Architecture mlp(int c, int h, int w, int classes, std::vector<int> hidden = {32}) {
    return {ArchKind::mlp, c, h, w, classes, std::move(hidden)};
  }

  int input_size() const { return channels * height * width; }

  void validate() const {
    if (channels <= 0 || height <= 0 || width <= 0 || classes < 2)
      throw InvalidConfig("architecture needs positive input dims and >= 2 classes");
    for (int w : widths)
      if (w <= 0) throw InvalidConfig("architecture widths must be positive");
    if (kind == ArchKind::conv) {
      if (widths.size() != 2) throw InvalidConfig("conv architecture takes exactly two filter counts");
      if (height % 2 || width % 2) throw InvalidConfig("conv architecture needs even input height/width");
    }
  }

  std::size_t parameter_count() const {
    if (kind == ArchKind::conv) {
      const std::size_t f1 = static_cast<std::size_t>(widths[0]), f2 = static_cast<std::size_t>(widths[1]);
      return f1 * static_cast<std::size_t>(channels) * 9 + f1 + f2 * f1 * 9 + f2 +
             static_cast<std::size_t>(classes) * f2 + static_cast<std::size_t>(classes);
    }
    std::size_t n = 0;
    std::size_t in = static_cast<std::size_t>(input_size());
    for (int h : widths) {
      n += in * static_cast<std::size_t>(h) + static_cast<std::size_t>(h);
      in = static_cast<std::size_t>(h);
    }
    return n + in * static_cast<std::size_t>(classes) + static_cast<std::size_t>(classes);
  }

  /// e.g. "conv in=3x32x32 widths=32,128 classes=10"
  std::string describe() const {
    std::string s = kind == ArchKind::conv ? "conv" : "mlp";
    s += " in=" + std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width) + " widths=";
    for (std::size_t i = 0; i < widths.size(); ++i) s += (i ? "," : "") + std::to_string(widths[i]);
    s += " classes=" + std::to_string(classes);
    return s;
  }

  static Architecture parse(const std::string& text) {
    std::istringstream in(text);
    std::string kind, dims, widths_tok, classes_tok;
    in >> kind >> dims >> widths_tok >> classes_tok;
    Architecture a;
    if (kind == "conv") a.kind = ArchKind::conv;
    else if (kind == "mlp") a.kind = ArchKind::mlp;
    else throw FormatError("unknown architecture kind '" + kind + "'");
    try {
      if (dims.rfind("in=", 0) != 0 || widths_tok.rfind("widths=", 0) != 0 || classes_tok.rfind("classes=", 0) != 0)
        throw FormatError("malformed architecture descriptor '" + text + "'");
      if (std::sscanf(dims.c_str(), "in=%dx%dx%d", &a.channels, &a.height, &a.width) != 3)
        throw FormatError("malformed input dims in '" + text + "'");
      a.widths.clear();
      std::istringstream ws(widths_tok.substr(7));
      for (std::string tok; std::getline(ws, tok, ',');) a.widths.push_back(std::stoi(tok));
      a.classes = std::stoi(classes_tok.substr(8));
    } catch (const std::logic_error&) {
      throw FormatError("malformed architecture descriptor '" + text + "'");
    }
    try {
      a.validate();
    } catch (const InvalidConfig& e) {
      throw FormatError(e.what());
    }
    return a;
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct LossGrad {
  double loss = 0.0;
  GradVec grad;
};

/// Scratch buffers reused across forward/backward calls on one thread.
struct Workspace {
  std::vector<double> input, z1, a1, pooled, z2, a2, features, logits, probs;
  std::vector<std::size_t> pool_arg;
  std::vector<double> d_logits, d_features, d_a2, d_pooled, d_a1;
  std::vector<std::vector<double>> mlp_act, mlp_delta;
};

namespace detail {

inline double softmax_cross_entropy(std::span<const double> logits, int label, std::span<double> probs) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (auto& p : probs) p /= sum;
  return std::log(sum) + mx - logits[static_cast<std::size_t>(label)];
}

}  // namespace detail

class Network {
 public:
  /// All-zero weights.
  explicit Network(Architecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    weights_.assign(arch_.parameter_count(), 0.0);
  }

  /// He-normal weights, zero biases.
  static Network random(const Architecture& arch, std::uint64_t seed) {
    Network net(arch);
    Rng rng(seed);
    net.for_each_tensor([&](std::size_t offset, std::size_t count, std::size_t fan_in, bool is_bias) {
      if (is_bias) return;
      const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < count; ++i) net.weights_[offset + i] = normal(rng, 0.0, sd);
    });
    return net;
  }

  const Architecture& arch() const noexcept { return arch_; }
  std::size_t size() const noexcept { return weights_.size(); }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<double> weights() noexcept { return weights_; }

  std::vector<double> flatten() const { return weights_; }
  void unflatten(std::span<const double> w) {
    if (w.size() != weights_.size())
      throw InvalidArgument("unflatten: expected " + std::to_string(weights_.size()) + " weights, got " +
                            std::to_string(w.size()));
    std::copy(w.begin(), w.end(), weights_.begin());
  }

  std::vector<double> forward(const Image& img) const {
    Workspace ws;
    run_forward(img, ws);
    return ws.logits;
  }

  int predict(const Image& img) const {
    const auto scores = forward(img);
    return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  }

  double loss(const Image& img, int label) const {
    check_label(label);
    Workspace ws;
    run_forward(img, ws);
    ws.probs.resize(ws.logits.size());
    return detail::softmax_cross_entropy(ws.logits, label, ws.probs);
  }

  LossGrad loss_and_grad(const Image& img, int label) const {
    Workspace ws;
    LossGrad out;
    out.grad.assign(weights_.size(), 0.0);
    out.loss = loss_and_grad(img, label, out.grad, ws);
    return out;
  }

  /// Hot-path variant: overwrites `grad` (length size()) and returns the loss.
  double loss_and_grad(const Image& img, int label, std::span<double> grad, Workspace& ws) const {
    check_label(label);
    if (grad.size() != weights_.size()) throw InvalidArgument("gradient buffer has wrong length");
    run_forward(img, ws);
    ws.probs.resize(ws.logits.size());
    const double loss = detail::softmax_cross_entropy(ws.logits, label, ws.probs);
    ws.d_logits = ws.probs;
    ws.d_logits[static_cast<std::size_t>(label)] -= 1.0;
    std::fill(grad.begin(), grad.end(), 0.0);
    if (arch_.kind == ArchKind::conv) backward_conv(ws, grad);
    else backward_mlp(ws, grad);
    return loss;
  }

 private:
  void check_label(int label) const {
    if (label < 0 || label >= arch_.classes)
      throw InvalidArgument("label " + std::to_string(label) + " outside [0, " + std::to_string(arch_.classes) + ")");
  }

  void check_input(const Image& img) const {
    if (img.channels != arch_.channels || img.height != arch_.height || img.width != arch_.width)
      throw InvalidArgument("input " + std::to_string(img.channels) + "x" + std::to_string(img.height) + "x" +
                            std::to_string(img.width) + " does not match network input " + arch_.describe());
  }

  /// Visits parameter tensors in flattening order.
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    std::size_t off = 0;
    auto emit = [&](std::size_t count, std::size_t fan_in, bool bias) {
      fn(off, count, fan_in, bias);
      off += count;
    };
    if (arch_.kind == ArchKind::conv) {
      const auto c = static_cast<std::size_t>(arch_.channels);
      const auto f1 = static_cast<std::size_t>(arch_.widths[0]), f2 = static_cast<std::size_t>(arch_.widths[1]);
      const auto k = static_cast<std::size_t>(arch_.classes);
      emit(f1 * c * 9, c * 9, false);
      emit(f1, 0, true);
      emit(f2 * f1 * 9, f1 * 9, false);
      emit(f2, 0, true);
      emit(k * f2, f2, false);
      emit(k, 0, true);
    } else {
      auto in = static_cast<std::size_t>(arch_.input_size());
      for (int h : arch_.widths) {
        emit(in * static_cast<std::size_t>(h), in, false);
        emit(static_cast<std::size_t>(h), 0, true);
        in = static_cast<std::size_t>(h);
      }
      emit(in * static_cast<std::size_t>(arch_.classes), in, false);
      emit(static_cast<std::size_t>(arch_.classes), 0, true);
    }
  }

  void run_forward(const Image& img, Workspace& ws) const {
    check_input(img);
    ws.input.assign(img.data.begin(), img.data.end());
    if (arch_.kind == ArchKind::conv) forward_conv(ws);
    else forward_mlp(ws);
  }

  // -- dense ---------------------------------------------------------------

  static void dense_forward(const double* w, const double* b, std::span<const double> in, std::span<double> out) {
    const std::size_t n_in = in.size();
    for (std::size_t o = 0; o < out.size(); ++o) {
      const double* row = w + o * n_in;
      double s = b[o];
      for (std::size_t i = 0; i < n_in; ++i) s += row[i] * in[i];
      out[o] = s;
    }
  }

  /// Accumulates dW, db; writes d_in when non-empty.
  static void dense_backward(const double* w, std::span<const double> in, std::span<const double> d_out, double* dw,
                             double* db, std::span<double> d_in) {
    const std::size_t n_in = in.size();
    if (!d_in.empty()) std::fill(d_in.begin(), d_in.end(), 0.0);
    for (std::size_t o = 0; o < d_out.size(); ++o) {
      const double g = d_out[o];
      db[o] += g;
      if (g == 0.0) continue;
      double* drow = dw + o * n_in;
      const double* row = w + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) drow[i] += g * in[i];
      if (!d_in.empty())
        for (std::size_t i = 0; i < n_in; ++i) d_in[i] += g * row[i];
    }
  }

  void forward_mlp(Workspace& ws) const {
    const std::size_t layers = arch_.widths.size() + 1;
    ws.mlp_act.resize(layers + 1);
    ws.mlp_act[0] = ws.input;
    const double* p = weights_.data();
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t n_in = ws.mlp_act[l].size();
      const std::size_t n_out =
          l + 1 < layers ? static_cast<std::size_t>(arch_.widths[l]) : static_cast<std::size_t>(arch_.classes);
      auto& out = ws.mlp_act[l + 1];
      out.resize(n_out);
      dense_forward(p, p + n_in * n_out, ws.mlp_act[l], out);
      p += n_in * n_out + n_out;
      if (l + 1 < layers)
        for (auto& v : out) v = std::max(v, 0.0);
    }
    ws.logits = ws.mlp_act[layers];
  }

  void backward_mlp(Workspace& ws, std::span<double> grad) const {
    const std::size_t layers = arch_.widths.size() + 1;
    std::vector<std::size_t> offsets(layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers; ++l) {
      offsets[l] = off;
      off += ws.mlp_act[l].size() * ws.mlp_act[l + 1].size() + ws.mlp_act[l + 1].size();
    }
    ws.mlp_delta.resize(layers + 1);
    ws.mlp_delta[layers] = ws.d_logits;
    for (std::size_t l = layers; l-- > 0;) {
      const std::size_t n_in = ws.mlp_act[l].size(), n_out = ws.mlp_act[l + 1].size();
      auto& d_in = ws.mlp_delta[l];
      d_in.resize(l > 0 ? n_in : 0);
      dense_backward(weights_.data() + offsets[l], ws.mlp_act[l], ws.mlp_delta[l + 1], grad.data() + offsets[l],
                     grad.data() + offsets[l] + n_in * n_out, d_in);
      if (l > 0)
        for (std::size_t i = 0; i < n_in; ++i)
          if (ws.mlp_act[l][i] <= 0.0) d_in[i] = 0.0;
    }
  }

  // -- conv ----------------------------------------------------------------

  /// 3x3, stride 1, zero padding 1.
  static void conv3x3_forward(const double* w, const double* b, const double* in, int cin, int h, int wd, int cout,
                              double* out) {
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    for (int o = 0; o < cout; ++o) {
      double* dst = out + static_cast<std::size_t>(o) * plane;
      std::fill(dst, dst + plane, b[o]);
      for (int i = 0; i < cin; ++i) {
        const double* src = in + static_cast<std::size_t>(i) * plane;
        const double* k = w + (static_cast<std::size_t>(o) * cin + i) * 9;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const double kv = k[ky * 3 + kx];
            for (int y = 0; y < h; ++y) {
              const int sy = y + ky - 1;
              if (sy < 0 || sy >= h) continue;
              const int x_lo = std::max(0, 1 - kx), x_hi = std::min(wd, wd + 1 - kx);
              const double* srow = src + static_cast<std::size_t>(sy) * wd + (kx - 1);
              double* drow = dst + static_cast<std::size_t>(y) * wd;
              for (int x = x_lo; x < x_hi; ++x) drow[x] += kv * srow[x];
            }
          }
      }
    }
  }

  static void conv3x3_backward(const double* w, const double* in, const double* d_out, int cin, int h, int wd,
                               int cout, double* dw, double* db, double* d_in) {
    const std::size_t plane = static_cast<std::size_t>(h) * wd;
    if (d_in) std::fill(d_in, d_in + plane * static_cast<std::size_t>(cin), 0.0);
    for (int o = 0; o < cout; ++o) {
      const double* g = d_out + static_cast<std::size_t>(o) * plane;
      db[o] += std::accumulate(g, g + plane, 0.0);
      for (int i = 0; i < cin; ++i) {
        const double* src = in + static_cast<std::size_t>(i) * plane;
        double* dsrc = d_in ? d_in + static_cast<std::size_t>(i) * plane : nullptr;
        const std::size_t kofs = (static_cast<std::size_t>(o) * cin + i) * 9;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const double kv = w[kofs + static_cast<std::size_t>(ky * 3 + kx)];
            double acc = 0.0;
            for (int y = 0; y < h; ++y) {
              const int sy = y + ky - 1;
              if (sy < 0 || sy >= h) continue;
              const int x_lo = std::max(0, 1 - kx), x_hi = std::min(wd, wd + 1 - kx);
              const double* srow = src + static_cast<std::size_t>(sy) * wd + (kx - 1);
              const double* grow = g + static_cast<std::size_t>(y) * wd;
              for (int x = x_lo; x < x_hi; ++x) acc += grow[x] * srow[x];
              if (dsrc) {
                double* drow = dsrc + static_cast<std::size_t>(sy) * wd + (kx - 1);
                for (int x = x_lo; x < x_hi; ++x) drow[x] += kv * grow[x];
              }
            }
            dw[kofs + static_cast<std::size_t>(ky * 3 + kx)] += acc;
          }
      }
    }
  }

  struct ConvOffsets {
    std::size_t w1, b1, w2, b2, wd, bd;
  };

  ConvOffsets conv_offsets() const {
    const auto c = static_cast<std::size_t>(arch_.channels);
    const auto f1 = static_cast<std::size_t>(arch_.widths[0]), f2 = static_cast<std::size_t>(arch_.widths[1]);
    const auto k = static_cast<std::size_t>(arch_.classes);
    ConvOffsets o{};
    o.w1 = 0;
    o.b1 = o.w1 + f1 * c * 9;
    o.w2 = o.b1 + f1;
    o.b2 = o.w2 + f2 * f1 * 9;
    o.wd = o.b2 + f2;
    o.bd = o.wd + k * f2;
    return o;
  }

  void forward_conv(Workspace& ws) const {
    const int c = arch_.channels, h = arch_.height, w = arch_.width;
    const int f1 = arch_.widths[0], f2 = arch_.widths[1];
    const int h2 = h / 2, w2 = w / 2;
    const auto off = conv_offsets();
    const double* p = weights_.data();
    const std::size_t plane = static_cast<std::size_t>(h) * w, plane2 = static_cast<std::size_t>(h2) * w2;

    ws.z1.resize(plane * static_cast<std::size_t>(f1));
    conv3x3_forward(p + off.w1, p + off.b1, ws.input.data(), c, h, w, f1, ws.z1.data());
    ws.a1.resize(ws.z1.size());
    for (std::size_t i = 0; i < ws.z1.size(); ++i) ws.a1[i] = std::max(ws.z1[i], 0.0);

    ws.pooled.resize(plane2 * static_cast<std::size_t>(f1));
    ws.pool_arg.resize(ws.pooled.size());
    for (int ch = 0; ch < f1; ++ch)
      for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x) {
          std::size_t best = static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(2 * y) * w + 2 * x;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(2 * y + dy) * w + (2 * x + dx);
              if (ws.a1[idx] > ws.a1[best]) best = idx;
            }
          const std::size_t o = static_cast<std::size_t>(ch) * plane2 + static_cast<std::size_t>(y) * w2 + x;
          ws.pooled[o] = ws.a1[best];
          ws.pool_arg[o] = best;
        }

    ws.z2.resize(plane2 * static_cast<std::size_t>(f2));
    conv3x3_forward(p + off.w2, p + off.b2, ws.pooled.data(), f1, h2, w2, f2, ws.z2.data());
    ws.a2.resize(ws.z2.size());
    for (std::size_t i = 0; i < ws.z2.size(); ++i) ws.a2[i] = std::max(ws.z2[i], 0.0);

    ws.features.assign(static_cast<std::size_t>(f2), 0.0);
    for (int ch = 0; ch < f2; ++ch) {
      const double* a = ws.a2.data() + static_cast<std::size_t>(ch) * plane2;
      ws.features[static_cast<std::size_t>(ch)] = std::accumulate(a, a + plane2, 0.0) / static_cast<double>(plane2);
    }
    ws.logits.resize(static_cast<std::size_t>(arch_.classes));
    dense_forward(p + off.wd, p + off.bd, ws.features, ws.logits);
  }

  void backward_conv(Workspace& ws, std::span<double> grad) const {
    const int c = arch_.channels, h = arch_.height, w = arch_.width;
    const int f1 = arch_.widths[0], f2 = arch_.widths[1];
    const int h2 = h / 2, w2 = w / 2;
    const auto off = conv_offsets();
    const double* p = weights_.data();
    double* g = grad.data();
    const std::size_t plane2 = static_cast<std::size_t>(h2) * w2;

    ws.d_features.resize(static_cast<std::size_t>(f2));
    dense_backward(p + off.wd, ws.features, ws.d_logits, g + off.wd, g + off.bd, ws.d_features);

    ws.d_a2.resize(ws.a2.size());
    for (int ch = 0; ch < f2; ++ch) {
      const double gch = ws.d_features[static_cast<std::size_t>(ch)] / static_cast<double>(plane2);
      for (std::size_t i = 0; i < plane2; ++i) {
        const std::size_t idx = static_cast<std::size_t>(ch) * plane2 + i;
        ws.d_a2[idx] = ws.z2[idx] > 0.0 ? gch : 0.0;
      }
    }
    ws.d_pooled.resize(ws.pooled.size());
    conv3x3_backward(p + off.w2, ws.pooled.data(), ws.d_a2.data(), f1, h2, w2, f2, g + off.w2, g + off.b2,
                     ws.d_pooled.data());

    ws.d_a1.assign(ws.a1.size(), 0.0);
    for (std::size_t i = 0; i < ws.pooled.size(); ++i) ws.d_a1[ws.pool_arg[i]] += ws.d_pooled[i];
    for (std::size_t i = 0; i < ws.d_a1.size(); ++i)
      if (ws.z1[i] <= 0.0) ws.d_a1[i] = 0.0;
    conv3x3_backward(p + off.w1, ws.input.data(), ws.d_a1.data(), c, h, w, f1, g + off.w1, g + off.b1, nullptr);
  }

  Architecture arch_;
  std::vector<double> weights_;
};

/// Mean of per-example gradients. Per-example gradients land in their own
/// slots and are summed in index order, so the result is independent of the
/// thread count.
inline GradVec batch_grad(const Network& net, std::span<const Image> imgs, std::span<const int> labels,
                          const Parallel& par = serial()) {
  if (imgs.empty()) throw InvalidArgument("batch_grad: empty batch");
  if (imgs.size() != labels.size()) throw InvalidArgument("batch_grad: images/labels length mismatch");
  const std::size_t n = imgs.size(), d = net.size();
  GradVec sum(d, 0.0);
  if (par.threads() <= 1) {
    Workspace ws;
    GradVec g(d);
    for (std::size_t i = 0; i < n; ++i) {
      net.loss_and_grad(imgs[i], labels[i], g, ws);
      for (std::size_t j = 0; j < d; ++j) sum[j] += g[j];
    }
  } else {
    std::vector<GradVec> per(n, GradVec(d));
    par.for_each(n, [&](std::size_t i) {
      Workspace ws;
      net.loss_and_grad(imgs[i], labels[i], per[i], ws);
    });
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) sum[j] += per[i][j];
  }
  const double inv = 1.0 / static_cast<double>(n);
  if (n > 1)
    for (auto& v : sum) v *= inv;
  return sum;
}

// ---------------------------------------------------------------------------
// Pretraining

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double stop_loss = 0.0;  // end early once the full-set loss is at or below this; 0 disables
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0 || batch_size < 1 || !(lr > 0.0) || momentum < 0.0 || momentum >= 1.0 || weight_decay < 0.0 ||
        !(stop_loss >= 0.0))
      throw InvalidConfig("invalid training config");
  }
};

struct TrainResult {
  std::vector<double> epoch_loss;  // [0] is the loss before any update
  double accuracy = 0.0;
};

struct LabeledView {
  std::span<const Image> images;
  std::span<const int> labels;
};

inline double mean_loss(const Network& net, LabeledView data) {
  double s = 0.0;
  for (std::size_t i = 0; i < data.images.size(); ++i) s += net.loss(data.images[i], data.labels[i]);
  return s / static_cast<double>(data.images.size());
}

inline double accuracy(const Network& net, LabeledView data) {
  if (data.images.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.images.size(); ++i) hit += net.predict(data.images[i]) == data.labels[i];
  return static_cast<double>(hit) / static_cast<double>(data.images.size());
}

/// Mini-batch SGD with momentum. Throws TrainingFailure if the loss becomes
/// non-finite.
inline TrainResult pretrain(Network& net, LabeledView data, const TrainConfig& cfg, const Parallel& par = serial()) {
  cfg.validate();
  if (data.images.empty()) throw InvalidArgument("pretrain: empty dataset");
  if (data.images.size() != data.labels.size()) throw InvalidArgument("pretrain: images/labels length mismatch");
  TrainResult result;
  result.epoch_loss.push_back(mean_loss(net, data));
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.images.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> velocity(net.size(), 0.0);
  std::vector<Image> batch_imgs;
  std::vector<int> batch_labels;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch_imgs.clear();
      batch_labels.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_imgs.push_back(data.images[order[i]]);
        batch_labels.push_back(data.labels[order[i]]);
      }
      const GradVec g = batch_grad(net, batch_imgs, batch_labels, par);
      auto w = net.weights();
      for (std::size_t j = 0; j < w.size(); ++j) {
        velocity[j] = cfg.momentum * velocity[j] + g[j] + cfg.weight_decay * w[j];
        w[j] -= cfg.lr * velocity[j];
      }
    }
    const double loss = mean_loss(net, data);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "pretraining diverged at epoch " << epoch << " (loss " << loss << ", lr " << cfg.lr << ", previous loss "
          << result.epoch_loss.back() << ")";
      throw TrainingFailure(msg.str());
    }
    result.epoch_loss.push_back(loss);
    if (loss <= cfg.stop_loss) break;
  }
  result.accuracy = accuracy(net, data);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: "AUGSNET1" magic, u32 version, u32 descriptor length,
// descriptor (UTF-8), u64 D, D float64 weights. All integers little-endian.

inline constexpr char kCheckpointMagic[8] = {'A', 'U', 'G', 'S', 'N', 'E', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> encode_checkpoint(const Network& net) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  io::put_u32(out, kCheckpointVersion);
  const std::string desc = net.arch().describe();
  io::put_u32(out, static_cast<std::uint32_t>(desc.size()));
  out.insert(out.end(), desc.begin(), desc.end());
  io::put_u64(out, net.size());
  for (double v : net.weights()) io::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline Network decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || !std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), bytes.begin(),
                                       [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }))
    throw FormatError("not a network checkpoint (bad magic)");
  const auto version = static_cast<std::uint32_t>(io::get_le(bytes.data() + 8, 4));
  if (version != kCheckpointVersion) throw LoadError("unsupported checkpoint version " + std::to_string(version));
  const auto desc_len = static_cast<std::size_t>(io::get_le(bytes.data() + 12, 4));
  if (bytes.size() < 16 + desc_len + 8) throw FormatError("truncated checkpoint header");
  const std::string desc(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(desc_len));
  Network net(Architecture::parse(desc));
  const std::size_t pos = 16 + desc_len;
  const auto d = io::get_le(bytes.data() + pos, 8);
  if (d != net.size())
    throw LoadError("checkpoint holds " + std::to_string(d) + " weights but '" + desc + "' needs " +
                    std::to_string(net.size()));
  if (bytes.size() != pos + 8 + d * 8) throw FormatError("checkpoint payload size mismatch");
  auto w = net.weights();
  for (std::size_t i = 0; i < d; ++i) w[i] = std::bit_cast<double>(io::get_le(bytes.data() + pos + 8 + i * 8, 8));
  return net;
}

inline void save_checkpoint(const Network& net, const std::filesystem::path& path) {
  io::write_atomic(path, encode_checkpoint(net));
}

inline Network load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_checkpoint(bytes);
}

}  // namespace augsearch
