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

// Oracle suites run by `augsearch selfcheck` and the acceptance binary.
// Each suite compares an implementation against an independent reference
// (finite differences, exhaustive enumeration, algebraic identities).

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "augsearch/data.hpp"
#include "augsearch/imgops.hpp"
#include "augsearch/matcher.hpp"
#include "augsearch/nnet.hpp"
#include "augsearch/policy.hpp"
#include "augsearch/rng.hpp"
#include "augsearch/search.hpp"

namespace augsearch {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double metric = 0.0;     // the quantity compared against `tolerance`
  double tolerance = 0.0;
  double seconds = 0.0;
  std::string detail;
};

/// Gradient of cos(v, G softmax(logits)) with respect to the logits.
using CosineGradFn =
    std::function<std::vector<double>(const Jacobian&, const PolicyLayer&, std::span<const double>)>;
/// Weight gradient of the loss for one labelled image.
using LossGradFn = std::function<GradVec(const Network&, const Image&, int)>;

struct PolicyGradCheck {
  int instances = 20;
  std::size_t dim = 500;
  std::size_t transforms = 10;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 1;
  CosineGradFn grad = cosine_logit_grad;
};

struct BackpropCheck {
  int instances = 10;
  int coordinates = 100;
  double eps = 1e-4;
  double tolerance = 1e-3;
  std::uint64_t seed = 2;
  LossGradFn grad = [](const Network& net, const Image& img, int label) { return net.loss_and_grad(img, label).grad; };
};

struct ZeroRewardCheck {
  int instances = 100;
  std::size_t dim = 300;
  std::size_t transforms = 40;
  double tolerance = 1e-9;
  std::uint64_t seed = 3;
};

struct EnumerationCheck {
  std::vector<std::size_t> chain_counts = {100, 1000, 10000};
  int repeats = 40;
  double tolerance = 0.02;     // relative Frobenius error at the largest count
  double slope = -0.5;
  double slope_tolerance = 0.15;
  std::uint64_t seed = 4;
};

namespace detail {

inline double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Jacobian random_jacobian(std::size_t dim, std::size_t cols, Rng& rng) {
  Jacobian jac(dim, cols);
  for (auto& x : jac.data) x = normal(rng, 0.0, 1.0);
  return jac;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng, 0.0, 1.0);
  return v;
}

inline Image random_image(int c, int h, int w, Rng& rng) {
  Image img(h, w, c);
  for (auto& x : img.data) x = static_cast<float>(uniform01(rng));
  return img;
}

template <class Fn>
SuiteResult timed(std::string name, Fn&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult r = body();
  r.name = std::move(name);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace detail

/// Analytic logit gradient of the cosine objective against central
/// differences, max relative error over all coordinates and instances.
inline SuiteResult check_policy_gradient(const PolicyGradCheck& cfg = {}) {
  return detail::timed("policy-gradient", [&] {
    Rng rng(cfg.seed);
    double worst = 0.0;
    for (int inst = 0; inst < cfg.instances; ++inst) {
      const Jacobian jac = detail::random_jacobian(cfg.dim, cfg.transforms, rng);
      const auto v = detail::random_vector(cfg.dim, rng);
      PolicyLayer layer{detail::random_vector(cfg.transforms, rng), false};
      const auto analytic = cfg.grad(jac, layer, v);
      if (analytic.size() != cfg.transforms) return SuiteResult{{}, false, INFINITY, cfg.tolerance, 0, "wrong length"};
      for (std::size_t i = 0; i < cfg.transforms; ++i) {
        PolicyLayer hi = layer, lo = layer;
        hi.logits[i] += cfg.eps;
        lo.logits[i] -= cfg.eps;
        const double fd = (cosine_objective(jac, hi, v) - cosine_objective(jac, lo, v)) / (2.0 * cfg.eps);
        worst = std::max(worst, detail::rel_err(analytic[i], fd, 1e-7));
      }
    }
    SuiteResult r;
    r.metric = worst;
    r.tolerance = cfg.tolerance;
    r.passed = worst < cfg.tolerance;
    r.detail = std::to_string(cfg.instances) + " instances, D=" + std::to_string(cfg.dim) +
               ", |T|=" + std::to_string(cfg.transforms);
    return r;
  });
}

/// Network weight gradients against central differences on random
/// coordinates, alternating conv and dense architectures.
inline SuiteResult check_backprop(const BackpropCheck& cfg = {}) {
  return detail::timed("backprop", [&] {
    Rng rng(cfg.seed);
    double worst = 0.0;
    for (int inst = 0; inst < cfg.instances; ++inst) {
      const Architecture arch = inst % 2 == 0 ? Architecture::conv(3, 8, 8, 5, 4, 6)
                                              : Architecture::mlp(1, 6, 6, 4, {12, 8});
      Network net = Network::random(arch, split_seed(rng));
      for (auto& w : net.weights()) w += normal(rng, 0.0, 0.05);
      const Image img = detail::random_image(arch.channels, arch.height, arch.width, rng);
      const int label = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(arch.classes)));
      const GradVec analytic = cfg.grad(net, img, label);
      if (analytic.size() != net.size()) return SuiteResult{{}, false, INFINITY, cfg.tolerance, 0, "wrong length"};
      for (int c = 0; c < cfg.coordinates; ++c) {
        const std::size_t j = uniform_index(rng, net.size());
        const double w0 = net.weights()[j];
        net.weights()[j] = w0 + cfg.eps;
        const double up = net.loss(img, label);
        net.weights()[j] = w0 - cfg.eps;
        const double down = net.loss(img, label);
        net.weights()[j] = w0;
        worst = std::max(worst, detail::rel_err(analytic[j], (up - down) / (2.0 * cfg.eps), 1e-6));
      }
    }
    SuiteResult r;
    r.metric = worst;
    r.tolerance = cfg.tolerance;
    r.passed = worst < cfg.tolerance;
    r.detail = std::to_string(cfg.instances) + " networks x " + std::to_string(cfg.coordinates) + " coordinates";
    return r;
  });
}

/// p.r = 0 for the shared-sample reward, relative to |p| |r|.
inline SuiteResult check_zero_expected_reward(const ZeroRewardCheck& cfg = {}) {
  return detail::timed("zero-expected-reward", [&] {
    Rng rng(cfg.seed);
    double worst = 0.0;
    for (int inst = 0; inst < cfg.instances; ++inst) {
      const Jacobian jac = detail::random_jacobian(cfg.dim, cfg.transforms, rng);
      const auto v = detail::random_vector(cfg.dim, rng);
      const auto p = softmax(detail::random_vector(cfg.transforms, rng));
      const auto r = reward(jac, p, v);
      const double scale = norm(p) * norm(r);
      if (scale > 0.0) worst = std::max(worst, std::abs(dot(p, r)) / scale);
    }
    SuiteResult r;
    r.metric = worst;
    r.tolerance = cfg.tolerance;
    r.passed = worst <= cfg.tolerance;
    r.detail = std::to_string(cfg.instances) + " random (G, p, v)";
    return r;
  });
}

struct EnumerationCurve {
  std::vector<std::size_t> chains;
  std::vector<double> rel_error;  // RMS over repeats
  double slope = 0.0;             // least squares in log-log
};

/// Second-layer Monte Carlo Jacobian against exact enumeration over the
/// first layer, on a 3-entry deterministic table with a uniform first layer.
inline EnumerationCurve enumeration_curve(const EnumerationCheck& cfg) {
  OpConfig oc;
  oc.ops = {{OpKind::identity, {}}, {OpKind::invert, {}}, {OpKind::equalize, {}}};
  PolicyStack stack;
  stack.table = build_transform_table(oc);
  stack.layers = {PolicyLayer::uniform(stack.table.size())};

  Rng rng(cfg.seed);
  const Network net = Network::random(Architecture::mlp(1, 8, 8, 3, {10}), split_seed(rng));
  Image x = detail::random_image(1, 8, 8, rng);
  const int label = 1;

  const auto p1 = layer_probs(stack.layers[0]);
  Jacobian exact(net.size(), stack.table.size());
  for (std::size_t t1 = 0; t1 < stack.table.size(); ++t1) {
    const Image base = apply_transform(x, stack.table, t1, rng);
    detail::accumulate_columns(net, base, label, stack.table, rng, p1[t1], exact, serial());
  }
  const double exact_norm = exact.frobenius();

  EnumerationCurve curve;
  for (std::size_t n : cfg.chain_counts) {
    double sq = 0.0;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      const Jacobian mc = jacobian_mc(net, x, label, stack, 2, n, rng);
      double diff = 0.0;
      for (std::size_t i = 0; i < mc.data.size(); ++i) diff += (mc.data[i] - exact.data[i]) * (mc.data[i] - exact.data[i]);
      sq += diff / (exact_norm * exact_norm);
    }
    curve.chains.push_back(n);
    curve.rel_error.push_back(std::sqrt(sq / cfg.repeats));
  }
  const std::size_t m = curve.chains.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const double lx = std::log(static_cast<double>(curve.chains[i])), ly = std::log(curve.rel_error[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  curve.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return curve;
}

inline SuiteResult check_enumeration(const EnumerationCheck& cfg = {}) {
  return detail::timed("mc-vs-enumeration", [&] {
    const auto curve = enumeration_curve(cfg);
    SuiteResult r;
    r.metric = curve.rel_error.back();
    r.tolerance = cfg.tolerance;
    const bool slope_ok = std::abs(curve.slope - cfg.slope) <= cfg.slope_tolerance;
    r.passed = r.metric < cfg.tolerance && slope_ok;
    r.detail = "slope " + std::to_string(curve.slope) + " (want " + std::to_string(cfg.slope) + " +- " +
               std::to_string(cfg.slope_tolerance) + ")";
    for (std::size_t i = 0; i < curve.chains.size(); ++i)
      r.detail += ", n=" + std::to_string(curve.chains[i]) + ": " + std::to_string(curve.rel_error[i]);
    return r;
  });
}

/// Identity transform and all-identity policies leave images and gradient
/// similarity exactly unchanged.
inline SuiteResult check_identity(std::uint64_t seed = 5) {
  return detail::timed("identity", [&] {
    Rng rng(seed);
    const auto table = build_transform_table(standard_op_config());
    std::size_t mismatches = 0;
    for (int i = 0; i < 16; ++i) {
      const Image img = detail::random_image(i % 2 ? 3 : 1, 12, 10, rng);
      if (!(apply_transform(img, table, table.identity_index, rng) == img)) ++mismatches;
    }
    PolicyStack stack{table, {}, {}};
    for (int k = 0; k < 2; ++k) {
      PolicyLayer layer{std::vector<double>(table.size(), -1e4), false};
      layer.logits[table.identity_index] = 0.0;
      stack.layers.push_back(layer);
    }
    SynthConfig conf;
    conf.size = 12;
    conf.train_per_class = 8;
    conf.val_per_class = 8;
    conf.seed = seed;
    const auto [train, val] = make_synthetic(conf);
    const Network net = Network::random(Architecture::mlp(1, 12, 12, conf.classes, {8}), seed);
    for (int i = 0; i < 4; ++i)
      if (!(apply_policy(stack, train.images[static_cast<std::size_t>(i)], rng) == train.images[static_cast<std::size_t>(i)]))
        ++mismatches;
    ImprovementOptions opts;
    opts.n_images = 8;
    opts.n_augment = 4;
    opts.val_batch = 8;
    double worst = 0.0;
    for (const auto& s : similarity_improvement_stats(net, stack, train, val, opts, rng))
      worst = std::max({worst, std::abs(s.mean), s.stddev});
    SuiteResult r;
    r.metric = worst;
    r.tolerance = 0.0;
    r.passed = mismatches == 0 && worst == 0.0;
    r.detail = std::to_string(mismatches) + " image mismatches";
    return r;
  });
}

struct SelfcheckOptions {
  PolicyGradCheck policy_grad;
  BackpropCheck backprop;
  ZeroRewardCheck zero_reward;
  EnumerationCheck enumeration;
};

inline std::vector<SuiteResult> run_selfcheck(const SelfcheckOptions& opts = {}) {
  return {check_policy_gradient(opts.policy_grad), check_backprop(opts.backprop),
          check_zero_expected_reward(opts.zero_reward), check_enumeration(opts.enumeration), check_identity()};
}

}  // namespace augsearch
