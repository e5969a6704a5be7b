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
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "augsearch/data.hpp"
#include "augsearch/errors.hpp"
#include "augsearch/imgops.hpp"
#include "augsearch/io.hpp"
#include "augsearch/matcher.hpp"
#include "augsearch/nnet.hpp"
#include "augsearch/parallel.hpp"
#include "augsearch/policy.hpp"
#include "augsearch/rng.hpp"

namespace augsearch {

struct SearchConfig {
  int iterations_per_layer = 512;
  double lr = 0.025;
  double reg_c = 1.0;
  int expectation_images = 16;
  int n_chains = 16;
  int val_batch = 64;
  int max_layers = 8;
  double identity_threshold = 0.5;
  std::uint64_t seed = 0;
  bool class_conditioned_val = false;
  bool independent_g = false;  // separately sampled average gradient instead of G p
  bool uniform_policy = false;  // baseline: every layer stays uniform, no search

  void validate() const {
    if (iterations_per_layer < 0) throw InvalidConfig("iterations_per_layer must be >= 0");
    if (expectation_images < 1 || n_chains < 1 || val_batch < 1 || max_layers < 1)
      throw InvalidConfig("search counts must be >= 1");
    if (!(lr > 0.0)) throw InvalidConfig("lr must be positive");
    if (!(reg_c >= 0.0)) throw InvalidConfig("c must be non-negative");
    if (!(identity_threshold > 0.0 && identity_threshold <= 1.0))
      throw InvalidConfig("identity threshold must lie in (0, 1]");
  }

  nlohmann::ordered_json to_json() const {
    return {{"iters", iterations_per_layer}, {"lr", lr},
            {"c", reg_c},                    {"expectation_images", expectation_images},
            {"n_chains", n_chains},          {"val_batch", val_batch},
            {"layers", max_layers},          {"identity_threshold", identity_threshold},
            {"seed", seed},                  {"class_conditioned_val", class_conditioned_val},
            {"independent_g", independent_g}, {"uniform_policy", uniform_policy}};
  }

  /// Overrides fields present in `j`; keys mirror `to_json`.
  void merge_json(const nlohmann::json& j) {
    try {
      iterations_per_layer = j.value("iters", iterations_per_layer);
      lr = j.value("lr", lr);
      reg_c = j.value("c", reg_c);
      expectation_images = j.value("expectation_images", expectation_images);
      n_chains = j.value("n_chains", n_chains);
      val_batch = j.value("val_batch", val_batch);
      max_layers = j.value("layers", max_layers);
      identity_threshold = j.value("identity_threshold", identity_threshold);
      seed = j.value("seed", seed);
      class_conditioned_val = j.value("class_conditioned_val", class_conditioned_val);
      independent_g = j.value("independent_g", independent_g);
      uniform_policy = j.value("uniform_policy", uniform_policy);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidConfig(std::string("search config: ") + e.what());
    }
  }

  std::string digest() const { return io::hex64(io::fnv1a64(to_json().dump())); }
};

struct TraceRecord {
  int iteration = 0;  // 0-based within the layer
  int layer = 0;      // 1-based
  double cosine = 0.0;      // mean over expectation images of cos(v, g)
  double grad_norm = 0.0;   // mean |g|
  double entropy = 0.0;     // of the layer distribution after the step
  std::array<std::pair<std::size_t, double>, 3> top{};
  double elapsed_ms = 0.0;  // since the layer started
};

struct LayerSummary {
  int layer = 0;
  std::vector<double> probs;
  bool terminal = false;
};

struct SearchTrace {
  std::vector<TraceRecord> records;
  std::vector<LayerSummary> layers;
};

using ProgressFn = std::function<void(const TraceRecord&)>;

inline std::array<std::pair<std::size_t, double>, 3> top3(std::span<const double> p) {
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t k = std::min<std::size_t>(3, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
  std::array<std::pair<std::size_t, double>, 3> out{};
  for (std::size_t i = 0; i < k; ++i) out[i] = {idx[i], p[idx[i]]};
  return out;
}

inline bool identity_converged(const PolicyLayer& layer, const TransformTable& table, double threshold) {
  return layer_probs(layer).at(table.identity_index) >= threshold;
}

namespace detail {

/// Unit-norm gradient of a fresh validation batch.
inline GradVec unit_val_gradient(const Network& net, const Dataset& val, std::size_t batch, Rng& rng,
                                 std::optional<int> only_class, const Parallel& par) {
  const auto b = sample_val_batch(val, std::min(batch, val.size()), rng, only_class);
  GradVec v = batch_grad(net, b.images, b.labels, par);
  const double n = norm(v);
  if (n == 0.0) throw DegenerateGradient("validation gradient is zero");
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace detail

struct LayerSearchResult {
  PolicyLayer layer;
  std::vector<TraceRecord> records;
};

/// Optimises layer k = prior.depth() + 1 with the prior layers frozen.
inline LayerSearchResult search_layer(const Network& net, const PolicyStack& prior, const Dataset& train,
                                      const Dataset& val, const SearchConfig& cfg, Rng& rng,
                                      const Parallel& par = serial(), const ProgressFn& progress = {}) {
  cfg.validate();
  if (train.empty() || val.empty()) throw InvalidArgument("search_layer: train and val splits must be non-empty");
  const std::size_t k = prior.depth() + 1;
  const std::size_t n_transforms = prior.table.size();
  LayerSearchResult out{PolicyLayer::uniform(n_transforms), {}};
  if (cfg.uniform_policy) return out;

  PolicyStack working = prior;
  working.layers.push_back(out.layer);
  AdamState adam = AdamState::for_size(n_transforms, cfg.lr);
  const std::size_t n_images = std::min<std::size_t>(static_cast<std::size_t>(cfg.expectation_images), train.size());
  const auto t0 = std::chrono::steady_clock::now();

  for (int it = 0; it < cfg.iterations_per_layer; ++it) {
    try {
      const auto p = layer_probs(out.layer);
      working.layers.back().logits = out.layer.logits;
      const auto picks = sample_indices(train.size(), n_images, rng);

      std::vector<GradVec> v_per_image;
      GradVec v_shared;
      if (cfg.class_conditioned_val) {
        for (std::size_t i : picks)
          v_per_image.push_back(detail::unit_val_gradient(net, val, static_cast<std::size_t>(cfg.val_batch), rng,
                                                          train.labels[i], par));
      } else {
        v_shared = detail::unit_val_gradient(net, val, static_cast<std::size_t>(cfg.val_batch), rng, {}, par);
      }
      std::vector<std::uint64_t> seeds(n_images);
      for (auto& s : seeds) s = split_seed(rng);

      std::vector<RewardResult> results(n_images);
      par.for_each(n_images, [&](std::size_t i) {
        Rng img_rng(seeds[i]);
        const Image& x = train.images[picks[i]];
        const int y = train.labels[picks[i]];
        const Jacobian jac = jacobian_mc(net, x, y, working, k, static_cast<std::size_t>(cfg.n_chains), img_rng);
        const GradVec g = cfg.independent_g
                              ? independent_avg_gradient(net, x, y, working, k,
                                                         static_cast<std::size_t>(cfg.n_chains), img_rng)
                              : avg_gradient(jac, p);
        results[i] = reward_with_g(jac, g, cfg.class_conditioned_val ? v_per_image[i] : v_shared);
      });

      std::vector<RewardVec> rewards;
      rewards.reserve(n_images);
      TraceRecord rec;
      for (auto& r : results) {
        rec.cosine += r.cosine;
        rec.grad_norm += r.g_norm;
        rewards.push_back(std::move(r.reward));
      }
      const auto stats = regularized_reward(rewards, cfg.reg_c);
      const auto grad = policy_grad(out.layer, stats.regularized);
      adam_step(adam, out.layer, grad);

      const auto p_after = layer_probs(out.layer);
      rec.iteration = it;
      rec.layer = static_cast<int>(k);
      rec.cosine /= static_cast<double>(n_images);
      rec.grad_norm /= static_cast<double>(n_images);
      rec.entropy = entropy(p_after);
      rec.top = top3(p_after);
      rec.elapsed_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      out.records.push_back(rec);
      if (progress) progress(rec);
    } catch (const DegenerateGradient& e) {
      throw DegenerateGradient("layer " + std::to_string(k) + ", iteration " + std::to_string(it) + ": " + e.what());
    } catch (const InvalidState& e) {
      throw InvalidState("layer " + std::to_string(k) + ", iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  return out;
}

struct SearchOutcome {
  PolicyStack stack;
  SearchTrace trace;
  std::exception_ptr failure;  // set when a layer failed; stack/trace hold what finished

  bool ok() const noexcept { return !failure; }
};

/// Adds layers one at a time until the newest layer is identity-dominated or
/// `max_layers` is reached. The identity-dominated layer is kept, flagged
/// terminal.
inline SearchOutcome progressive_search(const Network& net, const TransformTable& table, const Dataset& train,
                                        const Dataset& val, const SearchConfig& cfg, const Parallel& par = serial(),
                                        const ProgressFn& progress = {}) {
  cfg.validate();
  SearchOutcome out;
  out.stack.table = table;
  out.stack.metadata = {{"config_digest", cfg.digest()},
                        {"seed", std::to_string(cfg.seed)},
                        {"network", net.arch().describe()},
                        {"mode", cfg.uniform_policy ? "uniform" : "searched"}};
  Rng rng(cfg.seed);
  for (int k = 1; k <= cfg.max_layers; ++k) {
    LayerSearchResult res;
    try {
      res = search_layer(net, out.stack, train, val, cfg, rng, par, progress);
    } catch (...) {
      out.failure = std::current_exception();
      return out;
    }
    out.trace.records.insert(out.trace.records.end(), res.records.begin(), res.records.end());
    const bool converged = identity_converged(res.layer, table, cfg.identity_threshold);
    res.layer.terminal = converged;
    out.trace.layers.push_back({k, layer_probs(res.layer), converged});
    out.stack.layers.push_back(std::move(res.layer));
    if (converged) break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient-similarity improvement

struct ImprovementStats {
  std::size_t depth = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population form
};

struct ImprovementOptions {
  std::size_t n_images = 256;
  std::size_t n_augment = 64;  // augmented copies per image at each depth
  std::size_t val_batch = 64;
  bool class_conditioned_val = false;
  bool skip_terminal = false;  // leave terminal layers out of the prefixes
};

/// For every prefix depth d = 0..K: improvement(x) = cos(v, g_d(x)) -
/// cos(v, grad L(x)), where g_d averages gradients over augmented copies of x
/// drawn through the first d layers. Mean and std over sampled images.
inline std::vector<ImprovementStats> similarity_improvement_stats(const Network& net, const PolicyStack& stack,
                                                                  const Dataset& train, const Dataset& val,
                                                                  const ImprovementOptions& opts, Rng& rng,
                                                                  const Parallel& par = serial()) {
  if (stack.layers.empty()) throw InvalidArgument("similarity_improvement_stats: empty policy stack");
  if (opts.n_images == 0 || opts.n_augment == 0) throw InvalidArgument("similarity_improvement_stats: zero counts");
  PolicyStack used = stack;
  if (opts.skip_terminal)
    std::erase_if(used.layers, [](const PolicyLayer& l) { return l.terminal; });
  const std::size_t depth = used.layers.size();

  std::vector<std::size_t> picks;
  if (opts.n_images <= train.size()) {
    picks = sample_indices(train.size(), opts.n_images, rng);
  } else {
    for (std::size_t i = 0; i < opts.n_images; ++i) picks.push_back(uniform_index(rng, train.size()));
  }
  std::vector<std::uint64_t> seeds(opts.n_images);
  for (auto& s : seeds) s = split_seed(rng);

  std::vector<std::vector<double>> improvement(opts.n_images, std::vector<double>(depth + 1, 0.0));
  par.for_each(opts.n_images, [&](std::size_t i) {
    Rng img_rng(seeds[i]);
    const Image& x = train.images[picks[i]];
    const int y = train.labels[picks[i]];
    const std::optional<int> cls = opts.class_conditioned_val ? std::optional<int>(y) : std::nullopt;
    const GradVec v = detail::unit_val_gradient(net, val, opts.val_batch, img_rng, cls, serial());
    const GradVec base = net.loss_and_grad(x, y).grad;
    const double cos0 = cosine_similarity(v, base);
    for (std::size_t d = 1; d <= depth; ++d) {
      const GradVec g = independent_avg_gradient(net, x, y, used, d, opts.n_augment, img_rng);
      improvement[i][d] = cosine_similarity(v, g) - cos0;
    }
  });

  std::vector<ImprovementStats> out;
  for (std::size_t d = 0; d <= depth; ++d) {
    ImprovementStats s{d, 0.0, 0.0};
    if (d > 0) {
      for (const auto& row : improvement) s.mean += row[d];
      s.mean /= static_cast<double>(opts.n_images);
      for (const auto& row : improvement) s.stddev += (row[d] - s.mean) * (row[d] - s.mean);
      s.stddev = std::sqrt(s.stddev / static_cast<double>(opts.n_images));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace augsearch
