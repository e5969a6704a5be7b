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

// Gradient-matching objective and its policy gradient.
//
// For one search image x, the Jacobian G has one column per transform t_n:
// the weight-gradient of the loss on t_n(x) (or on t_n applied after a
// sampled chain of earlier layers, averaged over chains). With the layer's
// distribution p, the augmented gradient is g = G p and the objective is
// cos(v, g). Its derivative with respect to p is the reward
//
//   r = G^T ( v / |g| - (v.g / |g|^2) * g / |g| ),
//
// and with softmax logits the ascent direction is p_i * (r_i - p.r).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "augsearch/errors.hpp"
#include "augsearch/image.hpp"
#include "augsearch/imgops.hpp"
#include "augsearch/nnet.hpp"
#include "augsearch/parallel.hpp"
#include "augsearch/policy.hpp"
#include "augsearch/rng.hpp"

namespace augsearch {

using RewardVec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double cosine_similarity(std::span<const double> v, std::span<const double> g) {
  if (v.size() != g.size()) throw InvalidArgument("cosine_similarity: length mismatch");
  const double nv = norm(v), ng = norm(g);
  if (nv == 0.0 || ng == 0.0) throw DegenerateGradient("cosine_similarity: zero-norm gradient");
  return std::clamp(dot(v, g) / (nv * ng), -1.0, 1.0);
}

/// D x |T| matrix, column-major.
struct Jacobian {
  std::size_t dim = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Jacobian() = default;
  Jacobian(std::size_t d, std::size_t n) : dim(d), cols(n), data(d * n, 0.0) {}

  std::span<double> column(std::size_t n) { return {data.data() + n * dim, dim}; }
  std::span<const double> column(std::size_t n) const { return {data.data() + n * dim, dim}; }

  double frobenius() const { return norm(data); }
};

namespace detail {

/// Adds weight * grad L(t_n(base)) into column n for every n. Transforms are
/// applied in column order on the caller's rng before any gradient work, so
/// rng consumption does not depend on the thread count.
inline void accumulate_columns(const Network& net, const Image& base, int label, const TransformTable& table,
                               Rng& rng, double weight, Jacobian& jac, const Parallel& par) {
  const std::size_t n = table.size();
  if (par.threads() <= 1) {
    Workspace ws;
    GradVec g(net.size());
    for (std::size_t col = 0; col < n; ++col) {
      const Image img = apply_transform(base, table, col, rng);
      net.loss_and_grad(img, label, g, ws);
      auto dst = jac.column(col);
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += weight * g[j];
    }
    return;
  }
  std::vector<Image> imgs;
  imgs.reserve(n);
  for (std::size_t col = 0; col < n; ++col) imgs.push_back(apply_transform(base, table, col, rng));
  par.for_each(n, [&](std::size_t col) {
    Workspace ws;
    GradVec g(net.size());
    net.loss_and_grad(imgs[col], label, g, ws);
    auto dst = jac.column(col);
    for (std::size_t j = 0; j < g.size(); ++j) dst[j] += weight * g[j];
  });
}

/// Groups sampled chains: identical deterministic chains collapse into one
/// entry with a count; chains containing a stochastic op stay separate.
/// Order of first occurrence is kept.
inline std::vector<std::pair<std::vector<std::size_t>, std::size_t>> group_chains(
    const TransformTable& table, const std::vector<std::vector<std::size_t>>& chains) {
  std::vector<std::pair<std::vector<std::size_t>, std::size_t>> groups;
  std::map<std::vector<std::size_t>, std::size_t> where;
  for (const auto& chain : chains) {
    if (chain_is_deterministic(table, chain)) {
      auto [it, inserted] = where.try_emplace(chain, groups.size());
      if (!inserted) {
        ++groups[it->second].second;
        continue;
      }
    }
    groups.emplace_back(chain, 1);
  }
  return groups;
}

}  // namespace detail

/// Column n = grad_w L(t_n(x)). Stochastic transforms take one rng draw per
/// column.
inline Jacobian jacobian_analytic(const Network& net, const Image& x, int label, const TransformTable& table, Rng& rng,
                                  const Parallel& par = serial()) {
  Jacobian jac(net.size(), table.size());
  detail::accumulate_columns(net, x, label, table, rng, 1.0, jac, par);
  return jac;
}

/// Monte Carlo Jacobian for layer k (1-based): `n_chains` chains are drawn
/// from layers 1..k-1, every candidate transform is applied on top of each
/// chain-transformed image, and columns are averaged over chains. For k = 1
/// there is nothing to sample and this is exactly `jacobian_analytic`.
inline Jacobian jacobian_mc(const Network& net, const Image& x, int label, const PolicyStack& stack, std::size_t k,
                            std::size_t n_chains, Rng& rng, const Parallel& par = serial()) {
  if (k == 0) throw InvalidArgument("jacobian_mc: layer index is 1-based");
  if (n_chains == 0) throw InvalidArgument("jacobian_mc: n_chains must be positive");
  if (k - 1 > stack.layers.size()) throw InvalidArgument("jacobian_mc: not enough prior layers");
  if (k == 1) return jacobian_analytic(net, x, label, stack.table, rng, par);

  std::vector<std::vector<std::size_t>> chains;
  chains.reserve(n_chains);
  for (std::size_t c = 0; c < n_chains; ++c) chains.push_back(sample_chain(stack, k - 1, rng));
  const auto groups = detail::group_chains(stack.table, chains);

  Jacobian jac(net.size(), stack.table.size());
  for (const auto& [chain, count] : groups) {
    const Image base = apply_chain(stack.table, x, chain, rng);
    const double weight = static_cast<double>(count) / static_cast<double>(n_chains);
    detail::accumulate_columns(net, base, label, stack.table, rng, weight, jac, par);
  }
  return jac;
}

inline void check_simplex(std::span<const double> p, std::size_t expected) {
  if (p.size() != expected)
    throw InvalidArgument("distribution has " + std::to_string(p.size()) + " entries, expected " +
                          std::to_string(expected));
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= -1e-12)) throw InvalidArgument("distribution has a negative or NaN entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw InvalidArgument("distribution sums to " + std::to_string(sum));
}

/// g = G p.
inline GradVec avg_gradient(const Jacobian& jac, std::span<const double> p) {
  check_simplex(p, jac.cols);
  GradVec g(jac.dim, 0.0);
  for (std::size_t n = 0; n < jac.cols; ++n) {
    const double w = p[n];
    if (w == 0.0) continue;
    const auto col = jac.column(n);
    for (std::size_t j = 0; j < jac.dim; ++j) g[j] += w * col[j];
  }
  return g;
}

/// Everything the search needs from one image's Jacobian.
struct RewardResult {
  RewardVec reward;
  double cosine = 0.0;  // cos(v, g)
  double g_norm = 0.0;
};

inline constexpr double kNormFloor = 1e-12;

/// Reward for an explicitly supplied average gradient `g` (shared-sample form
/// passes g = G p; the independent estimator passes its own sample).
inline RewardResult reward_with_g(const Jacobian& jac, std::span<const double> g, std::span<const double> v) {
  if (v.size() != jac.dim || g.size() != jac.dim) throw InvalidArgument("reward: gradient length mismatch");
  const double raw = norm(g);
  if (raw == 0.0) throw DegenerateGradient("reward: average gradient g is zero");
  const double gn = std::max(raw, kNormFloor);
  const double vg = dot(v, g);
  const double coef = vg / (gn * gn * gn);
  std::vector<double> u(jac.dim);
  for (std::size_t j = 0; j < jac.dim; ++j) u[j] = v[j] / gn - coef * g[j];
  RewardResult out;
  out.reward.resize(jac.cols);
  for (std::size_t n = 0; n < jac.cols; ++n) out.reward[n] = dot(jac.column(n), u);
  out.g_norm = raw;
  const double vn = norm(v);
  out.cosine = vn > 0.0 ? std::clamp(vg / (vn * gn), -1.0, 1.0) : 0.0;
  return out;
}

/// r = G^T (v/|g| - (v.g/|g|^2) g/|g|) with g = G p from the same samples.
inline RewardVec reward(const Jacobian& jac, std::span<const double> p, std::span<const double> v) {
  const GradVec g = avg_gradient(jac, p);
  return reward_with_g(jac, g, v).reward;
}

/// Average gradient estimated from `n_chains` freshly sampled full chains of
/// depth k (layers 1..k of `stack`), independent of the Jacobian's samples.
inline GradVec independent_avg_gradient(const Network& net, const Image& x, int label, const PolicyStack& stack,
                                        std::size_t k, std::size_t n_chains, Rng& rng) {
  if (n_chains == 0) throw InvalidArgument("independent_avg_gradient: n_chains must be positive");
  std::vector<std::vector<std::size_t>> chains;
  for (std::size_t c = 0; c < n_chains; ++c) chains.push_back(sample_chain(stack, k, rng));
  const auto groups = detail::group_chains(stack.table, chains);
  GradVec sum(net.size(), 0.0), g(net.size());
  Workspace ws;
  for (const auto& [chain, count] : groups) {
    const Image img = apply_chain(stack.table, x, chain, rng);
    net.loss_and_grad(img, label, g, ws);
    const double w = static_cast<double>(count) / static_cast<double>(n_chains);
    for (std::size_t j = 0; j < g.size(); ++j) sum[j] += w * g[j];
  }
  return sum;
}

struct RewardStats {
  std::vector<double> mean;
  std::vector<double> stddev;       // population form
  std::vector<double> regularized;  // mean - c * stddev
};

/// Elementwise mean minus c times population standard deviation across
/// images.
inline RewardStats regularized_reward(std::span<const RewardVec> rewards, double c) {
  if (rewards.empty()) throw InvalidArgument("regularized_reward: no reward vectors");
  if (!(c >= 0.0)) throw InvalidArgument("regularized_reward: c must be non-negative");
  const std::size_t n = rewards.front().size();
  for (const auto& r : rewards)
    if (r.size() != n) throw InvalidArgument("regularized_reward: reward vectors differ in length");
  const double count = static_cast<double>(rewards.size());
  RewardStats s;
  s.mean.assign(n, 0.0);
  s.stddev.assign(n, 0.0);
  s.regularized.assign(n, 0.0);
  for (const auto& r : rewards)
    for (std::size_t i = 0; i < n; ++i) s.mean[i] += r[i];
  for (auto& m : s.mean) m /= count;
  for (const auto& r : rewards)
    for (std::size_t i = 0; i < n; ++i) {
      const double d = r[i] - s.mean[i];
      s.stddev[i] += d * d;
    }
  for (std::size_t i = 0; i < n; ++i) {
    s.stddev[i] = std::sqrt(s.stddev[i] / count);
    s.regularized[i] = s.mean[i] - c * s.stddev[i];
  }
  return s;
}

/// d/d(logits) of p.r under softmax: p_i (r_i - p.r).
inline std::vector<double> policy_grad(const PolicyLayer& layer, std::span<const double> r) {
  if (r.size() != layer.size()) throw InvalidArgument("policy_grad: reward length does not match layer");
  const auto p = layer_probs(layer);
  const double avg = dot(p, r);
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = p[i] * (r[i] - avg);
  return g;
}

/// cos(v, G softmax(logits)).
inline double cosine_objective(const Jacobian& jac, const PolicyLayer& layer, std::span<const double> v) {
  return cosine_similarity(v, avg_gradient(jac, layer_probs(layer)));
}

/// Exact gradient of `cosine_objective` with respect to the logits. The
/// reward is the gradient in p scaled by |v|, hence the division.
inline std::vector<double> cosine_logit_grad(const Jacobian& jac, const PolicyLayer& layer,
                                             std::span<const double> v) {
  const double vn = norm(v);
  if (vn == 0.0) throw DegenerateGradient("cosine_logit_grad: zero validation gradient");
  auto r = reward(jac, layer_probs(layer), v);
  for (auto& x : r) x /= vn;
  return policy_grad(layer, r);
}

struct AdamState {
  std::vector<double> m, s;
  long step = 0;
  double lr = 0.025;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_size(std::size_t n, double lr = 0.025) {
    AdamState st;
    st.m.assign(n, 0.0);
    st.s.assign(n, 0.0);
    st.lr = lr;
    return st;
  }
};

/// Bias-corrected Adam ascent on the layer's logits. A non-finite gradient
/// leaves both the layer and the state untouched.
inline void adam_step(AdamState& st, PolicyLayer& layer, std::span<const double> grad) {
  if (st.m.size() != layer.size() || st.s.size() != layer.size() || grad.size() != layer.size())
    throw InvalidArgument("adam_step: state, layer and gradient lengths differ");
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i]))
      throw InvalidState("adam_step: non-finite gradient at logit " + std::to_string(i) + ", update refused");
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
    st.s[i] = st.beta2 * st.s[i] + (1.0 - st.beta2) * grad[i] * grad[i];
    const double mhat = st.m[i] / bc1, shat = st.s[i] / bc2;
    layer.logits[i] += st.lr * mhat / (std::sqrt(shat) + st.eps);
  }
}

}  // namespace augsearch
