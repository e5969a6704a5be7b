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
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "augsearch/errors.hpp"
#include "augsearch/image.hpp"
#include "augsearch/imgops.hpp"
#include "augsearch/io.hpp"
#include "augsearch/rng.hpp"

namespace augsearch {

/// Categorical distribution over a transform table, parameterised by
/// unconstrained logits. A layer owns nothing but its logit vector; its
/// dependence on earlier layers lives entirely in the data it was searched on.
struct PolicyLayer {
  std::vector<double> logits;
  bool terminal = false;  // identity-dominated stop layer

  static PolicyLayer uniform(std::size_t n) { return {std::vector<double>(n, 0.0), false}; }
  std::size_t size() const noexcept { return logits.size(); }
};

/// Max-subtracted softmax.
inline std::vector<double> softmax(std::span<const double> logits) {
  for (double v : logits)
    if (!std::isfinite(v)) throw InvalidState("non-finite policy logit");
  if (logits.empty()) return {};
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

inline std::vector<double> layer_probs(const PolicyLayer& layer) { return softmax(layer.logits); }

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

/// K sequential layers over one shared table; layers[0] is applied first.
struct PolicyStack {
  TransformTable table;
  std::vector<PolicyLayer> layers;
  std::map<std::string, std::string> metadata;

  std::size_t depth() const noexcept { return layers.size(); }
};

/// One transform index per layer for the first `depth` layers, drawn
/// independently.
inline std::vector<std::size_t> sample_chain(const PolicyStack& stack, std::size_t depth, Rng& rng) {
  if (depth > stack.layers.size())
    throw InvalidArgument("chain depth " + std::to_string(depth) + " exceeds " + std::to_string(stack.layers.size()) +
                          " layers");
  std::vector<std::size_t> chain;
  chain.reserve(depth);
  for (std::size_t k = 0; k < depth; ++k) chain.push_back(sample_categorical(layer_probs(stack.layers[k]), rng));
  return chain;
}

/// Applies chain[0] first.
inline Image apply_chain(const TransformTable& table, const Image& img, std::span<const std::size_t> chain, Rng& rng) {
  Image out = img;
  for (std::size_t idx : chain) out = apply_transform(out, table, idx, rng);
  return out;
}

inline bool chain_is_deterministic(const TransformTable& table, std::span<const std::size_t> chain) {
  return std::none_of(chain.begin(), chain.end(), [&](std::size_t i) { return is_stochastic(table[i].op); });
}

/// Samples one full-depth chain and applies it. With `skip_terminal`, layers
/// flagged terminal are left out.
inline Image apply_policy(const PolicyStack& stack, const Image& img, Rng& rng, bool skip_terminal = false) {
  if (stack.layers.empty()) throw InvalidArgument("apply_policy: empty policy stack");
  Image out = img;
  for (const auto& layer : stack.layers) {
    if (skip_terminal && layer.terminal) continue;
    const auto idx = sample_categorical(layer_probs(layer), rng);
    out = apply_transform(out, stack.table, idx, rng);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON document: {version, table_config, table_hash, metadata,
// layers: [{terminal, logits: [hex floats]}]}

inline constexpr int kPolicyVersion = 1;

inline std::string policy_to_json(const PolicyStack& stack) {
  nlohmann::ordered_json j;
  j["version"] = kPolicyVersion;
  j["table_config"] = op_config_to_json(stack.table.config);
  j["table_hash"] = io::hex64(stack.table.hash());
  j["table_size"] = stack.table.size();
  j["metadata"] = stack.metadata;
  j["layers"] = nlohmann::ordered_json::array();
  for (const auto& layer : stack.layers) {
    nlohmann::ordered_json l;
    l["terminal"] = layer.terminal;
    auto& logits = l["logits"] = nlohmann::ordered_json::array();
    for (double v : layer.logits) logits.push_back(io::hexfloat(v));
    j["layers"].push_back(std::move(l));
  }
  return j.dump(1) + "\n";
}

inline PolicyStack policy_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("policy file is not valid JSON: ") + e.what());
  }
  try {
    const int version = j.at("version").get<int>();
    if (version != kPolicyVersion)
      throw LoadError("policy version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kPolicyVersion) + ")");
    PolicyStack stack;
    stack.table = build_transform_table(op_config_from_json(j.at("table_config")));
    const auto stored = j.at("table_hash").get<std::string>();
    const auto actual = io::hex64(stack.table.hash());
    if (stored != actual)
      throw LoadError("table hash mismatch: file says " + stored + ", table config hashes to " + actual);
    if (j.contains("metadata")) stack.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    for (const auto& l : j.at("layers")) {
      PolicyLayer layer;
      layer.terminal = l.value("terminal", false);
      for (const auto& v : l.at("logits")) layer.logits.push_back(io::parse_hexfloat(v.get<std::string>()));
      if (layer.logits.size() != stack.table.size())
        throw LoadError("layer has " + std::to_string(layer.logits.size()) + " logits for a table of " +
                        std::to_string(stack.table.size()));
      stack.layers.push_back(std::move(layer));
    }
    return stack;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed policy file: ") + e.what());
  } catch (const InvalidConfig& e) {
    throw FormatError(std::string("policy table config: ") + e.what());
  }
}

inline void save_policy(const PolicyStack& stack, const std::filesystem::path& path) {
  io::write_atomic(path, policy_to_json(stack));
}

inline PolicyStack load_policy(const std::filesystem::path& path) { return policy_from_json(io::read_text(path)); }

}  // namespace augsearch
