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

// CSV exports. Schemas (header rows) are part of the CLI contract and are
// listed in docs/formats.md.

#pragma once

#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "augsearch/imgops.hpp"
#include "augsearch/nnet.hpp"
#include "augsearch/policy.hpp"
#include "augsearch/search.hpp"

namespace augsearch {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// Probability of `op`, summed over all of its magnitude levels.
inline double op_mass(std::span<const double> probs, const TransformTable& table, OpKind op) {
  double s = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i)
    if (table[i].op == op) s += probs[i];
  return s;
}

/// layer,op,probability - one row per (layer, op) in table order.
inline std::string op_distribution_csv(const PolicyStack& stack) {
  std::string out = "layer,op,probability\n";
  for (std::size_t k = 0; k < stack.layers.size(); ++k) {
    const auto p = layer_probs(stack.layers[k]);
    for (const auto& conf : stack.table.config.ops)
      out += std::to_string(k + 1) + "," + std::string(op_name(conf.op)) + "," +
             fmt_double(op_mass(p, stack.table, conf.op)) + "\n";
  }
  return out;
}

/// layer,op,level,magnitude,probability,conditional - magnitude-carrying ops
/// only; `conditional` is the level's share of its op's mass.
inline std::string magnitude_distribution_csv(const PolicyStack& stack) {
  std::string out = "layer,op,level,magnitude,probability,conditional\n";
  for (std::size_t k = 0; k < stack.layers.size(); ++k) {
    const auto p = layer_probs(stack.layers[k]);
    for (std::size_t i = 0; i < stack.table.size(); ++i) {
      const auto& t = stack.table[i];
      if (t.level < 0) continue;
      const double mass = op_mass(p, stack.table, t.op);
      out += std::to_string(k + 1) + "," + std::string(op_name(t.op)) + "," + std::to_string(t.level) + "," +
             fmt_double(t.magnitude) + "," + fmt_double(p[i]) + "," + fmt_double(mass > 0 ? p[i] / mass : 0.0) +
             "\n";
    }
  }
  return out;
}

/// iteration,layer,cosine_similarity,grad_norm,entropy,top1,top1_prob,
/// top2,top2_prob,top3,top3_prob,elapsed_ms
inline std::string trace_csv(const SearchTrace& trace, const TransformTable& table) {
  std::string out =
      "iteration,layer,cosine_similarity,grad_norm,entropy,top1,top1_prob,top2,top2_prob,top3,top3_prob,elapsed_ms\n";
  for (const auto& r : trace.records) {
    out += std::to_string(r.iteration) + "," + std::to_string(r.layer) + "," + fmt_double(r.cosine) + "," +
           fmt_double(r.grad_norm) + "," + fmt_double(r.entropy);
    for (const auto& [idx, prob] : r.top) out += "," + table.label(idx) + "," + fmt_double(prob);
    out += "," + fmt_double(r.elapsed_ms) + "\n";
  }
  return out;
}

/// depth,mean,std
inline std::string improvement_csv(std::span<const ImprovementStats> stats) {
  std::string out = "depth,mean,std\n";
  for (const auto& s : stats)
    out += std::to_string(s.depth) + "," + fmt_double(s.mean) + "," + fmt_double(s.stddev) + "\n";
  return out;
}

/// epoch,loss (epoch 0 is before training)
inline std::string loss_curve_csv(std::span<const double> losses) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out += std::to_string(e) + "," + fmt_double(losses[e]) + "\n";
  return out;
}

}  // namespace augsearch
