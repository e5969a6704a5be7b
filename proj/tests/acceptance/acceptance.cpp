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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails. Criteria 6-9 share searches; everything runs
// single-threaded so results do not depend on the machine.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "augsearch/cli.hpp"
#include "augsearch/report.hpp"
#include "augsearch/search.hpp"
#include "augsearch/selfcheck.hpp"

using namespace augsearch;
namespace fs = std::filesystem;

namespace {

constexpr int kSeeds = 5;

struct Verdict {
  bool passed = false;
  std::string detail;
};

struct Row {
  int id;
  std::string name;
  Verdict verdict;
  double seconds;
  double budget;
};

std::vector<Row> rows;

void run(int id, const std::string& name, double budget_s, const std::function<Verdict()>& fn) {
  std::cout << "-- " << id << " " << name << "\n" << std::flush;
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = fn();
  } catch (const std::exception& e) {
    v = {false, std::string("error: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (s > budget_s) {
    v.detail += "; over time budget";
    v.passed = false;
  }
  rows.push_back({id, name, v, s, budget_s});
  std::printf("%s %2d %-28s %7.1f s  %s\n", v.passed ? "PASS" : "FAIL", id, name.c_str(), s, v.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

Verdict from_suite(const SuiteResult& r) {
  return {r.passed, "metric " + fmt(r.metric) + " (tolerance " + fmt(r.tolerance) + "), " + r.detail};
}

// ---------------------------------------------------------------------------
// Shared experiment: synthetic bars with a validation-only nuisance, a small
// partially trained MLP proxy, 16x16 images.

struct Experiment {
  Dataset train, val;
  Network net;
  TransformTable table;
};

TransformTable small_image_table() {
  OpConfig oc = standard_op_config();
  oc.params.cutout_size = 8;  // half the image side, as 16 is for 32x32
  oc.params.crop_pad = 2;
  return build_transform_table(oc);
}

Experiment make_experiment(int seed, Nuisance nuisance) {
  SynthConfig conf;
  conf.nuisance = nuisance;
  conf.seed = static_cast<std::uint64_t>(seed);
  conf.rotation_min_deg = 15.0;
  conf.rotation_max_deg = 30.0;
  auto [train, val] = make_synthetic(conf);
  Network net = Network::random(Architecture::mlp(1, conf.size, conf.size, conf.classes, {16}),
                                static_cast<std::uint64_t>(seed) + 100);
  TrainConfig tc;
  tc.epochs = 40;
  tc.lr = 0.01;
  tc.stop_loss = 0.3;
  tc.seed = static_cast<std::uint64_t>(seed);
  pretrain(net, train.view(), tc);
  return {std::move(train), std::move(val), std::move(net), small_image_table()};
}

SearchConfig search_config(int seed, double c, int layers) {
  SearchConfig cfg;  // 512 iterations, lr 0.025, 16 expectation images
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.reg_c = c;
  cfg.max_layers = layers;
  cfg.n_chains = 4;
  cfg.class_conditioned_val = true;
  return cfg;
}

std::vector<ImprovementStats> improvement(const Experiment& ex, const PolicyStack& stack, int seed) {
  ImprovementOptions opts;  // 256 images
  opts.n_augment = 32;
  opts.class_conditioned_val = true;
  Rng rng(static_cast<std::uint64_t>(seed) + 7);
  return similarity_improvement_stats(ex.net, stack, ex.train, ex.val, opts, rng);
}

struct NuisanceRun {
  PolicyStack stack;
  std::vector<ImprovementStats> stats;
};

NuisanceRun nuisance_run(int seed, double c, int layers, Nuisance nuisance) {
  const Experiment ex = make_experiment(seed, nuisance);
  auto out = progressive_search(ex.net, ex.table, ex.train, ex.val, search_config(seed, c, layers));
  if (!out.ok()) std::rethrow_exception(out.failure);
  auto stats = improvement(ex, out.stack, seed);
  return {std::move(out.stack), std::move(stats)};
}

// Cache of (seed, c) -> single-layer search on the rotation dataset.
std::map<std::pair<int, double>, NuisanceRun> rotation_runs;

const NuisanceRun& rotation_run(int seed, double c) {
  auto key = std::make_pair(seed, c);
  auto it = rotation_runs.find(key);
  if (it == rotation_runs.end()) it = rotation_runs.emplace(key, nuisance_run(seed, c, 1, Nuisance::rotation)).first;
  return it->second;
}

/// Table entries that leave every probe image bit-identical.
std::vector<std::size_t> identity_equivalents(const TransformTable& table, const Dataset& probe) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (is_stochastic(table[i].op)) continue;
    bool same = true;
    Rng rng(0);
    for (std::size_t j = 0; j < std::min<std::size_t>(probe.size(), 32) && same; ++j)
      same = apply_transform(probe.images[j], table, i, rng) == probe.images[j];
    if (same) out.push_back(i);
  }
  return out;
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main() {
  std::cout << "augsearch acceptance run\n";

  run(1, "policy-gradient check", 30, [] {
    PolicyGradCheck cfg;  // 20 instances, D=500, 10 transforms, eps 1e-5
    return from_suite(check_policy_gradient(cfg));
  });

  run(2, "network backprop check", 60, [] {
    BackpropCheck cfg;  // 10 instances x 100 coordinates, eps 1e-4
    return from_suite(check_backprop(cfg));
  });

  run(3, "zero expected reward", 10, [] {
    ZeroRewardCheck cfg;  // 100 instances, tolerance 1e-9
    return from_suite(check_zero_expected_reward(cfg));
  });

  run(4, "MC vs enumeration", 120, [] {
    EnumerationCheck cfg;  // 100 / 1k / 10k chains, 2% at 10k, slope -0.5 +- 0.15
    return from_suite(check_enumeration(cfg));
  });

  run(5, "table cardinality", 1, [] {
    const auto table = build_transform_table(standard_op_config());
    std::size_t with_levels = 0;
    for (const auto& t : table.entries) with_levels += t.level >= 0;
    return Verdict{table.size() == 139 && with_levels == 132,
                   std::to_string(table.size()) + " transforms, " + std::to_string(with_levels) + " with magnitudes"};
  });

  run(6, "nuisance recovery", 600, [] {
    int hits = 0;
    std::string detail;
    const auto table = small_image_table();
    for (int seed = 0; seed < kSeeds; ++seed) {
      const auto& r = rotation_run(seed, 1.0);
      const double mass = op_mass(layer_probs(r.stack.layers[0]), table, OpKind::rotate);
      hits += mass > 0.26;
      detail += (seed ? ", " : "") + fmt(mass, 3);
    }
    return Verdict{hits >= 4, "rotate mass per seed " + detail + " (want > 0.26 in >= 4 of 5, " +
                                  std::to_string(hits) + " hit)"};
  });

  run(7, "identity convergence", 900, [] {
    int fired = 0, failed = 0;
    std::string detail;
    for (int seed = 0; seed < kSeeds && fired < 3 && failed < kSeeds - 2; ++seed) {
      const Experiment ex = make_experiment(seed, Nuisance::none);
      auto cfg = search_config(seed, 1.0, 3);
      cfg.n_chains = 2;
      const auto out = progressive_search(ex.net, ex.table, ex.train, ex.val, cfg);
      if (!out.ok()) std::rethrow_exception(out.failure);
      const bool hit = out.stack.layers.back().terminal;
      fired += hit;
      failed += !hit;
      const auto same = identity_equivalents(ex.table, ex.val);
      detail += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + ":";
      for (const auto& l : out.trace.layers) {
        double eq = 0.0;
        for (auto i : same) eq += l.probs[i];
        detail += " p(id)=" + fmt(l.probs[ex.table.identity_index], 3) + "/eq=" + fmt(eq, 3);
      }
      if (seed == 0) {
        detail += " [identity-equivalent entries:";
        for (auto i : same) detail += " " + ex.table.label(i);
        detail += "]";
      }
    }
    return Verdict{fired >= 3, std::to_string(fired) + " fired; " + detail};
  });

  run(8, "regularization effect", 900, [] {
    int lower = 0;
    std::string detail;
    for (int seed = 0; seed < kSeeds; ++seed) {
      const double with = rotation_run(seed, 1.0).stats.back().stddev;
      const double without = rotation_run(seed, 0.0).stats.back().stddev;
      lower += with < without;
      detail += (seed ? ", " : "") + fmt(with) + " vs " + fmt(without);
    }
    return Verdict{lower >= 4, "final-layer improvement std c=1 vs c=0: " + detail + " (" + std::to_string(lower) +
                                   " of 5 lower, want >= 4)"};
  });

  run(9, "trajectory shape", 600, [] {
    const int seed = 0;
    const auto r = nuisance_run(seed, 1.0, 3, Nuisance::rotation);
    const auto& st = r.stats;
    int drops = 0;
    std::string detail = "mean by depth:";
    for (std::size_t d = 0; d < st.size(); ++d) {
      detail += " " + fmt(st[d].mean);
      if (d >= 2 && st[d].mean < st[d - 1].mean) ++drops;
    }
    const bool zero = st.front().mean == 0.0 && st.front().stddev == 0.0;
    return Verdict{zero && drops <= 1 && st.size() >= 2,
                   detail + " (" + std::to_string(drops) + " decreasing steps, depth 0 " + (zero ? "exactly 0" : "nonzero") +
                       ")"};
  });

  run(10, "deterministic search", 600, [] {
    const fs::path dir = fs::temp_directory_path() / ("augsearch_acceptance_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const std::string cli = AUGSEARCH_CLI;
    const std::string data = " --synthetic rotation --rotation-min 15 --rotation-max 30";
    if (shell(cli + " --out " + dir.string() + " --seed 1 pretrain" + data +
              " --arch mlp --widths 16 --epochs 40 --lr 0.01 --stop-loss 0.3") != 0)
      return Verdict{false, "pretrain failed"};
    const std::string search = " --deterministic --seed 1 search" + data + " --net " + (dir / "net.ckpt").string() +
                               " --iters 64 --layers 2 --n-chains 2 --class-conditioned";
    const int a = shell(cli + " --out " + (dir / "a").string() + search);
    const int b = shell(cli + " --out " + (dir / "b").string() + search);
    if (a != 0 || b != 0) return Verdict{false, "search exited " + std::to_string(a) + "/" + std::to_string(b)};
    const auto pa = io::read_file(dir / "a" / "policy.json"), pb = io::read_file(dir / "b" / "policy.json");
    fs::remove_all(dir);
    return Verdict{pa == pb, std::to_string(pa.size()) + "-byte policy files " + (pa == pb ? "identical" : "differ")};
  });

  int failed = 0;
  std::cout << "\nsummary\n";
  for (const auto& r : rows) {
    std::printf("%s %2d %s\n", r.verdict.passed ? "PASS" : "FAIL", r.id, r.name.c_str());
    failed += !r.verdict.passed;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(rows.size()) - failed, rows.size());
  return failed == 0 ? 0 : 1;
}
