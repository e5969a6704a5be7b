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

// Command implementations behind the `augsearch` executable. Argument
// parsing lives in tools/; everything here takes a filled RunConfig so the
// commands can be driven from tests.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "augsearch/data.hpp"
#include "augsearch/errors.hpp"
#include "augsearch/imgops.hpp"
#include "augsearch/io.hpp"
#include "augsearch/nnet.hpp"
#include "augsearch/parallel.hpp"
#include "augsearch/policy.hpp"
#include "augsearch/report.hpp"
#include "augsearch/search.hpp"
#include "augsearch/selfcheck.hpp"

namespace augsearch {

/// Exactly one of `cifar` / `synthetic` must be set.
struct DatasetSource {
  std::optional<std::filesystem::path> cifar;
  std::optional<SynthConfig> synthetic;
  std::size_t cifar_subset = 0;  // 0 keeps every record
  std::size_t val_count = 1000;  // CIFAR records held out for validation
  std::uint64_t split_seed = 0;

  void validate() const {
    if (cifar.has_value() == synthetic.has_value())
      throw InvalidConfig("choose exactly one dataset source (--cifar or --synthetic)");
    if (synthetic) synthetic->validate();
  }

  std::string describe() const {
    if (cifar) return "cifar10:" + cifar->filename().string();
    return "synthetic:" + std::string(nuisance_name(synthetic->nuisance)) + ":seed=" + std::to_string(synthetic->seed);
  }
};

struct RunConfig {
  DatasetSource data;
  std::filesystem::path out_dir = ".";
  bool deterministic = false;
  unsigned threads = 1;

  // pretrain
  ArchKind arch_kind = ArchKind::conv;
  std::vector<int> widths;  // empty: architecture default
  TrainConfig train;

  // search
  std::filesystem::path net_path;
  std::optional<std::filesystem::path> table_path;
  SearchConfig search;
  std::size_t improvement_images = 0;  // 0 skips the improvement report

  // apply / report
  std::filesystem::path policy_path;
  std::size_t per_input = 1;
  std::size_t input_count = 16;
  bool originals = false;
  bool skip_terminal = false;
  std::uint64_t seed = 0;

  /// Worker pool honouring --threads; --deterministic pins one worker.
  Parallel pool() const { return Parallel(deterministic ? 1u : threads); }
};

inline std::pair<Dataset, Dataset> load_dataset(const DatasetSource& conf) {
  conf.validate();
  if (conf.synthetic) return make_synthetic(*conf.synthetic);
  Dataset all = load_cifar10(*conf.cifar);
  if (conf.cifar_subset > 0) all = subsample(all, conf.cifar_subset, conf.split_seed);
  auto [train, val] = split_holdout(all, conf.val_count, conf.split_seed);
  if (train.empty() || val.empty()) throw DataError("dataset split left an empty train or validation set");
  return {std::move(train), std::move(val)};
}

inline void ensure_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw InvalidConfig("cannot create output directory " + dir.string());
}

inline Architecture architecture_for(const RunConfig& cfg, const Dataset& train) {
  const Image& x = train.images.front();
  Architecture a = cfg.arch_kind == ArchKind::conv ? Architecture::conv(x.channels, x.height, x.width, train.class_count)
                                                   : Architecture::mlp(x.channels, x.height, x.width, train.class_count);
  if (!cfg.widths.empty()) a.widths = cfg.widths;
  a.validate();
  return a;
}

inline void check_compatible(const Network& net, const Dataset& ds) {
  const auto& a = net.arch();
  const Image& x = ds.images.front();
  if (a.channels != x.channels || a.height != x.height || a.width != x.width || a.classes < ds.class_count)
    throw InvalidConfig("network (" + a.describe() + ") does not match the dataset images " +
                        std::to_string(x.channels) + "x" + std::to_string(x.height) + "x" + std::to_string(x.width));
}

struct PretrainSummary {
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::string checkpoint_hash;
};

/// Writes net.ckpt and loss_curve.csv.
inline PretrainSummary cmd_pretrain(const RunConfig& cfg, std::ostream& log) {
  auto [train, val] = load_dataset(cfg.data);
  if (train.empty()) throw DataError("training set is empty");
  ensure_out_dir(cfg.out_dir);
  const Architecture arch = architecture_for(cfg, train);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  Network net = Network::random(arch, cfg.seed);
  const auto par = cfg.pool();
  const auto result = pretrain(net, train.view(), tc, par);
  const auto bytes = encode_checkpoint(net);
  io::write_atomic(cfg.out_dir / "net.ckpt", bytes);
  io::write_atomic(cfg.out_dir / "loss_curve.csv", loss_curve_csv(result.epoch_loss));
  PretrainSummary s{result.accuracy, accuracy(net, val.view()), io::hex64(io::fnv1a64(bytes))};
  log << arch.describe() << " (" << net.size() << " weights)\n"
      << "epochs run " << result.epoch_loss.size() - 1 << ", loss " << result.epoch_loss.front() << " -> "
      << result.epoch_loss.back() << "\n"
      << "train accuracy " << s.train_accuracy << ", validation accuracy " << s.val_accuracy << "\n"
      << "checkpoint " << (cfg.out_dir / "net.ckpt").string() << " fnv1a64=" << s.checkpoint_hash << "\n";
  return s;
}

inline TransformTable table_for(const RunConfig& cfg) {
  if (!cfg.table_path) return build_transform_table(standard_op_config());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(*cfg.table_path));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("transform table config is not valid JSON: " + std::string(e.what()));
  }
  return build_transform_table(op_config_from_json(j));
}

inline void write_improvement(const RunConfig& cfg, const Network& net, const PolicyStack& stack, const Dataset& train,
                              const Dataset& val, std::ostream& log) {
  ImprovementOptions opts;
  opts.n_images = cfg.improvement_images;
  opts.val_batch = static_cast<std::size_t>(cfg.search.val_batch);
  opts.class_conditioned_val = cfg.search.class_conditioned_val;
  Rng rng(cfg.seed ^ 0x5eedULL);
  const auto stats = similarity_improvement_stats(net, stack, train, val, opts, rng, cfg.pool());
  io::write_atomic(cfg.out_dir / "improvement.csv", improvement_csv(stats));
  for (const auto& s : stats) log << "depth " << s.depth << " improvement mean " << s.mean << " std " << s.stddev << "\n";
}

/// Writes policy.json, trace.csv, op_distribution.csv and
/// magnitude_distribution.csv (plus improvement.csv on request). A failed
/// layer leaves policy.partial.json and the trace, then rethrows.
inline SearchOutcome cmd_search(const RunConfig& cfg, std::ostream& log) {
  SearchConfig sc = cfg.search;
  sc.validate();
  const Network net = load_checkpoint(cfg.net_path);
  auto [train, val] = load_dataset(cfg.data);
  if (train.empty() || val.empty()) throw DataError("search needs non-empty train and validation sets");
  check_compatible(net, train);
  ensure_out_dir(cfg.out_dir);
  const TransformTable table = table_for(cfg);
  const auto par = cfg.pool();

  SearchOutcome out = progressive_search(net, table, train, val, sc, par, [&](const TraceRecord& r) {
    if (r.iteration % 64 == 0 || r.iteration + 1 == sc.iterations_per_layer)
      log << "layer " << r.layer << " iter " << r.iteration << " cos " << r.cosine << " top " << table.label(r.top[0].first)
          << " " << r.top[0].second << "\n";
  });
  out.stack.metadata["dataset"] = cfg.data.describe();
  out.stack.metadata["network_hash"] = io::hex64(io::fnv1a64(encode_checkpoint(net)));
  out.stack.metadata["deterministic"] = cfg.deterministic ? "true" : "false";

  io::write_atomic(cfg.out_dir / "trace.csv", trace_csv(out.trace, table));
  if (!out.ok()) {
    io::write_atomic(cfg.out_dir / "policy.partial.json", policy_to_json(out.stack));
    std::rethrow_exception(out.failure);
  }
  io::write_atomic(cfg.out_dir / "policy.json", policy_to_json(out.stack));
  io::write_atomic(cfg.out_dir / "op_distribution.csv", op_distribution_csv(out.stack));
  io::write_atomic(cfg.out_dir / "magnitude_distribution.csv", magnitude_distribution_csv(out.stack));
  for (std::size_t k = 0; k < out.stack.layers.size(); ++k) {
    const auto p = layer_probs(out.stack.layers[k]);
    log << "layer " << k + 1 << (out.stack.layers[k].terminal ? " (terminal)" : "") << ":";
    for (const auto& [idx, prob] : top3(p)) log << " " << table.label(idx) << "=" << prob;
    log << "\n";
  }
  if (cfg.improvement_images > 0) write_improvement(cfg, net, out.stack, train, val, log);
  return out;
}

/// Writes aug_<i>_<j>.pgm/.ppm for the first `input_count` training images,
/// `per_input` samples each, plus orig_<i> files when `originals` is set.
/// Returns the number of files written.
inline std::size_t cmd_apply(const RunConfig& cfg, std::ostream& log) {
  const PolicyStack stack = load_policy(cfg.policy_path);
  if (stack.layers.empty()) throw LoadError("policy has no layers");
  auto [train, val] = load_dataset(cfg.data);
  ensure_out_dir(cfg.out_dir);
  const std::size_t count = std::min(cfg.input_count, train.size());
  Rng rng(cfg.seed);
  std::size_t written = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const Image& x = train.images[i];
    const std::string ext = x.channels == 1 ? ".pgm" : ".ppm";
    if (cfg.originals && cfg.per_input > 0) {
      io::write_atomic(cfg.out_dir / ("orig_" + std::to_string(i) + ext), io::encode_pnm(x));
      ++written;
    }
    for (std::size_t j = 0; j < cfg.per_input; ++j) {
      const Image aug = apply_policy(stack, x, rng, cfg.skip_terminal);
      io::write_atomic(cfg.out_dir / ("aug_" + std::to_string(i) + "_" + std::to_string(j) + ext), io::encode_pnm(aug));
      ++written;
    }
  }
  log << "wrote " << written << " images to " << cfg.out_dir.string() << "\n";
  return written;
}

/// Distribution CSVs for an existing policy; with a checkpoint and dataset
/// also the per-depth improvement report.
inline void cmd_report(const RunConfig& cfg, std::ostream& log) {
  const PolicyStack stack = load_policy(cfg.policy_path);
  ensure_out_dir(cfg.out_dir);
  io::write_atomic(cfg.out_dir / "op_distribution.csv", op_distribution_csv(stack));
  io::write_atomic(cfg.out_dir / "magnitude_distribution.csv", magnitude_distribution_csv(stack));
  for (std::size_t k = 0; k < stack.layers.size(); ++k) {
    const auto p = layer_probs(stack.layers[k]);
    log << "layer " << k + 1 << (stack.layers[k].terminal ? " (terminal)" : "") << "\n";
    for (const auto& conf : stack.table.config.ops)
      log << "  " << op_name(conf.op) << " " << op_mass(p, stack.table, conf.op) << "\n";
  }
  if (cfg.improvement_images > 0) {
    if (cfg.net_path.empty()) throw InvalidConfig("the improvement report needs --net");
    const Network net = load_checkpoint(cfg.net_path);
    auto [train, val] = load_dataset(cfg.data);
    check_compatible(net, train);
    write_improvement(cfg, net, stack, train, val, log);
  }
}

/// Runs every oracle suite; true when all pass.
inline bool cmd_selfcheck(std::ostream& log, const SelfcheckOptions& opts = {}) {
  bool ok = true;
  for (const auto& r : run_selfcheck(opts)) {
    log << (r.passed ? "PASS " : "FAIL ") << r.name << "  metric " << r.metric << " (tolerance " << r.tolerance
        << ")  " << r.seconds << " s  " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok;
}

}  // namespace augsearch
