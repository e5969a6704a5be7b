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

#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "augsearch/cli.hpp"

namespace {

using namespace augsearch;

/// JSON config files for CLI11: keys are option names, nested objects are
/// subcommands, e.g. {"seed": 3, "search": {"lr": 0.025, "iters": 512}}.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::ordered_json j;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames()[0];
      if (opt->count() > 0) {
        const auto& r = opt->results();
        j[name] = r.size() == 1 ? nlohmann::ordered_json(r[0]) : nlohmann::ordered_json(r);
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    for (const CLI::App* sub : app->get_subcommands({})) {
      auto nested = nlohmann::ordered_json::parse(to_config(sub, default_also, false, ""));
      if (!nested.empty()) j[sub->get_name()] = nested;
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    collect(j, {}, items);
    return items;
  }

 private:
  static void collect(const nlohmann::json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& items) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (it->is_object()) {
        auto nested = parents;
        nested.push_back(it.key());
        collect(*it, nested, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = it.key();
      if (it->is_array()) {
        for (const auto& v : *it) item.inputs.push_back(scalar(v, it.key()));
      } else {
        item.inputs.push_back(scalar(*it, it.key()));
      }
      items.push_back(std::move(item));
    }
  }

  static std::string scalar(const nlohmann::json& v, const std::string& key) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config key '" + key + "' must be a string, number, boolean or list of them");
  }
};

const std::map<std::string, Nuisance> kNuisances = {{"none", Nuisance::none},
                                                    {"rotation", Nuisance::rotation},
                                                    {"brightness", Nuisance::brightness},
                                                    {"translation", Nuisance::translation}};

struct DataFlags {
  std::string cifar;
  std::string synthetic;
  SynthConfig synth;
};

void add_data_options(CLI::App* cmd, DataFlags& d, RunConfig& cfg) {
  auto* cifar = cmd->add_option("--cifar", d.cifar, "CIFAR-10 binary batch file or directory of data_batch_*.bin");
  auto* synth = cmd->add_option("--synthetic", d.synthetic, "synthetic bar dataset with this validation nuisance")
                    ->check(CLI::IsMember({"none", "rotation", "brightness", "translation"}));
  cifar->excludes(synth);
  cmd->add_option("--cifar-subset", cfg.data.cifar_subset, "use this many CIFAR records (0 = all)");
  cmd->add_option("--val-count", cfg.data.val_count, "CIFAR records held out for validation");
  cmd->add_option("--split-seed", cfg.data.split_seed, "seed for CIFAR subsetting and holdout");
  cmd->add_option("--synth-seed", d.synth.seed, "synthetic dataset seed");
  cmd->add_option("--synth-size", d.synth.size, "synthetic image side length");
  cmd->add_option("--synth-classes", d.synth.classes, "synthetic class count (2..8)");
  cmd->add_option("--synth-train", d.synth.train_per_class, "synthetic training images per class");
  cmd->add_option("--synth-val", d.synth.val_per_class, "synthetic validation images per class");
  cmd->add_option("--synth-noise", d.synth.noise, "pixel noise standard deviation");
  cmd->add_option("--rotation-min", d.synth.rotation_min_deg, "lower bound of the validation rotation (degrees)");
  cmd->add_option("--rotation-max", d.synth.rotation_max_deg, "upper bound of the validation rotation (degrees)");
  cmd->add_flag("--glyphs", [&d](std::int64_t) { d.synth.shapes = ShapeSet::glyphs; },
                "stroke glyphs instead of oriented bars");
  cmd->add_flag("--nuisance-on-train", d.synth.nuisance_on_train, "apply the nuisance to the training split too");
}

void finish_data(const DataFlags& d, RunConfig& cfg) {
  if (!d.cifar.empty()) cfg.data.cifar = d.cifar;
  if (!d.synthetic.empty()) {
    SynthConfig s = d.synth;
    s.nuisance = kNuisances.at(d.synthetic);
    cfg.data.synthetic = s;
  }
}

std::vector<int> parse_widths(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw InvalidConfig("bad --widths entry '" + tok + "'");
    }
  }
  return out;
}

const char* kFooter = R"(Outputs (CSV headers):
  loss_curve.csv              epoch,loss
  trace.csv                   iteration,layer,cosine_similarity,grad_norm,entropy,top1,top1_prob,top2,top2_prob,top3,top3_prob,elapsed_ms
  op_distribution.csv         layer,op,probability
  magnitude_distribution.csv  layer,op,level,magnitude,probability,conditional
  improvement.csv             depth,mean,std
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
See docs/formats.md for the policy and checkpoint layouts.)";

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  DataFlags data;
  std::string widths;
  std::string arch = "conv";
  std::string out = ".";

  CLI::App app{"Gradient-matching augmentation policy search"};
  app.footer(kFooter);
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of option values; command-line flags take precedence");
  app.fallthrough();
  app.add_option("--seed", cfg.seed, "random seed");
  app.add_option("--threads", cfg.threads, "worker threads")->check(CLI::Range(1u, 1024u));
  app.add_flag("--deterministic", cfg.deterministic, "single worker, reproducible output");
  app.add_option("--out", out, "output directory");

  auto* pretrain_cmd = app.add_subcommand("pretrain", "train the proxy network; writes net.ckpt and loss_curve.csv");
  add_data_options(pretrain_cmd, data, cfg);
  pretrain_cmd->add_option("--arch", arch, "network kind")->check(CLI::IsMember({"conv", "mlp"}));
  pretrain_cmd->add_option("--widths", widths, "conv filters or mlp hidden sizes, comma separated");
  pretrain_cmd->add_option("--epochs", cfg.train.epochs, "maximum epochs");
  pretrain_cmd->add_option("--batch", cfg.train.batch_size, "minibatch size");
  pretrain_cmd->add_option("--lr", cfg.train.lr, "SGD learning rate");
  pretrain_cmd->add_option("--momentum", cfg.train.momentum, "SGD momentum");
  pretrain_cmd->add_option("--weight-decay", cfg.train.weight_decay, "L2 weight decay");
  pretrain_cmd->add_option("--stop-loss", cfg.train.stop_loss, "stop once the training loss reaches this (0 = off)");

  auto* search_cmd = app.add_subcommand("search", "search a layered policy; writes policy.json and reports");
  add_data_options(search_cmd, data, cfg);
  search_cmd->add_option("--net", cfg.net_path, "checkpoint from pretrain")->required();
  search_cmd->add_option("--table", cfg.table_path, "transform table JSON (default: standard 139 transforms)");
  search_cmd->add_option("--lr", cfg.search.lr, "Adam learning rate on policy logits");
  search_cmd->add_option("--iters", cfg.search.iterations_per_layer, "iterations per layer");
  search_cmd->add_option("--layers", cfg.search.max_layers, "maximum layers");
  search_cmd->add_option("--c", cfg.search.reg_c, "reward standard-deviation penalty");
  search_cmd->add_option("--expectation-images", cfg.search.expectation_images, "search images per iteration");
  search_cmd->add_option("--n-chains", cfg.search.n_chains, "sampled prior chains per image for layers >= 2");
  search_cmd->add_option("--val-batch", cfg.search.val_batch, "validation batch size");
  search_cmd->add_option("--identity-threshold", cfg.search.identity_threshold, "stop when p(identity) reaches this");
  search_cmd->add_flag("--class-conditioned", cfg.search.class_conditioned_val,
                       "validation batch drawn from the search image's class");
  search_cmd->add_flag("--independent-g", cfg.search.independent_g, "separately sampled average gradient");
  search_cmd->add_flag("--uniform", cfg.search.uniform_policy, "baseline: keep every layer uniform");
  search_cmd->add_option("--improvement", cfg.improvement_images, "images for the improvement report (0 = skip)");

  auto* apply_cmd = app.add_subcommand("apply", "write augmented samples as PGM/PPM files");
  add_data_options(apply_cmd, data, cfg);
  apply_cmd->add_option("--policy", cfg.policy_path, "policy JSON")->required();
  apply_cmd->add_option("-n,--per-input", cfg.per_input, "augmented samples per input image");
  apply_cmd->add_option("--count", cfg.input_count, "number of input images");
  apply_cmd->add_flag("--originals", cfg.originals, "also write the unaugmented inputs");
  apply_cmd->add_flag("--skip-terminal", cfg.skip_terminal, "leave out layers flagged terminal");

  auto* report_cmd = app.add_subcommand("report", "distribution CSVs (and optional improvement stats) for a policy");
  add_data_options(report_cmd, data, cfg);
  report_cmd->add_option("--policy", cfg.policy_path, "policy JSON")->required();
  report_cmd->add_option("--net", cfg.net_path, "checkpoint, needed for --improvement");
  report_cmd->add_option("--improvement", cfg.improvement_images, "images for the improvement report (0 = skip)");
  report_cmd->add_option("--class-conditioned", cfg.search.class_conditioned_val,
                         "class-conditioned validation batches for the improvement report");

  auto* selfcheck_cmd = app.add_subcommand("selfcheck", "run the gradient, enumeration and identity oracle suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    cfg.out_dir = out;
    finish_data(data, cfg);
    if (!widths.empty()) cfg.widths = parse_widths(widths);
    cfg.arch_kind = arch == "mlp" ? ArchKind::mlp : ArchKind::conv;
    cfg.search.seed = cfg.seed;

    if (*pretrain_cmd) {
      cmd_pretrain(cfg, std::cout);
    } else if (*search_cmd) {
      cmd_search(cfg, std::cout);
    } else if (*apply_cmd) {
      cmd_apply(cfg, std::cout);
    } else if (*report_cmd) {
      cmd_report(cfg, std::cout);
    } else if (*selfcheck_cmd) {
      return cmd_selfcheck(std::cout) ? 0 : 1;
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
