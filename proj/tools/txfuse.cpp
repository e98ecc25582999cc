// Copyright 2026 The txfuse Authors.
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

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "txfuse/graphbuild/graph.hpp"
#include "txfuse/harness/config.hpp"
#include "txfuse/harness/pipeline.hpp"
#include "txfuse/harness/synth.hpp"
#include "txfuse/labor/labor.hpp"

namespace {

using txfuse::harness::ExperimentConfig;

// Flag name -> config key, applied only when the flag was given.
struct Overrides {
  std::map<std::string, std::string> values;
  std::vector<std::pair<CLI::Option*, std::string>> bound;
  std::vector<std::pair<CLI::Option*, std::pair<std::string, std::string>>> switches;

  void add(CLI::App* app, const std::string& flag, const std::string& key,
           const std::string& help) {
    bound.emplace_back(app->add_option(flag, values[key], help), key);
  }
  void add_switch(CLI::App* app, const std::string& flag, const std::string& key,
                  const std::string& value, const std::string& help) {
    switches.emplace_back(app->add_flag(flag, help), std::pair{key, value});
  }
  void apply(ExperimentConfig& cfg) const {
    for (const auto& [opt, key] : bound) {
      if (opt->count()) cfg.set(key, values.at(key));
    }
    for (const auto& [opt, kv] : switches) {
      if (opt->count()) cfg.set(kv.first, kv.second);
    }
  }
};

void print_report(const txfuse::harness::RunReport& rep, const ExperimentConfig& cfg) {
  std::cout << "stages:";
  for (const auto& s : rep.stages) std::cout << ' ' << s;
  std::cout << '\n';
  if (rep.test) {
    std::printf("test  precision %.4f  recall %.4f  f1 %.4f  bacc %.4f\n", rep.test->precision,
                rep.test->recall, rep.test->f1, rep.test->bacc);
  }
  if (!rep.ok) std::cerr << "failed in " << rep.failed_stage << ": " << rep.error << '\n';
  std::cout << "manifest: " << (cfg.out_dir / "manifest.json").string() << '\n';
}

int sample_bench(const ExperimentConfig& cfg, const std::string& graph_path,
                 const std::string& sampler, const std::string& fanout, std::size_t trials,
                 std::size_t batch_size, const std::string& csv_path) {
  using namespace txfuse;
  graphbuild::AccountGraph g;
  if (!graph_path.empty()) {
    std::ifstream in(graph_path);
    if (!in) throw std::runtime_error("cannot open " + graph_path);
    g = graphbuild::AccountGraph::from_edges(graphbuild::parse_edge_list(in));
  } else {
    g = graphbuild::AccountGraph::from_transfers(harness::synth_generate(cfg.synth, cfg.seed).transfers);
  }
  labor::SamplerConfig sc;
  sc.kind = labor::parse_sampler(sampler);
  sc.fanouts.clear();
  std::stringstream ss(fanout);
  for (std::string f; std::getline(ss, f, ',');) sc.fanouts.push_back(std::stoul(f));
  const auto nb = labor::Neighborhood::build(g, cfg.gae.direction);
  Rng prng = Rng::stream(cfg.seed, "bench.partition");
  const std::size_t parts = std::max<std::size_t>(
      1, (g.num_nodes() + batch_size - 1) / batch_size);
  const auto batches = labor::partition_batches(g.num_nodes(), parts, prng);
  const auto stats = labor::sampling_stats(nb, sc, batches, trials, cfg.seed);

  std::ostringstream out;
  out << "sampler";
  for (std::size_t l = 0; l < stats.vertices.size(); ++l) out << ",V" << l << ",E" << l;
  out << ",it_per_s\n" << labor::to_string(sc.kind);
  out.precision(10);
  for (std::size_t l = 0; l < stats.vertices.size(); ++l) {
    out << ',' << stats.vertices[l] << ',' << stats.edges[l];
  }
  out << ',' << stats.iterations_per_second << '\n';
  std::cout << out.str();
  if (!csv_path.empty()) std::ofstream(csv_path) << out.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"txfuse: account fraud detection from transaction text and graph structure"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> sets;
  Overrides common;
  app.add_option("-c,--config", config_path, "INI config file");
  app.add_option("--set", sets, "Override a config key, section.key=value (repeatable)");
  common.add(&app, "-o,--out", "run.out_dir", "Output directory");
  common.add(&app, "--seed", "run.seed", "Global seed (overrides TXFUSE_SEED)");
  common.add(&app, "--threads", "run.threads", "Worker threads");
  common.add(&app, "--cache", "run.cache_dir", "Reuse pretrained models from this directory");
  common.add(&app, "--input", "run.input", "Transfers (jsonl/csv) or edge list");
  common.add(&app, "--labels", "run.labels", "Labels CSV (address,label)");
  common.add(&app, "--format", "run.source", "synthetic, jsonl, csv or edges");
  common.add(&app, "--split", "run.split", "random or components");
  common.add_switch(&app, "--downsample", "run.downsample", "true",
                    "Keep 2 benign accounts per fraud account before splitting");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled transfer set");
  Overrides synth_o;
  synth_o.add(synth, "--accounts", "synth.n_accounts", "Labelled accounts");
  synth_o.add(synth, "--fraud-fraction", "synth.fraud_fraction", "Share of fraud accounts");

  auto* ingest = app.add_subcommand("ingest", "Parse transfers and labels, then split");
  auto* features = app.add_subcommand("features", "Build node features");
  Overrides feat_o;
  feat_o.add(features, "--long-window-days", "features.long_window_days", "Long window");
  feat_o.add(features, "--short-window-days", "features.short_window_days", "Short window");
  feat_o.add_switch(features, "--no-log-features", "features.log_transform", "false",
                    "Skip the signed log1p on count and amount columns");

  auto* lm = app.add_subcommand("pretrain-lm", "Pretrain the transaction language model");
  Overrides lm_o;
  lm_o.add(lm, "--d-lm", "txclm.d_lm", "Model width");
  lm_o.add(lm, "--layers", "txclm.layers", "Transformer layers");
  lm_o.add(lm, "--heads", "txclm.heads", "Attention heads");
  lm_o.add(lm, "--mask-ratio", "txclm.mask_ratio", "Token mask ratio");
  lm_o.add(lm, "--tau", "txclm.tau", "Contrastive temperature");
  lm_o.add(lm, "--epochs", "txclm.epochs", "Epochs");
  lm_o.add(lm, "--lr", "txclm.lr", "Learning rate");
  lm_o.add_switch(lm, "--no-contrastive", "run.ablation", "no-contrastive",
                  "Train with the masked-token loss only");

  auto* gae = app.add_subcommand("pretrain-gae", "Pretrain the masked graph autoencoder");
  Overrides gae_o;
  gae_o.add(gae, "--d-h", "magae.d_h", "Hidden width");
  gae_o.add(gae, "--mask-ratio", "magae.mask_ratio", "Node mask ratio");
  gae_o.add(gae, "--gamma", "magae.gamma", "Scaled cosine error exponent");
  gae_o.add(gae, "--fanout", "magae.fanouts", "Per-hop fanouts, decoder hop first");
  gae_o.add(gae, "--sampler", "magae.sampler", "labor, ns or full");
  gae_o.add(gae, "--epochs", "magae.epochs", "Epochs");
  gae_o.add(gae, "--lr", "magae.lr", "Learning rate");

  auto* fuse = app.add_subcommand("fuse-train", "Train the fusion classifier");
  Overrides fuse_o;
  fuse_o.add(fuse, "--ks", "cafn.k_s", "Aggregate tokens");
  fuse_o.add(fuse, "--kf", "cafn.k_f", "Fusion tokens");
  fuse_o.add(fuse, "--df", "cafn.d_f", "Fusion width");
  fuse_o.add(fuse, "--epochs", "cafn.epochs", "Epochs");
  fuse_o.add(fuse, "--lr", "cafn.lr", "Learning rate");
  fuse_o.add(fuse, "--ablate", "run.ablation", "none, add, linear, no-graph or no-lm");

  auto* evaluate = app.add_subcommand("evaluate", "Train end to end and report test metrics");
  auto* run = app.add_subcommand("run", "Run the whole pipeline");
  Overrides run_o;
  run_o.add(run, "--ablate", "run.ablation",
            "none, add, linear, no-graph, no-lm, no-contrastive or no-expert");

  auto* bench = app.add_subcommand("sample-bench", "Compare neighbour samplers");
  std::string graph_path, sampler = "labor", fanout = "10,10", csv_path;
  std::size_t trials = 100, batch_size = 256;
  bench->add_option("--graph", graph_path, "Edge list CSV; default is the synthetic graph");
  bench->add_option("--sampler", sampler, "labor, ns or full");
  bench->add_option("--fanout", fanout, "Per-layer fanouts");
  bench->add_option("--trials", trials, "Epoch repetitions");
  bench->add_option("--batch-size", batch_size, "Seed nodes per batch");
  bench->add_option("--csv", csv_path, "Also write the CSV row here");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = txfuse::harness::load_config(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value: " + s);
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    common.apply(cfg);

    if (bench->parsed()) {
      return sample_bench(cfg, graph_path, sampler, fanout, trials, batch_size, csv_path);
    }
    std::string until = "evaluate";
    if (synth->parsed()) {
      synth_o.apply(cfg);
      cfg.set("run.source", "synthetic");
      until = "synth";
    } else if (ingest->parsed()) {
      until = "split";
    } else if (features->parsed()) {
      feat_o.apply(cfg);
      until = "features";
    } else if (lm->parsed()) {
      lm_o.apply(cfg);
      until = "pretrain-lm";
    } else if (gae->parsed()) {
      gae_o.apply(cfg);
      until = "pretrain-gae";
    } else if (fuse->parsed()) {
      fuse_o.apply(cfg);
      until = "fuse-train";
    } else if (run->parsed()) {
      run_o.apply(cfg);
    } else if (!evaluate->parsed()) {
      return 2;
    }
    const auto rep = txfuse::harness::run_pipeline(cfg, until);
    print_report(rep, cfg);
    return rep.ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "txfuse: " << e.what() << '\n';
    return 2;
  }
}
