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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "txfuse/cafn/cafn.hpp"
#include "txfuse/graphbuild/features.hpp"
#include "txfuse/harness/split.hpp"
#include "txfuse/harness/synth.hpp"
#include "txfuse/magae/magae.hpp"
#include "txfuse/txclm/txclm.hpp"

namespace txfuse::harness {

enum class DataSource { kSynthetic, kJsonl, kCsv, kEdges };
enum class SplitStrategy { kRandom, kComponents };

// Pipeline-level ablations. add, linear, no-graph and no-lm select the
// fusion variant; no-contrastive drops the token contrastive loss and
// no-expert replaces the hand-crafted node features with noise.
enum class RunAblation { kNone, kAdd, kLinear, kNoGraph, kNoLm, kNoContrastive, kNoExpert };
RunAblation parse_run_ablation(const std::string& s);
std::string to_string(RunAblation a);

struct ExperimentConfig {
  DataSource source = DataSource::kSynthetic;
  SyntheticSpec synth;
  std::filesystem::path input;   // transfers (jsonl/csv) or edge list
  std::filesystem::path labels;  // address,label
  SplitStrategy split = SplitStrategy::kRandom;
  Ratios ratios = kDefaultRatios;
  bool downsample = false;
  double downsample_ratio = 2.0;
  RunAblation ablation = RunAblation::kNone;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::filesystem::path out_dir = "runs/default";
  std::filesystem::path cache_dir;  // reuse pretrained models across runs; empty disables

  std::size_t max_seq_len = txcorpus::kDefaultMaxSeqLen;
  std::size_t min_freq = 1;
  txclm::EncoderConfig encoder;
  txclm::PretrainConfig lm;
  graphbuild::FeatureOptions features;
  magae::MagaeConfig gae_model;
  magae::GaeTrainConfig gae;
  cafn::CafnConfig fusion;
  cafn::TrainConfig fuse;

  ExperimentConfig();

  // "section.key" = value, with the same spelling as the config file.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Fully resolved config as an INI document with sorted sections.
  std::string canonical() const;
  // Hash of the canonical form without run.out_dir, run.cache_dir and run.threads.
  std::uint64_t hash() const;
  void validate() const;
};

// Defaults, then the file (if any), then TXFUSE_SEED.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& ini_text);
void apply_seed_env(ExperimentConfig& config);

}  // namespace txfuse::harness
