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

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "txfuse/cafn/cafn.hpp"
#include "txfuse/harness/config.hpp"

namespace txfuse::harness {

// Stage names in execution order. A run stops after `until`.
const std::vector<std::string>& stage_names();

struct RunReport {
  bool ok = false;
  std::string failed_stage;
  std::string error;
  std::vector<std::string> stages;  // stages that ran, in order
  std::optional<cafn::Metrics> test, val;
  std::map<std::string, std::string> checksums;
  nlohmann::json manifest;
};

// Runs the pipeline in config.out_dir, which is locked for the duration.
// Stage failures are reported (and written to the manifest), not thrown.
RunReport run_pipeline(const ExperimentConfig& config, const std::string& until = "evaluate");

// The manifest without its "runtime" block (timestamps, durations, cache use).
nlohmann::json reproducible_part(const nlohmann::json& manifest);

nlohmann::json metrics_json(const cafn::Metrics& m);

// Holds <dir>/.txfuse.lock; throws if another run owns the directory.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace txfuse::harness
