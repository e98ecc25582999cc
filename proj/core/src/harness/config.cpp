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

#include "txfuse/harness/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "txfuse/common/rng.hpp"

namespace txfuse::harness {

namespace {

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Binding {
  Setter set;
  Getter get;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::invalid_argument("config " + key + ": expected a number, got '" + s + "'");
  }
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw std::invalid_argument("config " + key + ": expected a non-negative integer, got '" + s +
                                "'");
  }
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("config " + key + ": expected a boolean, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

// Binding helpers over an accessor returning a reference into the config.
template <class F>
Binding real(F ref) {
  return {[ref](ExperimentConfig& c, const std::string& v) { ref(c) = to_double("", v); },
          [ref](const ExperimentConfig& c) {
            return fmt(ref(const_cast<ExperimentConfig&>(c)));
          }};
}

template <class F>
Binding count(F ref) {
  return {[ref](ExperimentConfig& c, const std::string& v) {
            ref(c) = static_cast<std::remove_reference_t<decltype(ref(c))>>(to_uint("", v));
          },
          [ref](const ExperimentConfig& c) {
            return std::to_string(ref(const_cast<ExperimentConfig&>(c)));
          }};
}

template <class F>
Binding flag(F ref) {
  return {[ref](ExperimentConfig& c, const std::string& v) { ref(c) = to_bool("", v); },
          [ref](const ExperimentConfig& c) {
            return std::string(ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          }};
}

template <class F>
Binding path(F ref) {
  return {[ref](ExperimentConfig& c, const std::string& v) { ref(c) = v; },
          [ref](const ExperimentConfig& c) {
            return ref(const_cast<ExperimentConfig&>(c)).string();
          }};
}

#define TXF_REF(expr) [](ExperimentConfig& c) -> auto& { return expr; }

const std::map<std::string, Binding>& bindings() {
  static const std::map<std::string, Binding> table = [] {
    std::map<std::string, Binding> t;
    t["run.source"] = {
        [](ExperimentConfig& c, const std::string& v) {
          if (v == "synthetic") c.source = DataSource::kSynthetic;
          else if (v == "jsonl") c.source = DataSource::kJsonl;
          else if (v == "csv") c.source = DataSource::kCsv;
          else if (v == "edges") c.source = DataSource::kEdges;
          else throw std::invalid_argument("config run.source: unknown source '" + v + "'");
        },
        [](const ExperimentConfig& c) {
          switch (c.source) {
            case DataSource::kJsonl: return std::string("jsonl");
            case DataSource::kCsv: return std::string("csv");
            case DataSource::kEdges: return std::string("edges");
            default: return std::string("synthetic");
          }
        }};
    t["run.input"] = path(TXF_REF(c.input));
    t["run.labels"] = path(TXF_REF(c.labels));
    t["run.split"] = {
        [](ExperimentConfig& c, const std::string& v) {
          if (v == "random") c.split = SplitStrategy::kRandom;
          else if (v == "components") c.split = SplitStrategy::kComponents;
          else throw std::invalid_argument("config run.split: unknown strategy '" + v + "'");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.split == SplitStrategy::kRandom ? "random" : "components");
        }};
    t["run.ratios"] = {
        [](ExperimentConfig& c, const std::string& v) {
          auto parts = split_list(v);
          if (parts.size() != 3) throw std::invalid_argument("config run.ratios: need 3 values");
          for (int i = 0; i < 3; ++i) c.ratios[i] = to_double("run.ratios", parts[i]);
        },
        [](const ExperimentConfig& c) {
          return fmt(c.ratios[0]) + "," + fmt(c.ratios[1]) + "," + fmt(c.ratios[2]);
        }};
    t["run.downsample"] = flag(TXF_REF(c.downsample));
    t["run.downsample_ratio"] = real(TXF_REF(c.downsample_ratio));
    t["run.ablation"] = {
        [](ExperimentConfig& c, const std::string& v) { c.ablation = parse_run_ablation(v); },
        [](const ExperimentConfig& c) { return to_string(c.ablation); }};
    t["run.seed"] = count(TXF_REF(c.seed));
    t["run.threads"] = count(TXF_REF(c.threads));
    t["run.out_dir"] = path(TXF_REF(c.out_dir));
    t["run.cache_dir"] = path(TXF_REF(c.cache_dir));

    t["synth.n_accounts"] = count(TXF_REF(c.synth.n_accounts));
    t["synth.fraud_fraction"] = real(TXF_REF(c.synth.fraud_fraction));
    t["synth.horizon_days"] = real(TXF_REF(c.synth.horizon_days));
    t["synth.community_size"] = count(TXF_REF(c.synth.community_size));
    t["synth.contacts"] = count(TXF_REF(c.synth.contacts));
    t["synth.fanout_degree"] = count(TXF_REF(c.synth.fanout_degree));
    t["synth.hubs"] = count(TXF_REF(c.synth.hubs));
    t["synth.hub_probability"] = real(TXF_REF(c.synth.hub_probability));
    t["synth.fraud_all_traits"] = real(TXF_REF(c.synth.fraud_all_traits));
    t["synth.normal_one_trait"] = real(TXF_REF(c.synth.normal_one_trait));
    t["synth.night_share"] = real(TXF_REF(c.synth.night_share));
    t["synth.normal_tx_mean"] = real(TXF_REF(c.synth.normal.tx_mean));
    t["synth.normal_lifetime_min_days"] = real(TXF_REF(c.synth.normal.lifetime_min_days));
    t["synth.normal_lifetime_max_days"] = real(TXF_REF(c.synth.normal.lifetime_max_days));
    t["synth.normal_amount_mu"] = real(TXF_REF(c.synth.normal.amount_mu));
    t["synth.normal_amount_sigma"] = real(TXF_REF(c.synth.normal.amount_sigma));
    t["synth.normal_burstiness"] = real(TXF_REF(c.synth.normal.burstiness));
    t["synth.fraud_tx_mean"] = real(TXF_REF(c.synth.fraud.tx_mean));
    t["synth.fraud_lifetime_min_days"] = real(TXF_REF(c.synth.fraud.lifetime_min_days));
    t["synth.fraud_lifetime_max_days"] = real(TXF_REF(c.synth.fraud.lifetime_max_days));
    t["synth.fraud_amount_mu"] = real(TXF_REF(c.synth.fraud.amount_mu));
    t["synth.fraud_amount_sigma"] = real(TXF_REF(c.synth.fraud.amount_sigma));
    t["synth.fraud_burstiness"] = real(TXF_REF(c.synth.fraud.burstiness));

    t["corpus.max_seq_len"] = count(TXF_REF(c.max_seq_len));
    t["corpus.min_freq"] = count(TXF_REF(c.min_freq));

    t["txclm.d_lm"] = count(TXF_REF(c.encoder.d_lm));
    t["txclm.layers"] = count(TXF_REF(c.encoder.layers));
    t["txclm.heads"] = count(TXF_REF(c.encoder.heads));
    t["txclm.mask_ratio"] = real(TXF_REF(c.lm.mask_ratio));
    t["txclm.tau"] = real(TXF_REF(c.lm.tau));
    t["txclm.contrastive_weight"] = real(TXF_REF(c.lm.contrastive_weight));
    t["txclm.epochs"] = count(TXF_REF(c.lm.epochs));
    t["txclm.batch_size"] = count(TXF_REF(c.lm.batch_size));
    t["txclm.lr"] = real(TXF_REF(c.lm.lr));

    t["features.long_window_days"] = {
        [](ExperimentConfig& c, const std::string& v) {
          c.features.long_window = static_cast<std::int64_t>(to_uint("features", v)) * 86400;
        },
        [](const ExperimentConfig& c) { return std::to_string(c.features.long_window / 86400); }};
    t["features.short_window_days"] = {
        [](ExperimentConfig& c, const std::string& v) {
          c.features.short_window = static_cast<std::int64_t>(to_uint("features", v)) * 86400;
        },
        [](const ExperimentConfig& c) {
          return std::to_string(c.features.short_window / 86400);
        }};
    t["features.log_transform"] = flag(TXF_REF(c.features.log_transform));

    t["magae.d_h"] = count(TXF_REF(c.gae_model.d_h));
    t["magae.layers"] = count(TXF_REF(c.gae_model.layers));
    t["magae.mask_ratio"] = real(TXF_REF(c.gae.mask_ratio));
    t["magae.gamma"] = real(TXF_REF(c.gae.gamma));
    t["magae.fanouts"] = {
        [](ExperimentConfig& c, const std::string& v) {
          c.gae.fanouts.clear();
          for (const auto& f : split_list(v)) c.gae.fanouts.push_back(to_uint("magae.fanouts", f));
          if (c.gae.fanouts.empty()) throw std::invalid_argument("config magae.fanouts: empty");
        },
        [](const ExperimentConfig& c) {
          std::string s;
          for (auto f : c.gae.fanouts) s += (s.empty() ? "" : ",") + std::to_string(f);
          return s;
        }};
    t["magae.sampler"] = {
        [](ExperimentConfig& c, const std::string& v) { c.gae.sampler = labor::parse_sampler(v); },
        [](const ExperimentConfig& c) { return labor::to_string(c.gae.sampler); }};
    t["magae.direction"] = {
        [](ExperimentConfig& c, const std::string& v) {
          c.gae.direction = labor::parse_direction(v);
        },
        [](const ExperimentConfig& c) { return labor::to_string(c.gae.direction); }};
    t["magae.edge_weights"] = flag(TXF_REF(c.gae.aggregation.edge_weights));
    t["magae.debias"] = flag(TXF_REF(c.gae.aggregation.debias));
    t["magae.batch_size"] = count(TXF_REF(c.gae.batch_size));
    t["magae.epochs"] = count(TXF_REF(c.gae.epochs));
    t["magae.lr"] = real(TXF_REF(c.gae.lr));

    t["cafn.d_f"] = count(TXF_REF(c.fusion.d_f));
    t["cafn.k_s"] = count(TXF_REF(c.fusion.k_s));
    t["cafn.k_f"] = count(TXF_REF(c.fusion.k_f));
    t["cafn.epochs"] = count(TXF_REF(c.fuse.epochs));
    t["cafn.batch_size"] = count(TXF_REF(c.fuse.batch_size));
    t["cafn.lr"] = real(TXF_REF(c.fuse.lr));
    t["cafn.patience"] = count(TXF_REF(c.fuse.patience));
    t["cafn.class_weighting"] = flag(TXF_REF(c.fuse.class_weighting));
    return t;
  }();
  return table;
}

#undef TXF_REF

}  // namespace

RunAblation parse_run_ablation(const std::string& s) {
  if (s == "none") return RunAblation::kNone;
  if (s == "add") return RunAblation::kAdd;
  if (s == "linear") return RunAblation::kLinear;
  if (s == "no-graph") return RunAblation::kNoGraph;
  if (s == "no-lm") return RunAblation::kNoLm;
  if (s == "no-contrastive") return RunAblation::kNoContrastive;
  if (s == "no-expert") return RunAblation::kNoExpert;
  throw std::invalid_argument("unknown ablation '" + s + "'");
}

std::string to_string(RunAblation a) {
  switch (a) {
    case RunAblation::kNone: return "none";
    case RunAblation::kAdd: return "add";
    case RunAblation::kLinear: return "linear";
    case RunAblation::kNoGraph: return "no-graph";
    case RunAblation::kNoLm: return "no-lm";
    case RunAblation::kNoContrastive: return "no-contrastive";
    case RunAblation::kNoExpert: return "no-expert";
  }
  return "?";
}

ExperimentConfig::ExperimentConfig() { gae_model.d_node = graphbuild::kNumFeatures; }

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto it = bindings().find(key);
  if (it == bindings().end()) throw std::invalid_argument("unknown config key '" + key + "'");
  try {
    it->second.set(*this, value);
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    // Helpers report "config : ..." without the key; put it back.
    if (msg.rfind("config :", 0) == 0) {
      throw std::invalid_argument("config " + key + msg.substr(7));
    }
    throw;
  }
}

std::string ExperimentConfig::get(const std::string& key) const {
  auto it = bindings().find(key);
  if (it == bindings().end()) throw std::invalid_argument("unknown config key '" + key + "'");
  return it->second.get(*this);
}

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : bindings()) k.push_back(name);
    return k;
  }();
  return out;
}

std::string ExperimentConfig::canonical() const {
  boost::property_tree::ptree tree;
  for (const auto& key : keys()) tree.put(key, get(key));
  std::ostringstream os;
  boost::property_tree::write_ini(os, tree);
  return os.str();
}

std::uint64_t ExperimentConfig::hash() const {
  // Where a run writes and how many threads it uses do not change results.
  boost::property_tree::ptree tree;
  for (const auto& key : keys()) {
    if (key != "run.out_dir" && key != "run.cache_dir" && key != "run.threads") tree.put(key, get(key));
  }
  std::ostringstream os;
  boost::property_tree::write_ini(os, tree);
  return fnv1a64(os.str());
}

void ExperimentConfig::validate() const {
  if (source == DataSource::kSynthetic) {
    synth.validate();
  } else if (input.empty() || labels.empty()) {
    throw std::invalid_argument("config: run.input and run.labels are required for file sources");
  }
  if (out_dir.empty()) throw std::invalid_argument("config: run.out_dir is empty");
  if (threads == 0) throw std::invalid_argument("config: run.threads must be >= 1");
  if (encoder.heads == 0 || encoder.d_lm % encoder.heads != 0) {
    throw std::invalid_argument("config: txclm.d_lm must be divisible by txclm.heads");
  }
  if (!(downsample_ratio > 0.0)) throw std::invalid_argument("config: downsample_ratio <= 0");
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw std::invalid_argument("config: run.ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("config: run.ratios must sum to 1");
  if (features.short_window <= 0 || features.long_window <= features.short_window) {
    throw std::invalid_argument("config: need 0 < short_window_days < long_window_days");
  }
}

ExperimentConfig parse_config(const std::string& ini_text) {
  boost::property_tree::ptree tree;
  std::istringstream in(ini_text);
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw std::invalid_argument("config: key '" + section + "' outside a section");
    }
    for (const auto& [key, value] : body) cfg.set(section + "." + key, value.data());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  ExperimentConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_config(ss.str());
  }
  apply_seed_env(cfg);
  return cfg;
}

void apply_seed_env(ExperimentConfig& config) {
  if (const char* s = std::getenv("TXFUSE_SEED"); s && *s) config.set("run.seed", s);
}

}  // namespace txfuse::harness
