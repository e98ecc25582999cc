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

#include "txfuse/harness/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <sstream>

#include "txfuse/common/parallel.hpp"
#include "txfuse/graphbuild/graph.hpp"
#include "txfuse/labor/labor.hpp"
#include "txfuse/numcore/checkpoint.hpp"
#include "txfuse/txcorpus/vocab.hpp"

#ifndef TXFUSE_VERSION_STRING
#define TXFUSE_VERSION_STRING "unknown"
#endif

namespace txfuse::harness {

namespace fs = std::filesystem;
using numcore::Tensor;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t params_checksum(numcore::ParamList params) {
  return fnv1a64(numcore::encode_checkpoint(params));
}

std::uint64_t tensor_checksum(const Tensor& t, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = reinterpret_cast<const char*>(t.data().data());
  return fnv1a64(std::string_view(p, t.size() * sizeof(double)), h);
}

struct State {
  std::vector<txcorpus::Transfer> transfers;
  std::size_t rejects = 0, self_transfers = 0, missing_labels = 0;
  std::map<std::string, int> label_map;
  graphbuild::AccountGraph graph;
  bool has_transactions = false;

  std::vector<std::string> accounts;
  std::vector<std::uint32_t> nodes;
  std::vector<int> labels;
  Split split;
  std::optional<std::size_t> cross_edges;
  std::size_t components = 0;

  std::vector<txcorpus::TransactionSentence> sentences;
  txcorpus::Vocabulary vocab;
  std::optional<txclm::EncoderParams> encoder;

  graphbuild::NodeFeatureMatrix features;
  Tensor gae_input;
  std::optional<magae::MagaeParams> gae;
  Tensor embeddings;

  cafn::FusionDataset data;
  std::optional<cafn::TrainResult> trained;
};

cafn::Ablation fusion_ablation(RunAblation a, bool use_lm, bool use_graph) {
  if (!use_lm) return cafn::Ablation::kNoLm;
  if (!use_graph) return cafn::Ablation::kNoGraph;
  if (a == RunAblation::kAdd) return cafn::Ablation::kAdd;
  if (a == RunAblation::kLinear) return cafn::Ablation::kLinear;
  return cafn::Ablation::kNone;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

void write_predictions(const fs::path& path, const State& st, const Tensor& proba,
                       const std::vector<std::size_t>& ids, const char* split, bool append) {
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  out.precision(17);
  if (!append) out << "address,split,label,p_fraud,prediction\n";
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out << st.accounts[ids[r]] << ',' << split << ',' << st.labels[ids[r]] << ','
        << proba.at(r, 1) << ',' << (proba.at(r, 1) > proba.at(r, 0) ? 1 : 0) << '\n';
  }
}

// Binary matrix (checkpoint format, one tensor), id map and a CSV copy.
void write_embeddings(const fs::path& dir, Tensor emb, const graphbuild::AccountGraph& g) {
  fs::create_directories(dir);
  numcore::save_checkpoint(dir / "embeddings.bin", {{"embeddings", &emb}});
  std::ofstream ids(dir / "embedding_ids.txt");
  for (const auto& id : g.ids()) ids << id << '\n';
  std::ofstream csv(dir / "embeddings.csv");
  csv.precision(17);
  csv << "address";
  for (std::size_t j = 0; j < emb.cols(); ++j) csv << ",h" << j;
  csv << '\n';
  for (std::size_t v = 0; v < emb.rows(); ++v) {
    csv << g.id(static_cast<std::uint32_t>(v));
    for (double x : emb.row(v)) csv << ',' << x;
    csv << '\n';
  }
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"synth",       "ingest",   "split",
                                                 "corpus",      "pretrain-lm", "features",
                                                 "pretrain-gae", "fuse-train", "evaluate"};
  return names;
}

nlohmann::json metrics_json(const cafn::Metrics& m) {
  return {{"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"bacc", m.bacc},
          {"tp", m.tp},
          {"fp", m.fp},
          {"tn", m.tn},
          {"fn", m.fn},
          {"precision_undefined", m.precision_undefined},
          {"recall_undefined", m.recall_undefined}};
}

nlohmann::json reproducible_part(const nlohmann::json& manifest) {
  nlohmann::json out = manifest;
  out.erase("runtime");
  return out;
}

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".txfuse.lock") {
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw std::runtime_error("output directory " + dir.string() +
                             " is locked by another run (remove " + path_.string() +
                             " if that run is gone)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

RunReport run_pipeline(const ExperimentConfig& config, const std::string& until) {
  ExperimentConfig cfg = config;
  cfg.validate();
  const auto& names = stage_names();
  const auto until_it = std::find(names.begin(), names.end(), until);
  if (until_it == names.end()) throw std::invalid_argument("unknown stage '" + until + "'");
  const auto until_index = static_cast<std::size_t>(until_it - names.begin());

  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  DirectoryLock lock(out);
  std::ofstream(out / "config.ini") << cfg.canonical();

  const bool use_lm = cfg.ablation != RunAblation::kNoLm && cfg.source != DataSource::kEdges;
  const bool use_graph = cfg.ablation != RunAblation::kNoGraph;
  const std::size_t threads = cfg.threads;
  const std::uint64_t seed = cfg.seed;

  State st;
  RunReport rep;
  nlohmann::json data_info, training, runtime;
  nlohmann::json stage_seconds = nlohmann::json::object();
  std::vector<std::string> cache_hits;
  runtime["started_at"] = utc_now();

  auto cached = [&](const std::string& kind, std::uint64_t key) -> fs::path {
    if (cfg.cache_dir.empty()) return {};
    return cfg.cache_dir / (kind + "-" + hex64(key));
  };

  std::vector<std::pair<std::string, std::function<void()>>> plan;
  plan.emplace_back("synth", [&] {
    SyntheticData d = synth_generate(cfg.synth, seed);
    write_synthetic(d, out / "data");
    data_info["synthetic_fraud"] = std::count_if(d.labels.begin(), d.labels.end(),
                                                 [](const auto& kv) { return kv.second == 1; });
  });
  plan.emplace_back("ingest", [&] {
    fs::path input = cfg.input, labels = cfg.labels;
    if (cfg.source == DataSource::kSynthetic) {
      input = out / "data" / "transfers.jsonl";
      labels = out / "data" / "labels.csv";
    }
    std::ifstream in(input);
    if (!in) throw std::runtime_error("cannot open input " + input.string());
    if (cfg.source == DataSource::kEdges) {
      st.graph = graphbuild::AccountGraph::from_edges(graphbuild::parse_edge_list(in));
    } else {
      auto res = txcorpus::parse_transfers(in, cfg.source == DataSource::kCsv
                                                   ? txcorpus::InputFormat::kCsv
                                                   : txcorpus::InputFormat::kJsonLines);
      st.transfers = std::move(res.transfers);
      st.rejects = res.rejects.size();
      st.self_transfers = res.self_transfers;
      if (st.transfers.empty()) throw std::runtime_error("no valid transfers in " + input.string());
      st.graph = graphbuild::AccountGraph::from_transfers(st.transfers);
      st.has_transactions = true;
    }
    st.label_map = read_labels(labels);
    for (const auto& [addr, y] : st.label_map) {
      if (auto v = st.graph.index_of(addr)) {
        st.accounts.push_back(addr);
        st.nodes.push_back(*v);
        st.labels.push_back(y);
      } else {
        ++st.missing_labels;
      }
    }
    data_info["transfers"] = st.transfers.size();
    data_info["rejected_lines"] = st.rejects;
    data_info["self_transfers"] = st.self_transfers;
    data_info["labelled_without_activity"] = st.missing_labels;
  });
  plan.emplace_back("split", [&] {
    if (cfg.downsample) {
      const auto keep = downsample_benign(st.labels, cfg.downsample_ratio, seed);
      std::vector<std::string> accounts;
      std::vector<std::uint32_t> nodes;
      std::vector<int> labels;
      for (auto i : keep) {
        accounts.push_back(st.accounts[i]);
        nodes.push_back(st.nodes[i]);
        labels.push_back(st.labels[i]);
      }
      // The graph is rebuilt over the sampled accounts only.
      st.graph = st.graph.induced(nodes);
      for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = static_cast<std::uint32_t>(i);
      st.accounts = std::move(accounts);
      st.nodes = std::move(nodes);
      st.labels = std::move(labels);
    }
    if (cfg.split == SplitStrategy::kRandom) {
      st.split = split_random(st.labels, cfg.ratios, seed);
    } else {
      ComponentSplit cs = split_components(st.graph, st.nodes, st.labels, cfg.ratios, seed);
      st.cross_edges = cross_split_edges(st.graph, cs.node_split);
      if (*st.cross_edges != 0) throw std::logic_error("component split leaked edges");
      st.components = cs.components;
      st.split = std::move(cs.split);
    }
    data_info["accounts"] = st.accounts.size();
    data_info["fraud"] = std::count(st.labels.begin(), st.labels.end(), 1);
    data_info["nodes"] = st.graph.num_nodes();
    data_info["edges"] = st.graph.num_edges();
    data_info["split_sizes"] = {st.split.train.size(), st.split.val.size(), st.split.test.size()};
    if (st.cross_edges) {
      data_info["cross_split_edges"] = *st.cross_edges;
      data_info["components"] = st.components;
    }
  });
  plan.emplace_back("corpus", [&] {
    const auto history = txcorpus::group_by_account(st.transfers);
    std::vector<txcorpus::TokenSentence> tokens;
    static const std::vector<txcorpus::TransactionRecord> kEmpty;
    for (const auto& a : st.accounts) {
      auto it = history.find(a);
      tokens.push_back(
          txcorpus::build_sentence(a, it == history.end() ? kEmpty : it->second, cfg.max_seq_len));
    }
    st.vocab = txcorpus::Vocabulary::build(tokens, cfg.min_freq);
    st.sentences = txcorpus::encode_corpus(tokens, st.vocab);
    fs::create_directories(out / "corpus");
    st.vocab.save(out / "corpus" / "vocab.txt");
    std::ofstream corpus(out / "corpus" / "corpus.txt");
    txcorpus::write_corpus(corpus, st.sentences);
    data_info["vocab_size"] = st.vocab.size();
    data_info["degenerate_sentences"] =
        std::count_if(st.sentences.begin(), st.sentences.end(), [](auto& s) { return s.degenerate; });
  });
  plan.emplace_back("pretrain-lm", [&] {
    txclm::EncoderConfig ec = cfg.encoder;
    ec.vocab_size = st.vocab.size();
    ec.max_seq_len = cfg.max_seq_len;
    txclm::PretrainConfig pc = cfg.lm;
    pc.seed = seed;
    pc.threads = threads;
    pc.contrastive = cfg.ablation != RunAblation::kNoContrastive;
    pc.checkpoint_dir = out / "txclm";
    std::vector<txcorpus::TransactionSentence> corpus;
    for (const auto& s : st.sentences) {
      if (!s.degenerate) corpus.push_back(s);
    }
    std::ostringstream key;
    txcorpus::write_corpus(key, corpus);
    for (const auto& k : ExperimentConfig::keys()) {
      if (k.rfind("txclm.", 0) == 0 || k.rfind("corpus.", 0) == 0) key << k << '=' << cfg.get(k);
    }
    key << seed << pc.contrastive << st.vocab.size();
    const fs::path cache = cached("txclm", fnv1a64(key.str()));
    if (!cache.empty() && fs::exists(cache / "summary.json")) {
      st.encoder = txclm::EncoderParams::load(cache);
      training["txclm_final"] = read_json(cache / "summary.json");
      cache_hits.push_back("pretrain-lm");
      st.encoder->save(pc.checkpoint_dir / "final");
    } else {
      auto res = txclm::pretrain(corpus, ec, pc);
      st.encoder = std::move(res.params);
      const auto& last = res.log.back();
      training["txclm_final"] = {{"mlm", last.mlm}, {"contrastive", last.contrastive},
                                 {"combined", last.combined}};
      if (!cache.empty()) {
        st.encoder->save(cache);
        std::ofstream(cache / "summary.json") << training["txclm_final"].dump() << '\n';
      }
    }
    rep.checksums["txclm"] = hex64(params_checksum(st.encoder->params()));
  });
  plan.emplace_back("features", [&] {
    std::vector<std::uint32_t> fit;
    for (auto i : st.split.train) fit.push_back(st.nodes[i]);
    graphbuild::FeatureOptions fo = cfg.features;
    fo.centrality.seed = seed;
    fo.centrality.threads = threads;
    st.features = graphbuild::assemble_features(st.graph, fit, fo);
    fs::create_directories(out / "features");
    st.features.write_csv(out / "features" / "features.csv", st.graph);
    st.features.write_metadata(out / "features" / "metadata.json");
    st.gae_input = st.features.values;
    if (cfg.ablation == RunAblation::kNoExpert) {
      Rng noise = Rng::stream(seed, "harness.no_expert");
      for (double& v : st.gae_input.data()) v = noise.normal();
    }
    rep.checksums["features"] = hex64(tensor_checksum(st.features.values));
  });
  plan.emplace_back("pretrain-gae", [&] {
    const auto nb = labor::Neighborhood::build(st.graph, cfg.gae.direction);
    magae::MagaeConfig mc = cfg.gae_model;
    mc.d_node = st.gae_input.cols();
    magae::GaeTrainConfig gc = cfg.gae;
    gc.seed = seed;
    gc.threads = threads;
    gc.checkpoint_dir = out / "magae";
    std::ostringstream key;
    for (const auto& k : ExperimentConfig::keys()) {
      if (k.rfind("magae.", 0) == 0) key << k << '=' << cfg.get(k);
    }
    key << seed << st.graph.num_nodes() << st.graph.num_edges();
    const fs::path cache =
        cached("magae", tensor_checksum(st.gae_input, fnv1a64(key.str())));
    if (!cache.empty() && fs::exists(cache / "summary.json")) {
      st.gae = magae::MagaeParams::load(cache);
      training["magae_final_sce"] = read_json(cache / "summary.json").at("sce");
      cache_hits.push_back("pretrain-gae");
      st.gae->save(gc.checkpoint_dir / "final");
    } else {
      auto res = magae::pretrain(nb, st.gae_input, mc, gc);
      st.gae = std::move(res.params);
      training["magae_final_sce"] = res.log.back().sce;
      if (!cache.empty()) {
        st.gae->save(cache);
        std::ofstream(cache / "summary.json")
            << nlohmann::json{{"sce", res.log.back().sce}}.dump() << '\n';
      }
    }
    st.embeddings = magae::infer_embeddings(nb, st.gae_input, *st.gae, gc.aggregation);
    write_embeddings(gc.checkpoint_dir, st.embeddings, st.graph);
    rep.checksums["magae"] = hex64(params_checksum(st.gae->params()));
    rep.checksums["embeddings"] = hex64(tensor_checksum(st.embeddings));
  });
  plan.emplace_back("fuse-train", [&] {
    cafn::CafnConfig fc = cfg.fusion;
    fc.d_s = cfg.encoder.d_lm;
    fc.d_h = cfg.gae_model.d_h;
    fc.ablation = fusion_ablation(cfg.ablation, use_lm, use_graph);
    const std::size_t n = st.accounts.size();
    st.data.labels = st.labels;
    st.data.semantic.assign(n, Tensor({1, fc.d_s}));
    st.data.degenerate.assign(n, !use_lm);
    if (use_lm) {
      parallel_for(
          n,
          [&](std::size_t i) {
            st.data.semantic[i] = txclm::account_embedding(*st.encoder, st.sentences[i].ids);
          },
          threads);
      for (std::size_t i = 0; i < n; ++i) st.data.degenerate[i] = st.sentences[i].degenerate;
    }
    st.data.graph = Tensor({n, fc.d_h});
    if (use_graph) {
      for (std::size_t i = 0; i < n; ++i) {
        auto src = st.embeddings.row(st.nodes[i]);
        std::copy(src.begin(), src.end(), st.data.graph.row(i).begin());
      }
    }
    cafn::TrainConfig tc = cfg.fuse;
    tc.seed = seed;
    tc.threads = threads;
    tc.checkpoint_dir = out / "cafn";
    st.trained = cafn::train(st.data, st.split.train, st.split.val, fc, tc);
    training["cafn_best_epoch"] = st.trained->best_epoch;
    training["cafn_best_val_f1"] = st.trained->best_val_f1;
    training["cafn_epochs_run"] = st.trained->log.size();
    rep.checksums["cafn"] = hex64(params_checksum(st.trained->params.params()));
  });
  plan.emplace_back("evaluate", [&] {
    const auto& p = st.trained->params;
    Tensor test = cafn::predict_proba(p, st.data, st.split.test, threads);
    Tensor val = cafn::predict_proba(p, st.data, st.split.val, threads);
    auto gold = [&](const std::vector<std::size_t>& ids) {
      std::vector<int> y;
      for (auto i : ids) y.push_back(st.labels[i]);
      return y;
    };
    rep.test = cafn::metrics(cafn::predict(test), gold(st.split.test));
    rep.val = cafn::metrics(cafn::predict(val), gold(st.split.val));
    write_predictions(out / "predictions.csv", st, test, st.split.test, "test", false);
    write_predictions(out / "predictions.csv", st, val, st.split.val, "val", true);
    std::ofstream csv(out / "metrics.csv");
    csv.precision(6);
    csv << std::fixed << "split,Precision,Recall,F1,BAcc,TP,FP,TN,FN\n";
    for (const auto& [name, m] : {std::pair{"test", *rep.test}, std::pair{"val", *rep.val}}) {
      csv << name << ',' << m.precision << ',' << m.recall << ',' << m.f1 << ',' << m.bacc << ','
          << m.tp << ',' << m.fp << ',' << m.tn << ',' << m.fn << '\n';
    }
    std::ofstream(out / "metrics.json")
        << nlohmann::json{{"test", metrics_json(*rep.test)}, {"val", metrics_json(*rep.val)}}.dump(2)
        << '\n';
  });

  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& [name, fn] = plan[i];
    const bool enabled = !((name == "synth" && cfg.source != DataSource::kSynthetic) ||
                           ((name == "corpus" || name == "pretrain-lm") && !use_lm) ||
                           ((name == "features" || name == "pretrain-gae") && !use_graph));
    if (enabled) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        fn();
      } catch (const std::exception& e) {
        rep.failed_stage = name;
        rep.error = e.what();
        break;
      }
      stage_seconds[name] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rep.stages.push_back(name);
    }
    if (i >= until_index) break;
  }
  rep.ok = rep.failed_stage.empty();

  runtime["finished_at"] = utc_now();
  runtime["stage_seconds"] = stage_seconds;
  runtime["cache_hits"] = cache_hits;
  nlohmann::json m;
  m["tool"] = "txfuse";
  m["version"] = TXFUSE_VERSION_STRING;
  m["config_hash"] = hex64(cfg.hash());
  m["seed"] = seed;
  m["ablation"] = to_string(cfg.ablation);
  m["status"] = rep.ok ? "ok" : "failed";
  if (!rep.ok) {
    m["failed_stage"] = rep.failed_stage;
    m["error"] = rep.error;
  }
  m["stages"] = rep.stages;
  m["data"] = data_info;
  m["training"] = training;
  m["checksums"] = rep.checksums;
  if (rep.test) m["metrics"] = {{"test", metrics_json(*rep.test)}, {"val", metrics_json(*rep.val)}};
  m["runtime"] = runtime;
  std::ofstream(out / "manifest.json") << m.dump(2) << '\n';
  rep.manifest = std::move(m);
  return rep;
}

}  // namespace txfuse::harness
