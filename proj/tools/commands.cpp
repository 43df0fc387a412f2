// Copyright 2026 The KGPFN Authors.
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

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kgpfn/contextkit.hpp"
#include "kgpfn/error.hpp"
#include "kgpfn/evalkit.hpp"
#include "kgpfn/gradsuite.hpp"
#include "kgpfn/kgstore.hpp"
#include "kgpfn/objectives.hpp"
#include "kgpfn/oracle.hpp"
#include "kgpfn/relgraph.hpp"
#include "run_config.hpp"

namespace kgpfn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kSetting = "tail-on-augmented-graph";

struct Dataset {
  std::string name;
  fs::path dir;
  kg::LoadResult train, test;
  std::vector<kg::Triple> valid, test_queries;
};

// Inference-side view: augmented observed graph, its relation graph and the
// filtered query set.
struct InferenceGraph {
  kg::KnowledgeGraph graph;
  rel::RelationGraph relations;
  kg::QuerySet queries;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void log_line(const std::string& msg) { std::cerr << "[kgpfn] " << msg << '\n'; }

Dataset load_dataset(const RunConfig& cfg) {
  Dataset d;
  if (!cfg.synthetic_spec.empty()) {
    const auto spec = kg::load_synthetic_spec(cfg.synthetic_spec);
    d.dir = cfg.out() / "data";
    kg::write_dataset(d.dir, kg::generate_synthetic(spec, spec.seed));
    d.name = fs::path(cfg.synthetic_spec).stem().string();
  } else {
    if (cfg.data_dir.empty()) fail(ErrorKind::kConfig, "either data_dir or synthetic_spec is required");
    d.dir = cfg.data_dir;
    d.name = fs::path(cfg.data_dir).filename().string();
    if (d.name.empty()) d.name = fs::path(cfg.data_dir).parent_path().filename().string();
  }
  if (!cfg.dataset_name.empty()) d.name = cfg.dataset_name;
  for (const char* f : {"train.txt", "test_graph.txt", "test_queries.txt"})
    if (!fs::exists(d.dir / f)) fail(ErrorKind::kIo, "dataset file missing: " + (d.dir / f).string());
  d.train = kg::load_tsv(d.dir / "train.txt");
  if (fs::exists(d.dir / "valid.txt"))
    d.valid = kg::load_triples(d.dir / "valid.txt", d.train.graph.entities(),
                               d.train.graph.relations());
  d.test = kg::load_tsv(d.dir / "test_graph.txt");
  d.test_queries = kg::load_triples(d.dir / "test_queries.txt", d.test.graph.entities(),
                                    d.test.graph.relations());
  return d;
}

InferenceGraph inference_graph(const Dataset& d) {
  InferenceGraph ig;
  ig.graph = d.test.graph.augment_inverses();
  ig.relations = rel::build_relation_graph(ig.graph);
  ig.queries = kg::build_query_set(ig.graph, d.test_queries, {d.test.graph.triples(), d.test_queries});
  return ig;
}

eval::EvalOptions eval_options(const RunConfig& cfg) {
  eval::EvalOptions o;
  o.m_plus = cfg.m_plus;
  o.m_minus = cfg.m_minus;
  o.hops = cfg.hops;
  o.node_cap = cfg.node_cap;
  o.threads = resolve_threads(cfg);
  o.max_queries = cfg.max_queries;
  return o;
}

template <typename T>
ModelParams<T> load_model(const RunConfig& cfg) {
  const auto paths = CheckpointPaths::in(cfg.checkpoint());
  if (!fs::exists(paths.manifest) || !fs::exists(paths.data))
    fail(ErrorKind::kIo, "missing checkpoint in " + cfg.checkpoint().string());
  return load_checkpoint<T>(paths);
}

json graph_stats(const kg::LoadResult& r) {
  return {{"entities", r.graph.num_entities()},
          {"relations", r.graph.num_original_relations()},
          {"triples", r.graph.num_triples()},
          {"duplicates", r.duplicates}};
}

int cmd_ingest(const RunConfig& cfg) {
  const Dataset d = load_dataset(cfg);
  const InferenceGraph ig = inference_graph(d);
  const auto train_aug = d.train.graph.augment_inverses();
  const auto train_rg = rel::build_relation_graph(train_aug);
  json edges;
  for (std::size_t s = 0; s < rel::kInteractionTypes; ++s)
    edges[rel::to_string(static_cast<rel::Interaction>(s))] = ig.relations.edges[s].size();
  write_json(cfg.out() / "ingest.json", {{"dataset", d.name},
                                         {"train", graph_stats(d.train)},
                                         {"valid_triples", d.valid.size()},
                                         {"test_graph", graph_stats(d.test)},
                                         {"test_queries", d.test_queries.size()},
                                         {"eval_queries", ig.queries.size()},
                                         {"test_relation_graph_edges", edges}});
  rel::write_relation_graph_csv(cfg.out() / "relation_graph_test.csv", ig.relations, &ig.graph);
  rel::write_relation_graph_csv(cfg.out() / "relation_graph_train.csv", train_rg, &train_aug);
  log_line("ingested " + d.name + ": " + std::to_string(d.train.graph.num_triples()) +
           " train triples, " + std::to_string(ig.queries.size()) + " evaluation queries");
  return 0;
}

std::vector<kg::RelationId> training_relations(const RunConfig& cfg, const kg::KnowledgeGraph& aug) {
  std::vector<kg::RelationId> ids;
  for (const auto& name : cfg.train_relations) {
    const auto id = aug.relations().find(name);
    if (!id) fail(ErrorKind::kVocabulary, "train relation '" + name + "' not in the training graph");
    ids.push_back(*id);
    ids.push_back(aug.inverse(*id));
  }
  return ids;
}

template <typename T>
int cmd_train(const RunConfig& cfg) {
  const Dataset d = load_dataset(cfg);
  const auto graph = d.train.graph.augment_inverses();
  const auto rg = rel::build_relation_graph(graph);
  const auto data = train::make_training_data(graph, rg, training_relations(cfg, graph));
  auto model = init_model<T>(cfg.model_config(), cfg.seed);
  train::OptimizerOptions oo;
  oo.lr = cfg.lr;
  oo.weight_decay = cfg.weight_decay;
  oo.clip_norm = cfg.clip_norm;
  auto opt = train::OptimizerState<T>::create(model.params, oo);
  train::TrainOptions to;
  to.batch = cfg.batch;
  to.negatives = cfg.negatives;
  to.m_plus = cfg.m_plus;
  to.m_minus = cfg.m_minus;
  to.tau = cfg.tau;
  to.hops = cfg.hops;
  to.node_cap = cfg.node_cap;
  to.threads = resolve_threads(cfg);
  log_line("training " + std::to_string(model.params.total_elements()) + " parameters for " +
           std::to_string(cfg.steps) + " steps on " + std::to_string(data.positives.size()) +
           " positives");
  const std::size_t every = std::max<std::size_t>(1, cfg.steps / 20);
  auto history = train::train(model, opt, data, to, cfg.steps, cfg.seed, cfg.out() / "train_log.jsonl",
                              [&](const train::TrainLogEntry& e) {
                                if (e.step % every == 0 || e.step == cfg.steps)
                                  log_line("step " + std::to_string(e.step) + " total " +
                                           std::to_string(e.loss.total));
                              });
  save_checkpoint(model, CheckpointPaths::in(cfg.checkpoint()));
  json summary = {{"steps", cfg.steps}, {"parameters", model.params.total_elements()}};
  if (!history.empty()) {
    summary["first_total"] = history.front().loss.total;
    summary["final_total"] = history.back().loss.total;
  }
  write_json(cfg.out() / "train_summary.json", summary);
  return 0;
}

template <typename T>
int cmd_eval(const RunConfig& cfg) {
  const auto model = load_model<T>(cfg);
  const Dataset d = load_dataset(cfg);
  const InferenceGraph ig = inference_graph(d);
  const auto report = eval::evaluate(model, ig.graph, ig.relations, ig.queries, eval_options(cfg),
                                     cfg.eval_seeds);
  eval::write_metrics_json(cfg.out() / "metrics.json", d.name, kSetting, report);
  log_line("MRR " + std::to_string(report.mrr_mean) + " +- " + std::to_string(report.mrr_std) +
           ", Hits@10 " + std::to_string(report.hits10) + ", skipped " +
           std::to_string(report.skipped));
  return 0;
}

template <typename T>
int cmd_sweep(const RunConfig& cfg) {
  const auto model = load_model<T>(cfg);
  const Dataset d = load_dataset(cfg);
  const InferenceGraph ig = inference_graph(d);
  const auto rows = eval::context_sweep(model, ig.graph, ig.relations, ig.queries,
                                        {cfg.sweep_m_plus, cfg.sweep_m_minus, cfg.sweep_hops},
                                        eval_options(cfg), cfg.eval_seeds);
  eval::write_sweep_csv(cfg.out() / "sweep.csv", rows);
  eval::write_sweep_json(cfg.out() / "sweep.json", rows);
  log_line("wrote " + std::to_string(rows.size()) + " sweep rows");
  return 0;
}

template <typename T>
int cmd_export_attention(const RunConfig& cfg) {
  const auto model = load_model<T>(cfg);
  const Dataset d = load_dataset(cfg);
  const InferenceGraph ig = inference_graph(d);
  if (cfg.attention_query >= ig.queries.size())
    fail(ErrorKind::kConfig, "attention_query exceeds the number of evaluation queries");
  const kg::Triple q = ig.queries.queries[cfg.attention_query];
  const auto& known = ig.queries.filter(q.head, q.relation);

  std::vector<kg::EntityId> candidates{q.tail};
  std::vector<bool> truth{true};
  for (auto t : known)
    if (t != q.tail && candidates.size() < cfg.attention_true) {
      candidates.push_back(t);
      truth.push_back(true);
    }
  const std::set<kg::EntityId> known_set(known.begin(), known.end());
  std::vector<kg::EntityId> wrong;
  for (std::size_t e = 0; e < ig.graph.num_entities(); ++e)
    if (!known_set.contains(static_cast<kg::EntityId>(e))) wrong.push_back(static_cast<kg::EntityId>(e));
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(wrong.begin(), wrong.end(), rng);
  const std::size_t total = cfg.attention_true + cfg.attention_wrong;
  for (std::size_t i = 0; i < wrong.size() && candidates.size() < total; ++i) {
    candidates.push_back(wrong[i]);
    truth.push_back(false);
  }
  const auto context = ctx::sample_global_context(ig.graph, q.relation, cfg.attention_m_plus,
                                                  cfg.attention_m_minus, q, cfg.seed);
  const auto exp = eval::export_attention(model, ig.graph, ig.relations, q.head, q.relation,
                                          candidates, context, eval_options(cfg),
                                          cfg.out() / "attention.csv");
  ctx::write_context_jsonl(cfg.out() / "attention_context.jsonl", context, ig.graph);
  double worst = 0.0;
  json rows = json::array();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < exp.attention.cols(); ++j) sum += exp.attention(i, j);
    worst = std::max(worst, std::abs(sum - 1.0));
    rows.push_back({{"candidate", exp.row_labels[i]}, {"true_tail", static_cast<bool>(truth[i])},
                    {"score", exp.scores[i]}});
  }
  write_json(cfg.out() / "attention.json",
             {{"query", {{"head", ig.graph.entities().name(q.head)},
                         {"relation", ig.graph.relation_name(q.relation)},
                         {"tail", ig.graph.entities().name(q.tail)}}},
              {"rows", candidates.size()},
              {"columns", context.size()},
              {"max_row_sum_error", worst},
              {"candidates", rows},
              {"context_columns", exp.column_labels}});
  log_line("attention matrix " + std::to_string(candidates.size()) + " x " +
           std::to_string(context.size()));
  return 0;
}

int cmd_theory_check(const RunConfig& cfg) {
  oracle::ExpressivityOptions o;
  o.motifs = cfg.theory_motifs;
  o.support = cfg.theory_support;
  o.instances = cfg.theory_instances;
  o.seed = cfg.seed;
  const auto report = oracle::run_theory_check(o, cfg.theory_control);
  oracle::write_theory_report(cfg.out() / "theory_check.json", report);
  log_line("max deviation " + std::to_string(report.exact.max_deviation) +
           ", negative control min deviation " + std::to_string(report.control.min_deviation));
  if (report.exact.max_deviation > oracle::kExpressivityTolerance)
    fail(ErrorKind::kVerification, "linear-mode score deviates from the motif oracle at seed " +
                                       std::to_string(report.exact.worst_seed));
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
  check::GradSuiteOptions o;
  o.points = cfg.gradcheck_points;
  o.step = cfg.gradcheck_step;
  o.seed = cfg.seed;
  const auto results = check::run_gradient_suite(o);
  check::write_gradient_report(cfg.out() / "gradcheck.json", results, o.tolerance);
  bool ok = true;
  for (const auto& r : results) {
    log_line(r.block + ": max relative error " + std::to_string(r.max_rel_error));
    ok = ok && r.ok;
  }
  if (!ok) fail(ErrorKind::kVerification, "gradient check failed; see gradcheck.json");
  return 0;
}

template <typename T>
int dispatch_typed(const RunConfig& cfg) {
  const auto& c = cfg.command;
  if (c == "ingest") return cmd_ingest(cfg);
  if (c == "train") return cmd_train<T>(cfg);
  if (c == "eval") return cmd_eval<T>(cfg);
  if (c == "sweep") return cmd_sweep<T>(cfg);
  if (c == "export-attention") return cmd_export_attention<T>(cfg);
  if (c == "theory-check") return cmd_theory_check(cfg);
  if (c == "gradcheck") return cmd_gradcheck(cfg);
  fail(ErrorKind::kConfig, "unknown command '" + c + "'");
}

void write_error_record(const fs::path& dir, const std::string& command, const std::string& kind,
                        const std::string& message) {
  const json record = {{"status", "error"}, {"command", command}, {"kind", kind}, {"message", message}};
  std::cerr << record.dump() << '\n';
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!ec) {
    std::ofstream out(dir / "error.json");
    out << record.dump(2) << '\n';
  }
}

}  // namespace

int dispatch(const RunConfig& config) {
  try {
    fs::create_directories(config.out());
    resolve_threads(config);
    {
      std::ofstream echo(config.out() / "resolved_config.json");
      if (!echo) fail(ErrorKind::kIo, "cannot write to " + config.out().string());
      echo << config_to_json(config) << '\n';
    }
    return config.precision == "float64" ? dispatch_typed<double>(config)
                                         : dispatch_typed<float>(config);
  } catch (const Error& e) {
    write_error_record(config.out(), config.command, std::string(to_string(e.kind())), e.what());
    return e.kind() == ErrorKind::kConfig ? 2 : 1;
  } catch (const std::exception& e) {
    write_error_record(config.out(), config.command, "internal_error", e.what());
    return 1;
  }
}

int run(int argc, const char* const* argv) {
  RunConfig config;
  try {
    config = parse_config(argc, argv);
  } catch (const CLI::CallForHelp&) {
    return 0;
  } catch (const Error& e) {
    const json record = {{"status", "error"}, {"kind", to_string(e.kind())}, {"message", e.what()}};
    std::cerr << record.dump() << '\n';
    return 2;
  }
  return dispatch(config);
}

}  // namespace kgpfn::cli
