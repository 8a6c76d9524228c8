#include "stages.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cdp/dataset.hpp>
#include <cdp/error.hpp>
#include <cdp/evaluation.hpp>
#include <cdp/experiment.hpp>
#include <cdp/features.hpp>
#include <cdp/knn_graph.hpp>
#include <cdp/mediator.hpp>
#include <cdp/propagation.hpp>
#include <cdp/rng.hpp>

namespace cdp::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Bump when a stage's outputs change for identical inputs.
constexpr int kStageVersion[] = {1, 1, 1, 1, 1, 1, 1, 1};

int version_of(Stage s) { return kStageVersion[static_cast<int>(s)]; }

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint64_t file_hash(const fs::path& path) { return fnv1a(read_file(path)); }

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw MissingInput("input not found: " + path.string());
}

std::string model_file(std::size_t m) { return "model_" + std::to_string(m) + ".cdpe"; }
std::string graph_file(const char* part, std::size_t m) {
  return std::string(part) + "_" + std::to_string(m) + ".cdpg";
}

// Records what a stage produced so downstream stages can verify it.
class Manifest {
 public:
  Manifest(Stage stage, std::uint64_t key) {
    doc_["stage"] = stage_name(stage);
    doc_["version"] = version_of(stage);
    doc_["key"] = hex(key);
    doc_["files"] = json::object();
    doc_["info"] = json::object();
  }
  void add_file(const fs::path& dir, const std::string& name) {
    doc_["files"][name] = hex(file_hash(dir / name));
  }
  void info(const std::string& k, json v) { doc_["info"][k] = std::move(v); }
  void write(const fs::path& dir) const {
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write manifest in " + dir.string());
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
};

class Runner {
 public:
  explicit Runner(const Workspace& ws) : ws_(ws), cfg_(ws.config()) {}

  void generate();
  void graph();
  void features();
  void train();
  void select();
  void propagate();
  void evaluate();
  void ablation();

 private:
  // Verifies an upstream stage and returns its directory and manifest.
  fs::path upstream(Stage s, json* manifest = nullptr) const;
  fs::path fresh_dir(Stage s) const;

  std::size_t num_models(const json& gen_manifest) const {
    return gen_manifest["info"]["models"].get<std::size_t>();
  }
  std::size_t committee_used(std::size_t available) const {
    return std::min(cfg_.committee, available);
  }
  std::string row_name(std::size_t committee) const {
    if (cfg_.method == SelectMethod::voting) return "voting_c" + std::to_string(committee);
    return "mediator_c" + std::to_string(committee) + "_" + block_mask_name(cfg_.blocks);
  }

  const Workspace& ws_;
  const PipelineConfig& cfg_;
};

fs::path Runner::upstream(Stage s, json* manifest) const {
  const fs::path dir = ws_.dir(s);
  const fs::path mpath = dir / "manifest.json";
  if (!fs::is_regular_file(mpath))
    throw MissingInput("stage '" + std::string(stage_name(s)) + "' has no outputs for this config (" +
                       dir.string() + "); run it first");
  json doc;
  try {
    doc = json::parse(read_file(mpath));
  } catch (const json::exception& e) {
    throw StaleArtifact(mpath.string() + ": unreadable manifest: " + e.what());
  }
  if (doc.value("version", -1) != version_of(s))
    throw StaleArtifact(dir.string() + " was written by stage version " +
                        std::to_string(doc.value("version", -1)) + ", expected " +
                        std::to_string(version_of(s)));
  if (doc.value("key", std::string()) != hex(ws_.key(s)))
    throw StaleArtifact(mpath.string() + ": key does not match its directory");
  for (const auto& [name, digest] : doc["files"].items()) {
    const fs::path f = dir / name;
    if (!fs::is_regular_file(f)) throw MissingInput("artifact missing: " + f.string());
    if (hex(file_hash(f)) != digest.get<std::string>())
      throw StaleArtifact("artifact modified after it was written: " + f.string());
  }
  if (manifest) *manifest = std::move(doc);
  return dir;
}

fs::path Runner::fresh_dir(Stage s) const {
  const fs::path dir = ws_.dir(s);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void Runner::generate() {
  const fs::path dir = fresh_dir(Stage::generate);
  Manifest m(Stage::generate, ws_.key(Stage::generate));
  std::vector<EmbeddingSet> views;
  GroundTruth truth;
  Split split;
  if (cfg_.data.source == DataSource::synthetic) {
    auto data = generate_synthetic(cfg_.synthetic());
    views = data.all_views();
    truth = std::move(data.truth);
    split = std::move(data.split);
  } else {
    require_file(cfg_.data.base);
    for (const auto& p : cfg_.data.committee) require_file(p);
    require_file(cfg_.data.labels);
    require_file(cfg_.data.split);
    views.push_back(load_embeddings(cfg_.data.base));
    for (const auto& p : cfg_.data.committee) {
      views.push_back(load_embeddings(p));
      require(std::ranges::equal(views.back().ids(), views.front().ids()), Errc::malformed,
              p.string() + ": ids differ from the base embeddings");
    }
    std::vector<std::string> warnings;
    truth = load_labels(cfg_.data.labels, &warnings);
    for (const auto& w : warnings) spdlog::warn("{}", w);
    require(std::ranges::equal(truth.ids(), views.front().ids()), Errc::malformed,
            cfg_.data.labels.string() + ": ids differ from the embeddings");
    split = load_split(cfg_.data.split);
  }
  for (std::size_t i = 0; i < views.size(); ++i) {
    save_embeddings(views[i], dir / model_file(i));
    m.add_file(dir, model_file(i));
  }
  save_labels(truth, dir / "labels.csv");
  save_split(split, dir / "split.csv");
  m.add_file(dir, "labels.csv");
  m.add_file(dir, "split.csv");
  m.info("models", views.size());
  m.info("samples", truth.size());
  m.info("labeled", split.labeled.size());
  m.info("unlabeled", split.unlabeled.size());
  m.write(dir);
  spdlog::info("generate: {} samples, {} models -> {}", truth.size(), views.size(), dir.string());
}

void Runner::graph() {
  json gen_manifest;
  const fs::path gen = upstream(Stage::generate, &gen_manifest);
  const fs::path dir = fresh_dir(Stage::graph);
  Manifest m(Stage::graph, ws_.key(Stage::graph));
  const auto split = load_split(gen / "split.csv");
  const std::size_t models = num_models(gen_manifest);
  for (std::size_t i = 0; i < models; ++i) {
    const auto set = load_embeddings(gen / model_file(i));
    for (const auto& [part, ids] : {std::pair{"labeled", &split.labeled},
                                    std::pair{"unlabeled", &split.unlabeled}}) {
      const auto g = build_knn_graph(set.subset(*ids), cfg_.k, cfg_.workers);
      save_graph(g, dir / graph_file(part, i));
      m.add_file(dir, graph_file(part, i));
      if (cfg_.graph_csv) {
        const std::string csv = std::string(part) + "_" + std::to_string(i) + ".csv";
        write_graph_csv(g, dir / csv);
        m.add_file(dir, csv);
      }
    }
    spdlog::debug("graph: model {} done", i);
  }
  m.info("models", models);
  m.write(dir);
  spdlog::info("graph: k={} for {} models -> {}", cfg_.k, models, dir.string());
}

void Runner::features() {
  json gen_manifest;
  const fs::path gen = upstream(Stage::generate, &gen_manifest);
  const fs::path gdir = upstream(Stage::graph);
  const fs::path dir = fresh_dir(Stage::features);
  Manifest m(Stage::features, ws_.key(Stage::features));
  const auto split = load_split(gen / "split.csv");
  const auto labels = load_labels(gen / "labels.csv");
  const std::size_t committee = committee_used(num_models(gen_manifest) - 1);

  for (const auto& [part, ids] : {std::pair{"labeled", &split.labeled},
                                  std::pair{"unlabeled", &split.unlabeled}}) {
    std::vector<KnnGraph> graphs;
    std::vector<EmbeddingSet> sets;
    for (std::size_t i = 0; i <= committee; ++i) {
      graphs.push_back(load_graph(gdir / graph_file(part, i)));
      sets.push_back(load_embeddings(gen / model_file(i)).subset(*ids));
    }
    const auto pairs = candidate_pairs(graphs[0]);
    auto fm = assemble_features(pairs, graphs, sets, cfg_.blocks, cfg_.workers);
    if (std::string_view(part) == "labeled") {
      const auto truth = labels.subset(*ids);
      for (const auto& p : pairs)
        fm.targets.push_back(truth.label_of(p.a) == truth.label_of(p.b) ? 1 : 0);
    }
    const std::string name = std::string(part) + ".cdpf";
    save_features(fm, dir / name);
    m.add_file(dir, name);
    m.info(std::string(part) + "_pairs", fm.rows());
  }
  m.info("committee", committee);
  m.info("dim", FeatureLayout{committee, cfg_.blocks}.dim());
  m.write(dir);
  spdlog::info("features: committee {} blocks {} -> {}", committee, block_mask_name(cfg_.blocks),
               dir.string());
}

void Runner::train() {
  const fs::path fdir = upstream(Stage::features);
  const fs::path dir = fresh_dir(Stage::train);
  Manifest m(Stage::train, ws_.key(Stage::train));
  const auto fm = load_features(fdir / "labeled.cdpf");
  const auto result = train_mediator(fm, cfg_.params().train);
  save_model(result.model, dir / "mediator.cdpm");
  {
    std::ofstream out(dir / "loss.csv", std::ios::trunc);
    out << "epoch,loss\n";
    char buf[64];
    for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
      std::snprintf(buf, sizeof buf, "%.17g", result.epoch_loss[e]);
      out << e + 1 << ',' << buf << '\n';
    }
    if (!out) throw Error(Errc::io, "cannot write loss.csv");
  }
  write_first_layer_csv(inspect_first_layer(result.model), dir / "first_layer.csv");
  for (const char* f : {"mediator.cdpm", "loss.csv", "first_layer.csv"}) m.add_file(dir, f);
  m.info("train_pairs", fm.rows());
  m.write(dir);
  spdlog::info("train: {} pairs, final loss {:.6f} -> {}", fm.rows(), result.epoch_loss.back(),
               dir.string());
}

void Runner::select() {
  const fs::path dir = fresh_dir(Stage::select);
  Manifest m(Stage::select, ws_.key(Stage::select));
  std::vector<SelectedEdge> selected;
  std::size_t candidates = 0;
  if (cfg_.method == SelectMethod::mediator) {
    const fs::path fdir = upstream(Stage::features);
    const fs::path tdir = upstream(Stage::train);
    const auto model = load_model(tdir / "mediator.cdpm");
    const auto fm = load_features(fdir / "unlabeled.cdpf");
    const auto probs = predict(model, fm, cfg_.workers);
    selected = select_pairs(fm.pairs, probs, cfg_.threshold);
    candidates = fm.rows();
  } else {
    json gen_manifest;
    const fs::path gen = upstream(Stage::generate, &gen_manifest);
    const fs::path gdir = upstream(Stage::graph);
    const std::size_t committee = committee_used(num_models(gen_manifest) - 1);
    std::vector<KnnGraph> graphs;
    for (std::size_t i = 0; i <= committee; ++i)
      graphs.push_back(load_graph(gdir / graph_file("unlabeled", i)));
    const auto split = load_split(gen / "split.csv");
    const auto base = load_embeddings(gen / model_file(0)).subset(split.unlabeled);
    const auto pairs = candidate_pairs(graphs[0]);
    selected = select_by_voting(pairs, graphs, base, cfg_.vote_quorum,
                                cfg_.vote_similarity_threshold);
    candidates = pairs.size();
  }
  save_edges(selected, dir / "edges.csv");
  m.add_file(dir, "edges.csv");
  m.info("candidates", candidates);
  m.info("selected", selected.size());
  m.write(dir);
  spdlog::info("select: {} of {} candidate pairs -> {}", selected.size(), candidates,
               dir.string());
}

void Runner::propagate() {
  const fs::path gen = upstream(Stage::generate);
  const fs::path sdir = upstream(Stage::select);
  const fs::path dir = fresh_dir(Stage::propagate);
  Manifest m(Stage::propagate, ws_.key(Stage::propagate));
  const auto split = load_split(gen / "split.csv");
  const auto edges = load_edges(sdir / "edges.csv");
  const auto graph = ConsensusGraph::from_selection(split.unlabeled, edges);
  const auto assign = cdp::propagate(graph, cfg_.propagation);
  assign.check(split.unlabeled, cfg_.propagation.max_size);
  save_assignment(assign, dir / "assignment.csv", dir / "unassigned.csv");
  const auto soft = soft_labels(assign, graph, cfg_.soft.depth, cfg_.soft.decay, cfg_.workers);
  save_soft_labels(soft, dir / "soft_labels.cdpe");
  for (const char* f : {"assignment.csv", "unassigned.csv", "soft_labels.cdpe"}) m.add_file(dir, f);
  m.info("labels", assign.num_labels);
  m.info("unassigned", assign.unlabeled_ids.size());
  m.write(dir);
  spdlog::info("propagate: {} labels, {} unassigned -> {}", assign.num_labels,
               assign.unlabeled_ids.size(), dir.string());
}

void Runner::evaluate() {
  json gen_manifest;
  const fs::path gen = upstream(Stage::generate, &gen_manifest);
  const fs::path sdir = upstream(Stage::select);
  const fs::path pdir = upstream(Stage::propagate);
  const fs::path dir = fresh_dir(Stage::evaluate);
  Manifest m(Stage::evaluate, ws_.key(Stage::evaluate));

  const auto split = load_split(gen / "split.csv");
  const auto truth = load_labels(gen / "labels.csv").subset(split.unlabeled);
  const auto edges = load_edges(sdir / "edges.csv");
  std::vector<CandidatePair> chosen;
  chosen.reserve(edges.size());
  for (const auto& e : edges) chosen.push_back(e.pair);
  const auto assign = load_assignment(pdir / "assignment.csv", pdir / "unassigned.csv");

  std::vector<ReportRow> rows;
  if (cfg_.cluster_threshold) {
    const auto base = load_embeddings(gen / model_file(0)).subset(split.unlabeled);
    rows.push_back({"clustering", std::nullopt,
                    cluster_metrics(hierarchical_baseline(base, *cfg_.cluster_threshold), truth)});
  }
  rows.push_back({row_name(committee_used(num_models(gen_manifest) - 1)),
                  pair_metrics(chosen, truth, split.unlabeled), cluster_metrics(assign, truth)});
  if (rows.back().pairs->empty_selection) spdlog::warn("evaluate: no pairs were selected");

  write_report_csv(rows, dir / "report.csv");
  write_report_json(rows, dir / "report.json");
  m.add_file(dir, "report.csv");
  m.add_file(dir, "report.json");
  m.write(dir);
  fs::copy_file(dir / "report.csv", ws_.out() / "report.csv", fs::copy_options::overwrite_existing);
  fs::copy_file(dir / "report.json", ws_.out() / "report.json",
                fs::copy_options::overwrite_existing);
  spdlog::info("evaluate: report -> {}", (ws_.out() / "report.csv").string());
}

void Runner::ablation() {
  if (cfg_.data.source != DataSource::synthetic)
    throw ConfigError("ablation: requires data.source = synthetic");
  const auto acfg = cfg_.ablation_config();
  try {
    acfg.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  const fs::path dir = fresh_dir(Stage::ablation);
  Manifest m(Stage::ablation, ws_.key(Stage::ablation));
  const auto rows = ablation_run(acfg);
  write_report_csv(rows, dir / "report.csv");
  write_report_json(rows, dir / "report.json");
  m.add_file(dir, "report.csv");
  m.add_file(dir, "report.json");
  m.write(dir);
  fs::copy_file(dir / "report.csv", ws_.out() / "ablation_report.csv",
                fs::copy_options::overwrite_existing);
  fs::copy_file(dir / "report.json", ws_.out() / "ablation_report.json",
                fs::copy_options::overwrite_existing);
  spdlog::info("ablation: {} rows -> {}", rows.size(),
               (ws_.out() / "ablation_report.csv").string());
}

}  // namespace

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::generate: return "generate";
    case Stage::graph: return "graph";
    case Stage::features: return "features";
    case Stage::train: return "train";
    case Stage::select: return "select";
    case Stage::propagate: return "propagate";
    case Stage::evaluate: return "evaluate";
    case Stage::ablation: return "ablation";
  }
  return "?";
}

std::vector<Stage> parse_stage(const std::string& name, const PipelineConfig& cfg) {
  if (name == "pipeline") {
    if (cfg.method == SelectMethod::voting)
      return {Stage::generate, Stage::graph, Stage::select, Stage::propagate, Stage::evaluate};
    return {Stage::generate, Stage::graph, Stage::features, Stage::train,
            Stage::select,   Stage::propagate, Stage::evaluate};
  }
  for (Stage s : {Stage::generate, Stage::graph, Stage::features, Stage::train, Stage::select,
                  Stage::propagate, Stage::evaluate, Stage::ablation})
    if (stage_name(s) == name) return {s};
  throw ConfigError("unknown stage '" + name +
                    "' (expected generate, graph, features, train, select, propagate, evaluate, "
                    "pipeline or ablation)");
}

Workspace::Workspace(PipelineConfig cfg, fs::path out) : cfg_(std::move(cfg)), out_(std::move(out)) {
  cfg_.validate();
}

std::uint64_t Workspace::key(Stage stage) const {
  std::string text = "stage=" + std::string(stage_name(stage)) + "\n";
  auto parent = [&](Stage s) { text += "after." + std::string(stage_name(s)) + "=" + hex(key(s)) + "\n"; };
  switch (stage) {
    case Stage::generate:
      text += cfg_.canonical("data");
      if (cfg_.data.source == DataSource::synthetic) {
        text += "run.seed=" + std::to_string(cfg_.seed) + "\n";
      } else {
        // Address user files by content so edits in place are noticed.
        std::vector<fs::path> inputs = {cfg_.data.base, cfg_.data.labels, cfg_.data.split};
        inputs.insert(inputs.end(), cfg_.data.committee.begin(), cfg_.data.committee.end());
        for (const auto& p : inputs) {
          require_file(p);
          text += "file." + p.string() + "=" + hex(file_hash(p)) + "\n";
        }
      }
      break;
    case Stage::graph:
      parent(Stage::generate);
      text += cfg_.canonical("graph");
      break;
    case Stage::features:
      parent(Stage::graph);
      text += cfg_.canonical("features");
      break;
    case Stage::train:
      parent(Stage::features);
      text += cfg_.canonical("train");
      text += "run.seed=" + std::to_string(cfg_.seed) + "\n";
      break;
    case Stage::select:
      if (cfg_.method == SelectMethod::mediator) {
        parent(Stage::train);
      } else {
        parent(Stage::graph);
        text += cfg_.canonical("features");
      }
      text += cfg_.canonical("select");
      break;
    case Stage::propagate:
      parent(Stage::select);
      text += cfg_.canonical("propagate");
      break;
    case Stage::evaluate:
      parent(Stage::propagate);
      text += cfg_.canonical("evaluate");
      break;
    case Stage::ablation:
      text += "run.seed=" + std::to_string(cfg_.seed) + "\n";
      for (const char* s : {"data", "graph", "features", "train", "select", "propagate", "ablation"})
        text += cfg_.canonical(s);
      break;
  }
  return fnv1a(text);
}

fs::path Workspace::dir(Stage stage) const {
  return out_ / (std::string(stage_name(stage)) + "-" + hex(key(stage)));
}

void Workspace::run(Stage stage) const {
  fs::create_directories(out_);
  Runner r(*this);
  switch (stage) {
    case Stage::generate: return r.generate();
    case Stage::graph: return r.graph();
    case Stage::features: return r.features();
    case Stage::train: return r.train();
    case Stage::select: return r.select();
    case Stage::propagate: return r.propagate();
    case Stage::evaluate: return r.evaluate();
    case Stage::ablation: return r.ablation();
  }
}

}  // namespace cdp::pipeline
