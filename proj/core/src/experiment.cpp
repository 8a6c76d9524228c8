#include "cdp/experiment.hpp"

#include <algorithm>
#include <cmath>

#include "cdp/error.hpp"
#include "cdp/rng.hpp"

namespace cdp {

namespace {

std::size_t resolve_committee(const CdpParams& params, std::size_t available) {
  if (params.committee == static_cast<std::size_t>(-1)) return available;
  require(params.committee <= available, Errc::invalid_argument,
          "requested committee size " + std::to_string(params.committee) + " exceeds the " +
              std::to_string(available) + " available views");
  return params.committee;
}

void finish(CdpRun& run, const SplitViews& unlabeled, const CdpParams& params) {
  const auto nodes = unlabeled.truth.ids();
  run.labels = propagate(
      ConsensusGraph::from_selection({nodes.begin(), nodes.end()}, run.selected), params.propagation);
  std::vector<CandidatePair> chosen;
  chosen.reserve(run.selected.size());
  for (const auto& e : run.selected) chosen.push_back(e.pair);
  run.pairs = pair_metrics(chosen, unlabeled.truth, nodes);
  run.clusters = cluster_metrics(run.labels, unlabeled.truth);
}

}  // namespace

SplitViews SplitViews::build(std::span<const EmbeddingSet> all_views, std::span<const SampleId> ids,
                             const GroundTruth& truth, std::size_t max_k, unsigned workers) {
  SplitViews v;
  v.truth = truth.subset(ids);
  for (const auto& view : all_views) {
    v.sets.push_back(view.subset(ids));
    v.graphs.push_back(build_knn_graph(v.sets.back(), max_k, workers));
  }
  return v;
}

std::vector<KnnGraph> SplitViews::graphs_at(std::size_t k, std::size_t committee) const {
  std::vector<KnnGraph> out;
  out.reserve(committee + 1);
  for (std::size_t m = 0; m <= committee; ++m)
    out.push_back(k == graphs[m].k() ? graphs[m] : truncate_graph(graphs[m], k));
  return out;
}

std::vector<EmbeddingSet> SplitViews::sets_for(std::size_t committee) const {
  return {sets.begin(), sets.begin() + static_cast<std::ptrdiff_t>(committee + 1)};
}

CdpRun run_mediator(const SplitViews& labeled, const SplitViews& unlabeled, const CdpParams& params) {
  const std::size_t committee = resolve_committee(params, unlabeled.committee_size());
  CdpRun run;

  const auto train_graphs = labeled.graphs_at(params.k, committee);
  const auto train_sets = labeled.sets_for(committee);
  const auto train_pairs = candidate_pairs(train_graphs[0]);
  auto train = assemble_features(train_pairs, train_graphs, train_sets, params.blocks, params.workers);
  for (const auto& p : train_pairs)
    train.targets.push_back(labeled.truth.label_of(p.a) == labeled.truth.label_of(p.b) ? 1 : 0);
  auto trained = train_mediator(train, params.train);
  run.model = std::move(trained.model);
  run.epoch_loss = std::move(trained.epoch_loss);

  const auto graphs = unlabeled.graphs_at(params.k, committee);
  const auto sets = unlabeled.sets_for(committee);
  run.candidates = candidate_pairs(graphs[0]);
  const auto features = assemble_features(run.candidates, graphs, sets, params.blocks, params.workers);
  run.probabilities = predict(run.model, features, params.workers);
  run.selected = select_pairs(run.candidates, run.probabilities, params.threshold);
  finish(run, unlabeled, params);
  return run;
}

std::vector<SelectedEdge> select_by_voting(std::span<const CandidatePair> candidates,
                                           std::span<const KnnGraph> graphs,
                                           const EmbeddingSet& base, std::size_t quorum,
                                           double similarity_threshold) {
  require(!graphs.empty(), Errc::invalid_argument, "voting needs the base graph");
  std::vector<SelectedEdge> out;
  const std::size_t committee = graphs.size() - 1;
  if (committee == 0) {
    // No committee: fall back to thresholding the base similarity.
    for (const auto& p : candidates) {
      const double s = cosine_similarity(base.row_of(p.a), base.row_of(p.b));
      if (s >= similarity_threshold) out.push_back({p, std::clamp(s, 0.0, 1.0)});
    }
    return out;
  }
  return vote_select_all(candidates, graphs.subspan(1), quorum == 0 ? committee : quorum);
}

CdpRun run_voting(const SplitViews& unlabeled, const CdpParams& params) {
  const std::size_t committee = resolve_committee(params, unlabeled.committee_size());
  CdpRun run;
  const auto graphs = unlabeled.graphs_at(params.k, committee);
  run.candidates = candidate_pairs(graphs[0]);
  run.selected = select_by_voting(run.candidates, graphs, unlabeled.sets[0], params.vote_quorum,
                                  params.vote_similarity_threshold);
  finish(run, unlabeled, params);
  return run;
}

ReportRow report_row(std::string config, const CdpRun& run) {
  return {std::move(config), run.pairs, run.clusters};
}

SyntheticConfig benchmark_data(std::uint64_t seed, bool heterogeneous) {
  SyntheticConfig c;
  c.num_identities = 200;
  c.labeled_identities = 100;
  c.samples_min = 5;
  c.samples_max = 95;
  c.intra_class_rank = 2;
  c.base_noise_sigma = 0.05;
  c.view_noise_sigma = 0.05;
  c.heterogeneous = heterogeneous;
  c.seed = seed;
  return c;
}

CdpParams benchmark_params(std::uint64_t seed, std::size_t k) {
  CdpParams p;
  p.k = k;
  p.train.seed = derive_seed(seed, "train");
  p.propagation.max_size = 100;
  return p;
}

void AblationConfig::validate() const {
  data.validate();
  params.train.validate();
  params.propagation.validate();
  require(params.threshold >= 0 && params.threshold <= 1, Errc::invalid_argument,
          "ablation: threshold must lie in [0, 1]");
  require(params.k >= 1, Errc::invalid_argument, "ablation: k must be >= 1");
  for (auto c : committee_counts)
    require(c <= data.num_committee, Errc::invalid_argument,
            "ablation: committee count " + std::to_string(c) + " exceeds num_committee");
  for (auto b : input_subsets)
    require(b != 0 && (b & ~kAllBlocks) == 0, Errc::invalid_argument,
            "ablation: invalid mediator input subset");
  for (auto k : k_values) require(k >= 1, Errc::invalid_argument, "ablation: k values must be >= 1");
  require(cluster_threshold >= -1 && cluster_threshold <= 1, Errc::invalid_argument,
          "ablation: cluster_threshold must lie in [-1, 1]");
}

std::vector<ReportRow> ablation_run(const AblationConfig& cfg) {
  cfg.validate();
  std::size_t max_k = cfg.params.k;
  for (auto k : cfg.k_values) max_k = std::max(max_k, k);

  auto prepare = [&](const SyntheticConfig& data_cfg) {
    const auto data = generate_synthetic(data_cfg);
    const auto views = data.all_views();
    return std::pair{
        SplitViews::build(views, data.split.labeled, data.truth, max_k, cfg.params.workers),
        SplitViews::build(views, data.split.unlabeled, data.truth, max_k, cfg.params.workers)};
  };

  std::vector<ReportRow> rows;
  const auto [labeled, unlabeled] = prepare(cfg.data);

  const auto clusters = hierarchical_baseline(unlabeled.sets[0], cfg.cluster_threshold);
  rows.push_back({"clustering", std::nullopt, cluster_metrics(clusters, unlabeled.truth)});

  for (auto c : cfg.committee_counts) {
    auto p = cfg.params;
    p.committee = c;
    p.vote_quorum = 0;
    rows.push_back(report_row("voting_c" + std::to_string(c), run_voting(unlabeled, p)));
  }
  const std::string full = "_c" + std::to_string(cfg.data.num_committee);
  for (auto blocks : cfg.input_subsets) {
    auto p = cfg.params;
    p.blocks = blocks;
    rows.push_back(report_row("mediator" + full + "_" + block_mask_name(blocks),
                              run_mediator(labeled, unlabeled, p)));
  }
  for (auto k : cfg.k_values) {
    auto p = cfg.params;
    p.k = k;
    rows.push_back(report_row("mediator" + full + "_k" + std::to_string(k),
                              run_mediator(labeled, unlabeled, p)));
  }
  if (cfg.compare_heterogeneity && cfg.data.num_committee > 0) {
    for (bool hetero : {true, false}) {
      auto data_cfg = cfg.data;
      data_cfg.heterogeneous = hetero;
      const auto [l, u] = prepare(data_cfg);
      const std::string tag = hetero ? "hetero" : "homo";
      rows.push_back(report_row("voting_" + tag, run_voting(u, cfg.params)));
      rows.push_back(report_row("mediator_" + tag, run_mediator(l, u, cfg.params)));
    }
  }
  return rows;
}

}  // namespace cdp
