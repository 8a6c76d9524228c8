#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdp/dataset.hpp"
#include "cdp/evaluation.hpp"
#include "cdp/features.hpp"
#include "cdp/knn_graph.hpp"
#include "cdp/mediator.hpp"
#include "cdp/propagation.hpp"

namespace cdp {

// In-memory end-to-end runs used by the ablation report and the acceptance
// suite. The CLI pipeline goes through the same library calls, stage by stage
// through files.

struct CdpParams {
  std::size_t k = kDefaultK;
  double threshold = kDefaultSelectThreshold;
  TrainConfig train;
  PropagationConfig propagation;
  unsigned blocks = kAllBlocks;
  // Committee members used (first c of the committee); SIZE_MAX = all.
  std::size_t committee = static_cast<std::size_t>(-1);
  // Voting quorum; 0 means every member.
  std::size_t vote_quorum = 0;
  // Base-similarity cut used when voting runs with an empty committee.
  double vote_similarity_threshold = 0.8;
  unsigned workers = 1;
};

// Base + committee restricted to one split, with graphs built at max_k.
struct SplitViews {
  std::vector<EmbeddingSet> sets;
  std::vector<KnnGraph> graphs;
  GroundTruth truth;

  static SplitViews build(std::span<const EmbeddingSet> all_views, std::span<const SampleId> ids,
                          const GroundTruth& truth, std::size_t max_k, unsigned workers);

  std::size_t committee_size() const { return sets.size() - 1; }
  // Graphs of the base and the first `committee` members, truncated to k.
  std::vector<KnnGraph> graphs_at(std::size_t k, std::size_t committee) const;
  std::vector<EmbeddingSet> sets_for(std::size_t committee) const;
};

struct CdpRun {
  std::vector<CandidatePair> candidates;
  std::vector<double> probabilities;  // empty for voting
  std::vector<SelectedEdge> selected;
  LabelAssignment labels;
  PairMetrics pairs;
  ClusterMetrics clusters;
  MediatorModel model;
  std::vector<double> epoch_loss;
};

// Voting over graphs (base first). With an empty committee the base
// similarity is thresholded instead; quorum 0 means every member.
std::vector<SelectedEdge> select_by_voting(std::span<const CandidatePair> candidates,
                                           std::span<const KnnGraph> graphs,
                                           const EmbeddingSet& base, std::size_t quorum,
                                           double similarity_threshold);

CdpRun run_mediator(const SplitViews& labeled, const SplitViews& unlabeled, const CdpParams& params);
CdpRun run_voting(const SplitViews& unlabeled, const CdpParams& params);

ReportRow report_row(std::string config, const CdpRun& run);

// The benchmark used by the acceptance suite (also configs/benchmark.ini):
// 200 identities, 100 of them labeled, 5..95 samples each, rank-2 spread
// and a noisy base view.
SyntheticConfig benchmark_data(std::uint64_t seed = 7, bool heterogeneous = true);
// Default parameters except the cluster cap, which sits just above the
// largest identity (100); training is seeded from `seed` like the CLI does.
CdpParams benchmark_params(std::uint64_t seed = 7, std::size_t k = kDefaultK);

struct AblationConfig {
  SyntheticConfig data;
  CdpParams params;
  std::vector<std::size_t> committee_counts = {0, 2, 4, 6, 8};
  std::vector<unsigned> input_subsets = {kRelationship, kRelationship | kAffinity, kAllBlocks};
  std::vector<std::size_t> k_values = {10, 20, 30, 40};
  bool compare_heterogeneity = true;
  double cluster_threshold = 0.8;

  void validate() const;
};

// Rows: clustering baseline, voting per committee count, mediator per input
// subset, mediator per k, and optionally hetero/homo committees.
std::vector<ReportRow> ablation_run(const AblationConfig& cfg);

}  // namespace cdp
