#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdp/dataset.hpp"
#include "cdp/knn_graph.hpp"
#include "cdp/propagation.hpp"

namespace cdp {

struct PairMetrics {
  std::size_t pair_count = 0;
  double recall = 0.0;
  double precision = 0.0;
  // Set when nothing was selected; precision is reported as 1 in that case.
  bool empty_selection = false;
};

struct ClusterMetrics {
  double pairwise_recall = 0.0;
  double pairwise_precision = 0.0;
};

// Positives are all same-identity pairs inside `universe` (sorted ids), not
// just those reachable through the candidate graph.
PairMetrics pair_metrics(std::span<const CandidatePair> selected, const GroundTruth& truth,
                         std::span<const SampleId> universe);

// Over every id in `truth`: unassigned ids only reduce recall.
ClusterMetrics cluster_metrics(const LabelAssignment& assign, const GroundTruth& truth);

// Single-linkage at a cosine threshold (pairs with similarity >= threshold
// are linked), singletons discarded.
LabelAssignment hierarchical_baseline(const EmbeddingSet& base, double threshold);

// One row of the comparison report. Pair columns are absent for methods that
// do not select pairs (the clustering baseline).
struct ReportRow {
  std::string config;
  std::optional<PairMetrics> pairs;
  ClusterMetrics clusters;
};

// CSV header: config,pair_count,pair_recall,pair_precision,pairwise_recall,pairwise_precision
void write_report_csv(std::span<const ReportRow> rows, const std::filesystem::path& path);
void write_report_json(std::span<const ReportRow> rows, const std::filesystem::path& path);
std::string format_report_csv(std::span<const ReportRow> rows);

}  // namespace cdp
