#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cdp/dataset.hpp"
#include "cdp/mediator.hpp"

namespace cdp {

struct ScoredEdge {
  SampleId a;  // a < b
  SampleId b;
  double score;  // in [0, 1]

  friend bool operator==(const ScoredEdge&, const ScoredEdge&) = default;
};

// Undirected weighted graph over the unlabeled samples. Edges are kept sorted
// by (a, b).
class ConsensusGraph {
 public:
  ConsensusGraph() = default;
  // Throws Error{invalid_argument} on duplicate/self/unsorted edges, unknown
  // endpoints or scores outside [0, 1].
  ConsensusGraph(std::vector<SampleId> nodes, std::vector<ScoredEdge> edges);

  static ConsensusGraph from_selection(std::vector<SampleId> nodes,
                                       std::span<const SelectedEdge> selected);

  std::span<const SampleId> nodes() const noexcept { return nodes_; }
  std::span<const ScoredEdge> edges() const noexcept { return edges_; }
  std::size_t index_of(SampleId id) const;

 private:
  std::vector<SampleId> nodes_;
  std::vector<ScoredEdge> edges_;
};

// Pseudo-labels for the retained nodes; labels are contiguous from 0.
struct LabelAssignment {
  std::vector<SampleId> ids;           // sorted
  std::vector<std::uint32_t> labels;   // parallel to ids
  std::vector<SampleId> unlabeled_ids; // sorted, dropped during propagation
  std::size_t num_labels = 0;

  std::optional<std::uint32_t> label_of(SampleId id) const noexcept;
  // Throws Error{invariant} when contiguity, disjointness or the size bound
  // (if given) does not hold.
  void check(std::span<const SampleId> all_nodes, std::optional<std::size_t> max_size) const;

  friend bool operator==(const LabelAssignment&, const LabelAssignment&) = default;
};

struct PropagationConfig {
  std::size_t max_size = 300;
  double step = 0.1;
  bool discard_singletons = false;

  void validate() const;
};

// Maximal connected node sets, each sorted, ordered by smallest member.
std::vector<std::vector<SampleId>> connected_components(const ConsensusGraph& graph);

// Queue-driven recursive splitting. Oversized components lose every edge with
// score <= S_min + (1 - S_min) * step and are re-decomposed; components that
// fit receive the next label; nodes left without edges are dropped.
LabelAssignment propagate(const ConsensusGraph& graph, const PropagationConfig& cfg = {});

struct SoftLabels {
  std::vector<SampleId> ids;  // the labeled ids of the hard assignment
  std::size_t num_labels = 0;
  std::vector<double> values;  // ids.size() x num_labels

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * num_labels, num_labels};
  }
};

// Breadth-first diffusion: a labeled node at hop distance d <= depth from the
// source adds decay^d to the bucket of its hard label; rows are normalized.
SoftLabels soft_labels(const LabelAssignment& hard, const ConsensusGraph& graph,
                       std::size_t depth, double decay, unsigned workers = 1);

// CSV `id,pseudo_label`; the unassigned ids go to a sidecar CSV `id`.
void save_assignment(const LabelAssignment& assign, const std::filesystem::path& path,
                     const std::filesystem::path& unassigned_path);
LabelAssignment load_assignment(const std::filesystem::path& path,
                                const std::filesystem::path& unassigned_path);

// Soft labels reuse the embedding container with dim = num_labels.
void save_soft_labels(const SoftLabels& soft, const std::filesystem::path& path);

// CSV `a,b,score` with round-trippable scores.
void save_edges(std::span<const SelectedEdge> edges, const std::filesystem::path& path);
std::vector<SelectedEdge> load_edges(const std::filesystem::path& path);

}  // namespace cdp
