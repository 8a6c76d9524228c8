#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cdp/dataset.hpp"

namespace cdp {

inline constexpr std::size_t kDefaultK = 20;

struct Neighbor {
  std::uint32_t index;  // row position in the graph's node list
  double similarity;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Cosine k-NN graph. Each node stores min(k, n - 1) neighbors ordered by
// descending similarity, ties broken by the smaller neighbor id.
class KnnGraph {
 public:
  KnnGraph() = default;
  // Validates the ordering, self-edge and range invariants.
  KnnGraph(std::size_t k, std::vector<SampleId> ids, std::vector<Neighbor> neighbors);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t k() const noexcept { return k_; }
  // Stored neighbors per node: min(k, n - 1).
  std::size_t width() const noexcept { return width_; }

  std::span<const SampleId> ids() const noexcept { return ids_; }
  SampleId id_of(std::size_t index) const noexcept { return ids_[index]; }
  std::size_t index_of(SampleId id) const;

  std::span<const Neighbor> neighbors(std::size_t index) const noexcept {
    return {neighbors_.data() + index * width_, width_};
  }
  std::span<const Neighbor> all_neighbors() const noexcept { return neighbors_; }

  // True when j is in i's list or i is in j's list.
  bool linked(std::size_t i, std::size_t j) const noexcept;

  friend bool operator==(const KnnGraph&, const KnnGraph&) = default;

 private:
  std::size_t k_ = 0;
  std::size_t width_ = 0;
  std::vector<SampleId> ids_;
  std::vector<Neighbor> neighbors_;
};

struct CandidatePair {
  SampleId a;
  SampleId b;  // a < b

  friend auto operator<=>(const CandidatePair&, const CandidatePair&) = default;
};

// Throws Error{dimension_mismatch} or Error{zero_norm}. Result clamped to [-1, 1].
double cosine_similarity(std::span<const float> u, std::span<const float> v);

// Exhaustive O(n^2 d) search; query rows are split across `workers` threads.
KnnGraph build_knn_graph(const EmbeddingSet& set, std::size_t k = kDefaultK,
                         unsigned workers = 1);

// Keeps the first min(k, width) neighbors of every node. Because lists are
// exact and totally ordered, this equals building with the smaller k.
KnnGraph truncate_graph(const KnnGraph& graph, std::size_t k);

// Union of the directed edges, deduplicated and sorted by (a, b).
std::vector<CandidatePair> candidate_pairs(const KnnGraph& graph);

// Binary graph artifact ("CDPG", version 1).
void save_graph(const KnnGraph& graph, const std::filesystem::path& path);
KnnGraph load_graph(const std::filesystem::path& path);

// Debug dump: `node,rank,neighbor,similarity` with round-trippable doubles.
void write_graph_csv(const KnnGraph& graph, const std::filesystem::path& path);

}  // namespace cdp
