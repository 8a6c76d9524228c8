#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cdp/dataset.hpp"
#include "cdp/knn_graph.hpp"

namespace cdp {

// Mediator input blocks. Distribution covers both the mean and variance parts.
enum FeatureBlock : unsigned {
  kRelationship = 1u << 0,
  kAffinity = 1u << 1,
  kDistribution = 1u << 2,
  kAllBlocks = kRelationship | kAffinity | kDistribution,
};

// "IR", "IR+IA", "IR+IA+ID" and so on; parse throws Error{invalid_argument}.
std::string block_mask_name(unsigned blocks);
unsigned parse_block_mask(const std::string& text);

// Column layout of the mediator input for a committee of size N:
// [relationship N | affinity N+1 | mean 2(N+1) | var 2(N+1)], with masked-out
// blocks omitted.
struct FeatureLayout {
  std::size_t committee = 0;
  unsigned blocks = kAllBlocks;

  std::size_t relationship_size() const { return (blocks & kRelationship) ? committee : 0; }
  std::size_t affinity_size() const { return (blocks & kAffinity) ? committee + 1 : 0; }
  std::size_t mean_size() const { return (blocks & kDistribution) ? 2 * (committee + 1) : 0; }
  std::size_t var_size() const { return mean_size(); }
  std::size_t dim() const {
    return relationship_size() + affinity_size() + mean_size() + var_size();
  }

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

struct NodeNeighborStats {
  double mean = 0.0;
  double var = 0.0;  // population variance
};

struct PairFeatureVector {
  std::vector<float> relationship;  // N entries in {0, 1}
  std::vector<float> affinity;      // N + 1 entries, base first
  std::vector<float> dist_mean;     // node a for models 0..N, then node b
  std::vector<float> dist_var;

  std::size_t size() const {
    return relationship.size() + affinity.size() + dist_mean.size() + dist_var.size();
  }
  // Concatenation in the fixed block order, dropping masked-out blocks.
  std::vector<float> flatten(unsigned blocks = kAllBlocks) const;
};

// Entry i is 1 iff the pair is linked (either direction) in committee graph i.
std::vector<float> relationship_vector(const CandidatePair& pair,
                                       std::span<const KnnGraph> committee_graphs);

// Entry i is the pair's cosine similarity under model i (base at index 0).
std::vector<double> affinity_vector(const CandidatePair& pair,
                                    std::span<const EmbeddingSet> all_sets);

// First-order statistics of the node's stored neighbor similarities.
NodeNeighborStats neighbor_stats(SampleId node, const KnnGraph& graph);

// graphs/sets hold the base model at index 0 followed by the committee.
PairFeatureVector assemble_mediator_input(const CandidatePair& pair,
                                          std::span<const KnnGraph> graphs,
                                          std::span<const EmbeddingSet> sets);

// Row-major feature matrix for a list of pairs, optionally with binary
// targets (1 = same identity).
struct FeatureMatrix {
  FeatureLayout layout;
  std::vector<CandidatePair> pairs;
  std::vector<float> values;
  std::vector<std::uint8_t> targets;  // empty when unknown

  std::size_t rows() const noexcept { return pairs.size(); }
  std::size_t dim() const { return layout.dim(); }
  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * dim(), dim()};
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

// Batch assembly with per-node statistics computed once per model. Row i
// equals assemble_mediator_input(pairs[i]).flatten(blocks).
FeatureMatrix assemble_features(std::span<const CandidatePair> pairs,
                                std::span<const KnnGraph> graphs,
                                std::span<const EmbeddingSet> sets,
                                unsigned blocks = kAllBlocks, unsigned workers = 1);

// Keeps only the columns of `blocks` (which must be a subset of the matrix's).
FeatureMatrix select_blocks(const FeatureMatrix& features, unsigned blocks);

// Binary dump ("CDPF", version 1): header, pair-id index, f32 rows, targets.
void save_features(const FeatureMatrix& features, const std::filesystem::path& path);
FeatureMatrix load_features(const std::filesystem::path& path);

}  // namespace cdp
