#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cdp {

using SampleId = std::uint64_t;

// Dense row-major embedding matrix for one model (base or committee member).
// Rows are kept unnormalized; similarity code normalizes on the fly.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  // Throws Error{invalid_argument} for unsorted/duplicate ids or a size
  // mismatch, Error{zero_norm} for a zero or non-finite row.
  EmbeddingSet(std::vector<SampleId> ids, std::size_t dim,
               std::vector<float> values);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return ids_.empty(); }

  std::span<const SampleId> ids() const noexcept { return ids_; }
  std::span<const float> values() const noexcept { return values_; }

  std::span<const float> row(std::size_t index) const noexcept {
    return {values_.data() + index * dim_, dim_};
  }

  std::optional<std::size_t> find(SampleId id) const noexcept;
  // Throws Error{unknown_id}.
  std::size_t index_of(SampleId id) const;
  std::span<const float> row_of(SampleId id) const { return row(index_of(id)); }

  // Rows for the given ids (must be sorted and present).
  EmbeddingSet subset(std::span<const SampleId> ids) const;

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;

 private:
  std::vector<SampleId> ids_;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

// Identity annotations used only for training the mediator and for scoring.
class GroundTruth {
 public:
  GroundTruth() = default;
  // Labels must already be contiguous from 0.
  GroundTruth(std::vector<SampleId> ids, std::vector<std::uint32_t> labels);

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t num_identities() const noexcept { return num_identities_; }
  std::span<const SampleId> ids() const noexcept { return ids_; }
  std::span<const std::uint32_t> labels() const noexcept { return labels_; }

  std::optional<std::uint32_t> find(SampleId id) const noexcept;
  std::uint32_t label_of(SampleId id) const;

  // Restriction to a sorted id subset, with labels re-densified in order of
  // first appearance of the original label value.
  GroundTruth subset(std::span<const SampleId> ids) const;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;

 private:
  std::vector<SampleId> ids_;
  std::vector<std::uint32_t> labels_;
  std::size_t num_identities_ = 0;
};

// Labeled / unlabeled partition of sample ids; both lists sorted.
struct Split {
  std::vector<SampleId> labeled;
  std::vector<SampleId> unlabeled;

  friend bool operator==(const Split&, const Split&) = default;
};

struct SyntheticConfig {
  std::size_t num_identities = 110;
  std::size_t samples_min = 50;
  std::size_t samples_max = 50;
  std::size_t dim = 32;
  double intra_class_sigma = 0.12;
  // When > 0, each identity varies only inside its own random subspace of
  // this rank (total variance unchanged). 0 gives isotropic spread.
  std::size_t intra_class_rank = 0;
  std::size_t num_committee = 8;
  double view_rotation_angle = 0.3;
  double view_noise_sigma = 0.08;
  // The first view_weak_dims axes of every committee view (after its
  // rotation) are scaled by view_weak_gain: directions the member barely sees.
  std::size_t view_weak_dims = 0;
  double view_weak_gain = 0.25;
  // Per-axis noise on the base view. Zero keeps the base view clean.
  double base_noise_sigma = 0.0;
  // Heterogeneous: every view gets its own rotation and a noise/angle scale
  // spread over [1 - spread, 1 + spread]. Homogeneous: one shared rotation and
  // identical parameters, only the noise draws differ.
  bool heterogeneous = true;
  double heterogeneity_spread = 0.6;
  // Identities assigned to the labeled split; 0 means one in eleven.
  std::size_t labeled_identities = 0;
  std::uint64_t seed = 7;

  // Throws Error{invalid_argument} naming the offending field.
  void validate() const;
  std::size_t resolved_labeled_identities() const;
};

struct SyntheticData {
  EmbeddingSet base;
  std::vector<EmbeddingSet> committee;
  GroundTruth truth;
  Split split;

  // base followed by the committee, i.e. model index 0 is the base model.
  std::vector<EmbeddingSet> all_views() const;
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

// Haar-random orthogonal matrix (row-major dim x dim) rotated toward the
// identity: angle 0 gives exactly I, larger angles rotate by `angle` radians in
// floor(dim/2) random orthogonal planes.
std::vector<double> random_rotation(std::size_t dim, double angle,
                                    std::uint64_t seed);

// Binary embedding container ("CDPE", version 1, little endian).
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet load_embeddings(const std::filesystem::path& path);

// CSV `id,label`. Non-contiguous labels are remapped on load; a note is
// appended to `warnings` when provided.
void save_labels(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_labels(const std::filesystem::path& path,
                        std::vector<std::string>* warnings = nullptr);

// CSV `id,partition` with partition in {labeled, unlabeled}.
void save_split(const Split& split, const std::filesystem::path& path);
Split load_split(const std::filesystem::path& path);

}  // namespace cdp
