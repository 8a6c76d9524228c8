#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cdp/dataset.hpp"
#include "cdp/features.hpp"
#include "cdp/knn_graph.hpp"

namespace cdp {

inline constexpr double kDefaultSelectThreshold = 0.96;

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 4;
  // The step size is multiplied by lr_decay once this many epochs finished.
  std::size_t decay_after_epoch = 3;
  double lr_decay = 0.1;
  std::size_t batch_size = 16;
  // Fraction of negative pairs kept; 1 trains on every candidate pair.
  double negative_keep_ratio = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;  // outputs x inputs, row-major
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// input -> 50 -> 50 -> 2 MLP with ReLU hidden units and a softmax output.
// Output index 1 is the "same identity" class.
class MediatorModel {
 public:
  static constexpr std::size_t kHidden = 50;

  MediatorModel() = default;
  MediatorModel(FeatureLayout layout, std::vector<DenseLayer> layers);

  // Xavier-uniform weights, zero biases.
  static MediatorModel initialize(FeatureLayout layout, std::uint64_t seed);

  const FeatureLayout& layout() const noexcept { return layout_; }
  std::size_t input_dim() const noexcept { return layers_.front().inputs; }
  std::span<const DenseLayer> layers() const noexcept { return layers_; }

  // Flat view over every weight and bias, layer by layer (weights first).
  std::size_t parameter_count() const noexcept;
  double& parameter(std::size_t index);
  double parameter(std::size_t index) const;

  // Softmax probabilities {p(negative), p(positive)}.
  std::array<double, 2> forward(std::span<const float> input) const;

  friend bool operator==(const MediatorModel&, const MediatorModel&) = default;

 private:
  FeatureLayout layout_;
  std::vector<DenseLayer> layers_;
};

// Mean cross-entropy over the batch. When `gradient` is given it receives
// dLoss/dparam in the same layout as `model`.
double loss_and_gradient(const MediatorModel& model, std::span<const float> inputs,
                         std::span<const std::uint8_t> targets, MediatorModel* gradient);

struct TrainResult {
  MediatorModel model;
  // Full-data mean loss after each epoch.
  std::vector<double> epoch_loss;
};

// Deterministic mini-batch SGD. Throws Error{invalid_argument} for a bad
// config, missing targets or single-class data.
TrainResult train_mediator(const FeatureMatrix& features, const TrainConfig& cfg);

// Candidate pairs of the base graph on labeled data with same-identity
// targets. `labeled_sets` holds the base model first.
FeatureMatrix build_training_pairs(std::span<const EmbeddingSet> labeled_sets,
                                   const GroundTruth& truth, std::size_t k = kDefaultK,
                                   unsigned blocks = kAllBlocks, unsigned workers = 1);

// p(positive) per row.
std::vector<double> predict(const MediatorModel& model, const FeatureMatrix& features,
                            unsigned workers = 1);

struct SelectedEdge {
  CandidatePair pair;
  double weight;
};

// Pairs with probability >= threshold, in input order.
std::vector<SelectedEdge> select_pairs(std::span<const CandidatePair> candidates,
                                       std::span<const double> probabilities,
                                       double threshold = kDefaultSelectThreshold);

// Committee voting baseline. Selected iff at least `quorum` members link the
// pair; weight = votes / N. quorum must lie in [1, N].
std::optional<SelectedEdge> vote_select(const CandidatePair& pair,
                                        std::span<const KnnGraph> committee_graphs,
                                        std::size_t quorum);
std::vector<SelectedEdge> vote_select_all(std::span<const CandidatePair> pairs,
                                          std::span<const KnnGraph> committee_graphs,
                                          std::size_t quorum);

struct WeightBlockSummary {
  std::string block;  // IR, IA, ID_mean, ID_var
  std::size_t offset;
  std::size_t size;
  double mean_abs_weight;  // 0 for empty blocks
};

struct FirstLayerReport {
  std::size_t rows = 0;  // hidden units
  std::size_t cols = 0;  // input dim
  std::vector<double> abs_weights;
  std::vector<WeightBlockSummary> blocks;  // always four rows
};

FirstLayerReport inspect_first_layer(const MediatorModel& model);
void write_first_layer_csv(const FirstLayerReport& report, const std::filesystem::path& path);

// Binary model file ("CDPM", version 1): committee size, block mask, layer
// dims, then f64 weights and biases in layer order.
void save_model(const MediatorModel& model, const std::filesystem::path& path);
MediatorModel load_model(const std::filesystem::path& path);

}  // namespace cdp
