#include "cdp/mediator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "cdp/error.hpp"
#include "cdp/parallel.hpp"
#include "cdp/rng.hpp"

namespace cdp {

namespace {

constexpr std::uint32_t kModelVersion = 1;

// Activations of one forward pass, kept for backpropagation.
struct Trace {
  std::vector<std::vector<double>> act;  // act[0] = input, act[l+1] = output of layer l
  std::array<double, 2> prob{};
};

void forward_trace(const std::vector<DenseLayer>& layers, std::span<const float> input, Trace& t) {
  t.act.resize(layers.size() + 1);
  t.act[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const auto& x = t.act[l];
    auto& y = t.act[l + 1];
    y.assign(layer.outputs, 0.0);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double* w = layer.weights.data() + o * layer.inputs;
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < layer.inputs; ++i) acc += w[i] * x[i];
      y[o] = (l + 1 < layers.size()) ? std::max(acc, 0.0) : acc;
    }
  }
  const auto& z = t.act.back();
  const double top = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - top);
  const double e1 = std::exp(z[1] - top);
  t.prob = {e0 / (e0 + e1), e1 / (e0 + e1)};
}

double cross_entropy(const Trace& t, std::uint8_t target) {
  const auto& z = t.act.back();
  const double top = std::max(z[0], z[1]);
  const double lse = top + std::log(std::exp(z[0] - top) + std::exp(z[1] - top));
  return lse - z[target ? 1 : 0];
}

// Adds scale * dLoss/dparam of one example into `grad`.
void backward(const std::vector<DenseLayer>& layers, const Trace& t, std::uint8_t target,
              double scale, std::vector<DenseLayer>& grad) {
  std::vector<double> delta = {t.prob[0] * scale, t.prob[1] * scale};
  delta[target ? 1 : 0] -= scale;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    auto& g = grad[l];
    const auto& x = t.act[l];
    std::vector<double> prev(layer.inputs, 0.0);
    for (std::size_t o = 0; o < layer.outputs; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      g.bias[o] += d;
      double* gw = g.weights.data() + o * layer.inputs;
      const double* w = layer.weights.data() + o * layer.inputs;
      for (std::size_t i = 0; i < layer.inputs; ++i) {
        gw[i] += d * x[i];
        prev[i] += d * w[i];
      }
    }
    if (l > 0)
      for (std::size_t i = 0; i < layer.inputs; ++i)
        if (x[i] <= 0.0) prev[i] = 0.0;
    delta = std::move(prev);
  }
}

void zero(std::vector<DenseLayer>& layers) {
  for (auto& l : layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

}  // namespace

void TrainConfig::validate() const {
  require(std::isfinite(learning_rate) && learning_rate > 0, Errc::invalid_argument,
          "train config: learning_rate must be > 0");
  require(epochs >= 1, Errc::invalid_argument, "train config: epochs must be >= 1");
  require(batch_size >= 1, Errc::invalid_argument, "train config: batch_size must be >= 1");
  require(lr_decay > 0 && lr_decay <= 1, Errc::invalid_argument,
          "train config: lr_decay must be in (0, 1]");
  require(negative_keep_ratio > 0 && negative_keep_ratio <= 1, Errc::invalid_argument,
          "train config: negative_keep_ratio must be in (0, 1]");
}

MediatorModel::MediatorModel(FeatureLayout layout, std::vector<DenseLayer> layers)
    : layout_(layout), layers_(std::move(layers)) {
  require(!layers_.empty(), Errc::invalid_argument, "model needs at least one layer");
  require(layers_.front().inputs == layout_.dim(), Errc::dimension_mismatch,
          "first layer width does not match the feature layout");
  require(layers_.back().outputs == 2, Errc::invalid_argument, "model must have 2 outputs");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    require(layer.weights.size() == layer.inputs * layer.outputs &&
                layer.bias.size() == layer.outputs,
            Errc::dimension_mismatch, "layer parameter sizes are inconsistent");
    if (l > 0)
      require(layer.inputs == layers_[l - 1].outputs, Errc::dimension_mismatch,
              "adjacent layer widths disagree");
    for (double w : layer.weights) require(std::isfinite(w), Errc::invariant, "non-finite weight");
    for (double b : layer.bias) require(std::isfinite(b), Errc::invariant, "non-finite bias");
  }
}

MediatorModel MediatorModel::initialize(FeatureLayout layout, std::uint64_t seed) {
  const std::size_t dims[] = {layout.dim(), kHidden, kHidden, 2};
  require(dims[0] > 0, Errc::invalid_argument, "mediator input dimension is zero");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < std::size(dims); ++l) {
    DenseLayer layer;
    layer.inputs = dims[l];
    layer.outputs = dims[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
    layer.weights.resize(layer.inputs * layer.outputs);
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    layer.bias.assign(layer.outputs, 0.0);
    layers.push_back(std::move(layer));
  }
  return MediatorModel(layout, std::move(layers));
}

std::size_t MediatorModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

double& MediatorModel::parameter(std::size_t index) {
  for (auto& l : layers_) {
    if (index < l.weights.size()) return l.weights[index];
    index -= l.weights.size();
    if (index < l.bias.size()) return l.bias[index];
    index -= l.bias.size();
  }
  fail(Errc::invalid_argument, "parameter index out of range");
}

double MediatorModel::parameter(std::size_t index) const {
  return const_cast<MediatorModel*>(this)->parameter(index);
}

std::array<double, 2> MediatorModel::forward(std::span<const float> input) const {
  require(input.size() == input_dim(), Errc::dimension_mismatch,
          "feature dim " + std::to_string(input.size()) + " does not match model input " +
              std::to_string(input_dim()));
  Trace t;
  forward_trace(layers_, input, t);
  return t.prob;
}

double loss_and_gradient(const MediatorModel& model, std::span<const float> inputs,
                         std::span<const std::uint8_t> targets, MediatorModel* gradient) {
  const std::size_t dim = model.input_dim();
  require(!targets.empty() && inputs.size() == targets.size() * dim, Errc::dimension_mismatch,
          "batch inputs do not match targets x input dim");
  std::vector<DenseLayer> layers(model.layers().begin(), model.layers().end());
  std::vector<DenseLayer> grad;
  if (gradient) {
    grad = layers;
    zero(grad);
  }
  const double scale = 1.0 / static_cast<double>(targets.size());
  Trace t;
  double loss = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    forward_trace(layers, inputs.subspan(r * dim, dim), t);
    loss += cross_entropy(t, targets[r]);
    if (gradient) backward(layers, t, targets[r], scale, grad);
  }
  if (gradient) *gradient = MediatorModel(model.layout(), std::move(grad));
  return loss * scale;
}

TrainResult train_mediator(const FeatureMatrix& features, const TrainConfig& cfg) {
  cfg.validate();
  require(features.targets.size() == features.rows(), Errc::invalid_argument,
          "training features carry no targets");
  const auto positives = std::count(features.targets.begin(), features.targets.end(), 1);
  require(positives > 0 && static_cast<std::size_t>(positives) < features.rows(),
          Errc::invalid_argument, "training data must contain both positive and negative pairs");

  Rng rng(derive_seed(cfg.seed, "mediator/train"));
  TrainResult result{MediatorModel::initialize(features.layout, derive_seed(cfg.seed, "mediator/init")),
                     {}};

  std::vector<std::size_t> order;
  for (std::size_t r = 0; r < features.rows(); ++r) {
    if (features.targets[r] == 0 && cfg.negative_keep_ratio < 1.0 &&
        rng.uniform() >= cfg.negative_keep_ratio)
      continue;
    order.push_back(r);
  }

  std::vector<DenseLayer> layers(result.model.layers().begin(), result.model.layers().end());
  std::vector<DenseLayer> grad = layers;
  Trace t;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.learning_rate * (epoch >= cfg.decay_after_epoch ? cfg.lr_decay : 1.0);
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      zero(grad);
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t r = order[i];
        forward_trace(layers, features.row(r), t);
        backward(layers, t, features.targets[r], scale, grad);
      }
      for (std::size_t l = 0; l < layers.size(); ++l) {
        for (std::size_t p = 0; p < layers[l].weights.size(); ++p)
          layers[l].weights[p] -= lr * grad[l].weights[p];
        for (std::size_t p = 0; p < layers[l].bias.size(); ++p)
          layers[l].bias[p] -= lr * grad[l].bias[p];
      }
    }
    double loss = 0.0;
    for (std::size_t r = 0; r < features.rows(); ++r) {
      forward_trace(layers, features.row(r), t);
      loss += cross_entropy(t, features.targets[r]);
    }
    result.epoch_loss.push_back(loss / static_cast<double>(features.rows()));
  }
  result.model = MediatorModel(features.layout, std::move(layers));
  return result;
}

FeatureMatrix build_training_pairs(std::span<const EmbeddingSet> labeled_sets,
                                   const GroundTruth& truth, std::size_t k, unsigned blocks,
                                   unsigned workers) {
  require(!labeled_sets.empty() && labeled_sets[0].size() >= 2, Errc::invalid_argument,
          "labeled split needs at least two samples");
  const auto& base = labeled_sets[0];
  std::vector<std::uint32_t> labels;
  labels.reserve(base.size());
  for (SampleId id : base.ids()) labels.push_back(truth.label_of(id));
  const bool single_identity =
      std::all_of(labels.begin(), labels.end(), [&](auto l) { return l == labels.front(); });
  require(!single_identity, Errc::invalid_argument,
          "labeled split contains a single identity; cannot form negative pairs");

  std::vector<KnnGraph> graphs;
  graphs.reserve(labeled_sets.size());
  for (const auto& set : labeled_sets) graphs.push_back(build_knn_graph(set, k, workers));
  const auto pairs = candidate_pairs(graphs[0]);
  auto features = assemble_features(pairs, graphs, labeled_sets, blocks, workers);
  features.targets.reserve(pairs.size());
  for (const auto& p : pairs)
    features.targets.push_back(labels[base.index_of(p.a)] == labels[base.index_of(p.b)] ? 1 : 0);
  return features;
}

std::vector<double> predict(const MediatorModel& model, const FeatureMatrix& features,
                            unsigned workers) {
  require(features.dim() == model.input_dim() && features.layout == model.layout(),
          Errc::dimension_mismatch, "feature layout does not match the mediator model");
  std::vector<double> out(features.rows());
  parallel_for(features.rows(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) out[r] = model.forward(features.row(r))[1];
  });
  return out;
}

std::vector<SelectedEdge> select_pairs(std::span<const CandidatePair> candidates,
                                       std::span<const double> probabilities, double threshold) {
  require(threshold >= 0.0 && threshold <= 1.0, Errc::invalid_argument,
          "selection threshold must lie in [0, 1]");
  require(candidates.size() == probabilities.size(), Errc::dimension_mismatch,
          "candidates and probabilities differ in length");
  std::vector<SelectedEdge> out;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (probabilities[i] >= threshold) out.push_back({candidates[i], probabilities[i]});
  return out;
}

std::optional<SelectedEdge> vote_select(const CandidatePair& pair,
                                        std::span<const KnnGraph> committee_graphs,
                                        std::size_t quorum) {
  const std::size_t n = committee_graphs.size();
  require(quorum >= 1 && quorum <= n, Errc::invalid_argument,
          "quorum must lie in [1, committee size]");
  std::size_t votes = 0;
  for (const auto& g : committee_graphs)
    if (g.linked(g.index_of(pair.a), g.index_of(pair.b))) ++votes;
  if (votes < quorum) return std::nullopt;
  return SelectedEdge{pair, static_cast<double>(votes) / static_cast<double>(n)};
}

std::vector<SelectedEdge> vote_select_all(std::span<const CandidatePair> pairs,
                                          std::span<const KnnGraph> committee_graphs,
                                          std::size_t quorum) {
  std::vector<SelectedEdge> out;
  for (const auto& p : pairs)
    if (auto e = vote_select(p, committee_graphs, quorum)) out.push_back(*e);
  return out;
}

FirstLayerReport inspect_first_layer(const MediatorModel& model) {
  const auto& first = model.layers().front();
  FirstLayerReport report;
  report.rows = first.outputs;
  report.cols = first.inputs;
  report.abs_weights.reserve(first.weights.size());
  for (double w : first.weights) report.abs_weights.push_back(std::abs(w));

  const auto& layout = model.layout();
  const std::pair<const char*, std::size_t> blocks[] = {
      {"IR", layout.relationship_size()},
      {"IA", layout.affinity_size()},
      {"ID_mean", layout.mean_size()},
      {"ID_var", layout.var_size()},
  };
  std::size_t offset = 0;
  for (const auto& [name, size] : blocks) {
    double sum = 0.0;
    for (std::size_t r = 0; r < report.rows; ++r)
      for (std::size_t c = offset; c < offset + size; ++c) sum += report.abs_weights[r * report.cols + c];
    const double mean = size == 0 ? 0.0 : sum / static_cast<double>(size * report.rows);
    report.blocks.push_back({name, offset, size, mean});
    offset += size;
  }
  return report;
}

void write_first_layer_csv(const FirstLayerReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot open for writing: " + path.string());
  out << "block,offset,size,mean_abs_weight\n";
  char buf[64];
  for (const auto& b : report.blocks) {
    std::snprintf(buf, sizeof buf, "%.9f", b.mean_abs_weight);
    out << b.block << ',' << b.offset << ',' << b.size << ',' << buf << '\n';
  }
  if (!out) fail(Errc::io, "write failed: " + path.string());
}

void save_model(const MediatorModel& model, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("CDPM");
  w.put<std::uint32_t>(kModelVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.layout().committee));
  w.put<std::uint32_t>(model.layout().blocks);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.layers().size()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.layers().front().inputs));
  for (const auto& l : model.layers()) w.put<std::uint32_t>(static_cast<std::uint32_t>(l.outputs));
  for (const auto& l : model.layers()) {
    for (double v : l.weights) w.put<double>(v);
    for (double v : l.bias) w.put<double>(v);
  }
  w.flush(path);
}

MediatorModel load_model(const std::filesystem::path& path) {
  detail::ByteReader r(path);
  r.expect_magic("CDPM");
  const auto version = r.get<std::uint32_t>();
  if (version != kModelVersion)
    fail(Errc::unsupported_version, path.string() + ": model version " + std::to_string(version));
  FeatureLayout layout;
  layout.committee = r.get<std::uint32_t>();
  layout.blocks = r.get<std::uint32_t>();
  if (layout.blocks == 0 || (layout.blocks & ~kAllBlocks) != 0)
    fail(Errc::malformed, path.string() + ": bad block mask");
  const auto count = r.get<std::uint32_t>();
  if (count == 0 || count > 16) fail(Errc::malformed, path.string() + ": bad layer count");
  std::vector<std::size_t> dims(count + 1);
  for (auto& d : dims) d = r.get<std::uint32_t>();
  std::uint64_t needed = 0;
  for (std::size_t l = 0; l < count; ++l) needed += 8ull * (dims[l] * dims[l + 1] + dims[l + 1]);
  r.expect_exact_payload(needed);
  std::vector<DenseLayer> layers(count);
  for (std::size_t l = 0; l < count; ++l) {
    auto& layer = layers[l];
    layer.inputs = dims[l];
    layer.outputs = dims[l + 1];
    layer.weights.resize(layer.inputs * layer.outputs);
    layer.bias.resize(layer.outputs);
    for (auto& v : layer.weights) v = r.get<double>();
    for (auto& v : layer.bias) v = r.get<double>();
  }
  return MediatorModel(layout, std::move(layers));
}

}  // namespace cdp
