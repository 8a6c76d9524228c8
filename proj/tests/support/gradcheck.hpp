#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <cdp/mediator.hpp>
#include <cdp/rng.hpp>

namespace cdp::test {

// Plain f64 forward pass kept separate from the library. Returns the hidden
// ReLU on/off pattern and fills `probs` with the softmax outputs.
inline std::vector<bool> reference_forward(const MediatorModel& model, std::span<const float> x,
                                           double probs[2]) {
  std::vector<double> a(x.begin(), x.end());
  std::vector<bool> pattern;
  const auto layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    std::vector<double> z(L.outputs);
    for (std::size_t o = 0; o < L.outputs; ++o) {
      double s = L.bias[o];
      for (std::size_t i = 0; i < L.inputs; ++i) s += L.weights[o * L.inputs + i] * a[i];
      z[o] = s;
    }
    if (l + 1 < layers.size()) {
      for (auto& v : z) {
        pattern.push_back(v > 0);
        v = std::max(v, 0.0);
      }
    }
    a = std::move(z);
  }
  const double m = std::max(a[0], a[1]);
  const double e0 = std::exp(a[0] - m), e1 = std::exp(a[1] - m);
  probs[0] = e0 / (e0 + e1);
  probs[1] = e1 / (e0 + e1);
  return pattern;
}

inline double reference_loss(const MediatorModel& model, const std::vector<float>& inputs,
                             const std::vector<std::uint8_t>& targets,
                             std::vector<bool>* pattern = nullptr) {
  const std::size_t dim = model.input_dim();
  double loss = 0;
  if (pattern) pattern->clear();
  for (std::size_t r = 0; r < targets.size(); ++r) {
    double p[2];
    const auto pat = reference_forward(model, {inputs.data() + r * dim, dim}, p);
    if (pattern) pattern->insert(pattern->end(), pat.begin(), pat.end());
    loss -= std::log(p[targets[r]]);
  }
  return loss / static_cast<double>(targets.size());
}

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t parameters = 0;
  std::uint64_t seed = 0;
};

// Central finite differences over every parameter. Central differences are
// only a valid oracle where the loss is smooth, so the batch is re-drawn until
// no ReLU changes state under any single +-step perturbation.
inline GradCheckResult gradient_check(std::size_t committee, std::size_t batch, double step) {
  const FeatureLayout layout{committee, kAllBlocks};
  for (std::uint64_t seed = 1;; ++seed) {
    auto model = MediatorModel::initialize(layout, seed);
    Rng rng(derive_seed(seed, "gradcheck"));
    std::vector<float> inputs(batch * layout.dim());
    for (auto& v : inputs) v = static_cast<float>(rng.uniform());
    std::vector<std::uint8_t> targets(batch);
    for (std::size_t i = 0; i < batch; ++i) targets[i] = i % 2;

    MediatorModel grad = model;
    loss_and_gradient(model, inputs, targets, &grad);

    std::vector<bool> base_pattern, pat;
    reference_loss(model, inputs, targets, &base_pattern);
    GradCheckResult out{0, model.parameter_count(), seed};
    bool smooth = true;
    for (std::size_t p = 0; p < out.parameters && smooth; ++p) {
      const double keep = model.parameter(p);
      model.parameter(p) = keep + step;
      const double up = reference_loss(model, inputs, targets, &pat);
      smooth = pat == base_pattern;
      model.parameter(p) = keep - step;
      const double down = reference_loss(model, inputs, targets, &pat);
      smooth = smooth && pat == base_pattern;
      model.parameter(p) = keep;
      const double numeric = (up - down) / (2 * step);
      const double analytic = grad.parameter(p);
      const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(numeric - analytic) / scale);
    }
    if (smooth) return out;
  }
}

}  // namespace cdp::test
