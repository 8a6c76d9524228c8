#include <doctest.h>

#include <cmath>

#include <cdp/mediator.hpp>

#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace cdp;
using cdp::test::TempDir;

namespace {

// Two blobs in the 11-wide layout of a one-member committee; label = blob.
FeatureMatrix toy_features(std::size_t rows, std::uint64_t seed) {
  FeatureMatrix f;
  f.layout = {1, kAllBlocks};
  Rng rng(seed);
  for (std::size_t r = 0; r < rows; ++r) {
    const bool pos = r % 2 == 0;
    f.pairs.push_back({static_cast<SampleId>(r), static_cast<SampleId>(r + 1)});
    for (std::size_t c = 0; c < f.dim(); ++c)
      f.values.push_back(static_cast<float>((pos ? 0.8 : 0.2) + 0.1 * rng.normal()));
    f.targets.push_back(pos ? 1 : 0);
  }
  return f;
}

}  // namespace

TEST_CASE("analytic gradient matches central finite differences") {
  for (std::size_t committee : {0, 2, 8}) {
    const auto r = test::gradient_check(committee, 10, 1e-3);
    INFO("committee " << committee << " seed " << r.seed);
    CHECK(r.max_rel_error <= 1e-4);
  }
}

TEST_CASE("library loss equals an independent forward pass") {
  const FeatureLayout layout{3, kAllBlocks};
  const auto model = MediatorModel::initialize(layout, 5);
  Rng rng(2);
  std::vector<float> x(6 * layout.dim());
  for (auto& v : x) v = static_cast<float>(rng.uniform());
  const std::vector<std::uint8_t> t = {0, 1, 1, 0, 1, 0};
  CHECK(loss_and_gradient(model, x, t, nullptr) ==
        doctest::Approx(test::reference_loss(model, x, t)).epsilon(1e-12));
  for (std::size_t r = 0; r < 6; ++r) {
    double p[2];
    test::reference_forward(model, {x.data() + r * layout.dim(), layout.dim()}, p);
    const auto got = model.forward({x.data() + r * layout.dim(), layout.dim()});
    CHECK(got[0] == doctest::Approx(p[0]).epsilon(1e-12));
    CHECK(got[0] + got[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("a zero network outputs one half") {
  auto model = MediatorModel::initialize({2, kAllBlocks}, 1);
  for (std::size_t p = 0; p < model.parameter_count(); ++p) model.parameter(p) = 0;
  const std::vector<float> x(model.input_dim(), 0.3f);
  const auto out = model.forward(x);
  CHECK(out[0] == 0.5);
  CHECK(out[1] == 0.5);
  CHECK(loss_and_gradient(model, x, std::vector<std::uint8_t>{1}, nullptr) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("architecture and initialization") {
  const auto model = MediatorModel::initialize({8, kAllBlocks}, 3);
  REQUIRE(model.layers().size() == 3);
  CHECK(model.layers()[0].inputs == 53);
  CHECK(model.layers()[0].outputs == 50);
  CHECK(model.layers()[1].outputs == 50);
  CHECK(model.layers()[2].outputs == 2);
  CHECK(model.parameter_count() == 53 * 50 + 50 + 50 * 50 + 50 + 50 * 2 + 2);
  for (const auto& l : model.layers()) {
    const double bound = std::sqrt(6.0 / double(l.inputs + l.outputs));
    for (double w : l.weights) CHECK(std::abs(w) <= bound);
    for (double b : l.bias) CHECK(b == 0.0);
  }
  CHECK(MediatorModel::initialize({8, kAllBlocks}, 3) == model);
  CHECK_FALSE(MediatorModel::initialize({8, kAllBlocks}, 4) == model);
}

TEST_CASE("training separates a separable toy set and is deterministic") {
  const auto f = toy_features(400, 9);
  TrainConfig cfg;
  cfg.seed = 17;
  const auto a = train_mediator(f, cfg);
  const auto b = train_mediator(f, cfg);
  CHECK(a.model == b.model);
  CHECK(a.epoch_loss == b.epoch_loss);
  REQUIRE(a.epoch_loss.size() == 4);
  CHECK(a.epoch_loss.back() < std::log(2.0) / 4);

  const auto test_set = toy_features(200, 10);
  const auto probs = predict(a.model, test_set);
  std::size_t right = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) right += (probs[i] >= 0.5) == (test_set.targets[i] == 1);
  CHECK(right >= 195);
  CHECK(predict(a.model, test_set, 4) == probs);
}

TEST_CASE("training rejects single-class data and missing targets") {
  auto f = toy_features(10, 1);
  std::fill(f.targets.begin(), f.targets.end(), 1);
  CHECK(test::error_code_of([&] { train_mediator(f, {}); }) == Errc::invalid_argument);
  f.targets.clear();
  CHECK(test::error_code_of([&] { train_mediator(f, {}); }) == Errc::invalid_argument);
  TrainConfig bad;
  bad.learning_rate = 0;
  CHECK(test::error_code_of([&] { train_mediator(toy_features(10, 1), bad); }) ==
        Errc::invalid_argument);
}

TEST_CASE("training pairs come from the labeled base graph with identity targets") {
  const EmbeddingSet base({0, 1, 2, 3}, 2, {1, 0, 1, 0.1f, 0, 1, 0.1f, 1});
  const GroundTruth truth({0, 1, 2, 3}, {0, 0, 1, 1});
  const std::vector<EmbeddingSet> sets = {base};
  const auto f = build_training_pairs(sets, truth, 1);
  REQUIRE(f.rows() == 2);
  CHECK(f.pairs[0] == CandidatePair{0, 1});
  CHECK(f.pairs[1] == CandidatePair{2, 3});
  CHECK(f.targets == std::vector<std::uint8_t>{1, 1});
  CHECK(f.layout.dim() == 5);

  const GroundTruth one({0, 1, 2, 3}, {0, 0, 0, 0});
  CHECK(test::error_code_of([&] { build_training_pairs(sets, one, 1); }) == Errc::invalid_argument);
}

TEST_CASE("raising the threshold only removes pairs") {
  std::vector<CandidatePair> cands;
  std::vector<double> probs;
  Rng rng(4);
  for (SampleId i = 0; i < 200; ++i) {
    cands.push_back({i, i + 1});
    probs.push_back(rng.uniform());
  }
  probs[5] = 0.96;
  std::vector<SelectedEdge> prev = select_pairs(cands, probs, 0.0);
  CHECK(prev.size() == 200);
  for (double th : {0.1, 0.5, 0.9, 0.96, 0.99, 1.0}) {
    const auto cur = select_pairs(cands, probs, th);
    CHECK(cur.size() <= prev.size());
    for (const auto& e : cur) {
      CHECK(e.weight >= th);
      CHECK(std::any_of(prev.begin(), prev.end(), [&](const SelectedEdge& p) { return p.pair == e.pair; }));
    }
    prev = cur;
  }
  const auto at = select_pairs(cands, probs, 0.96);
  CHECK(std::any_of(at.begin(), at.end(), [](const SelectedEdge& e) { return e.pair.a == 5; }));
  CHECK(test::error_code_of([&] { select_pairs(cands, probs, 1.5); }) == Errc::invalid_argument);
}

TEST_CASE("voting counts linking members") {
  // Member 0 links 0-1 and 2-3; member 1 links 0-1 and 1-2 (as 2's neighbor).
  const EmbeddingSet m0({0, 1, 2, 3}, 2, {1, 0, 1, 0.1f, 0, 1, 0.1f, 1});
  const EmbeddingSet m1({0, 1, 2, 3}, 2, {1, 0, 1, 0.2f, 1, 0.3f, -1, 0});
  const std::vector<KnnGraph> g = {build_knn_graph(m0, 1), build_knn_graph(m1, 1)};
  const std::vector<CandidatePair> pairs = {{0, 1}, {2, 3}, {1, 2}, {0, 3}};
  std::vector<std::size_t> votes;
  for (const auto& p : pairs) {
    std::size_t v = 0;
    for (const auto& gr : g) v += gr.linked(gr.index_of(p.a), gr.index_of(p.b));
    votes.push_back(v);
  }
  for (std::size_t q = 1; q <= 2; ++q) {
    const auto sel = vote_select_all(pairs, g, q);
    std::size_t want = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto e = vote_select(pairs[i], g, q);
      CHECK(e.has_value() == (votes[i] >= q));
      if (e) CHECK(e->weight == votes[i] / 2.0);
      want += votes[i] >= q;
    }
    CHECK(sel.size() == want);
  }
  CHECK(vote_select(pairs[0], g, 2)->weight == 1.0);
  CHECK(test::error_code_of([&] { vote_select(pairs[0], g, 0); }) == Errc::invalid_argument);
  CHECK(test::error_code_of([&] { vote_select(pairs[0], g, 3); }) == Errc::invalid_argument);
}

TEST_CASE("first-layer report groups columns by block") {
  const auto model = MediatorModel::initialize({2, kRelationship | kDistribution}, 1);
  const auto rep = inspect_first_layer(model);
  CHECK(rep.cols == 2 + 12);
  REQUIRE(rep.blocks.size() == 4);
  CHECK(rep.blocks[0].size == 2);
  CHECK(rep.blocks[1].size == 0);
  CHECK(rep.blocks[1].mean_abs_weight == 0.0);
  CHECK(rep.blocks[2].offset == 2);
  CHECK(rep.blocks[3].offset == 8);
  double sum = 0;
  for (std::size_t r = 0; r < 50; ++r) sum += std::abs(model.layers()[0].weights[r * 14 + 0]) +
                                             std::abs(model.layers()[0].weights[r * 14 + 1]);
  CHECK(rep.blocks[0].mean_abs_weight == doctest::Approx(sum / 100).epsilon(1e-12));
}

TEST_CASE("model file round trip is exact") {
  TempDir dir("model");
  const auto model = MediatorModel::initialize({4, kRelationship | kAffinity}, 8);
  save_model(model, dir / "m.cdpm");
  CHECK(load_model(dir / "m.cdpm") == model);
  auto bytes = test::slurp(dir / "m.cdpm");
  test::spit(dir / "t.cdpm", bytes.substr(0, bytes.size() - 8));
  CHECK(test::error_code_of([&] { load_model(dir / "t.cdpm"); }) == Errc::truncated);
  bytes[0] = 'X';
  test::spit(dir / "b.cdpm", bytes);
  CHECK(test::error_code_of([&] { load_model(dir / "b.cdpm"); }) == Errc::bad_magic);
}
