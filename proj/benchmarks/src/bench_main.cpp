#include <benchmark/benchmark.h>

#include <cdp/experiment.hpp>
#include <cdp/rng.hpp>

namespace {

using namespace cdp;

EmbeddingSet gaussian_set(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> values(n * dim);
  for (auto& v : values) v = static_cast<float>(rng.normal());
  std::vector<SampleId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return EmbeddingSet(std::move(ids), dim, std::move(values));
}

void BM_KnnGraph(benchmark::State& state) {
  const auto set = gaussian_set(static_cast<std::size_t>(state.range(0)), 32, 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_knn_graph(set, 20));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KnnGraph)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

struct Models {
  std::vector<EmbeddingSet> sets;
  std::vector<KnnGraph> graphs;
  std::vector<CandidatePair> pairs;
};

const Models& models() {
  static const Models m = [] {
    SyntheticConfig c;
    c.num_identities = 40;
    const auto data = generate_synthetic(c);
    Models out;
    out.sets = data.all_views();
    for (const auto& s : out.sets) out.graphs.push_back(build_knn_graph(s, 20));
    out.pairs = candidate_pairs(out.graphs[0]);
    return out;
  }();
  return m;
}

void BM_AssembleFeatures(benchmark::State& state) {
  const auto& m = models();
  for (auto _ : state) benchmark::DoNotOptimize(assemble_features(m.pairs, m.graphs, m.sets));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m.pairs.size()));
}
BENCHMARK(BM_AssembleFeatures)->Unit(benchmark::kMillisecond);

void BM_Predict(benchmark::State& state) {
  const auto& m = models();
  const auto features = assemble_features(m.pairs, m.graphs, m.sets);
  const auto model = MediatorModel::initialize(features.layout, 3);
  for (auto _ : state) benchmark::DoNotOptimize(predict(model, features));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(features.rows()));
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMillisecond);

void BM_Propagate(benchmark::State& state) {
  const auto& m = models();
  Rng rng(5);
  std::vector<SelectedEdge> edges;
  for (const auto& p : m.pairs) edges.push_back({p, rng.uniform()});
  const auto ids = m.sets[0].ids();
  const auto graph = ConsensusGraph::from_selection({ids.begin(), ids.end()}, edges);
  PropagationConfig cfg;
  cfg.max_size = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(propagate(graph, cfg));
}
BENCHMARK(BM_Propagate)->Arg(50)->Arg(300)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
