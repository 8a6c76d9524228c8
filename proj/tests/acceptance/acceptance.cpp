#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <cdp/experiment.hpp>
#include <cdp/rng.hpp>

#include "gradcheck.hpp"
#include "knn_oracle.hpp"
#include "propagation_oracle.hpp"
#include "test_util.hpp"

using namespace cdp;

namespace {

// Pinned tolerances.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradStep = 1e-3;
constexpr double kSimTolerance = 1e-12;
constexpr double kSoftSumTolerance = 1e-6;
constexpr double kMinPairPrecision = 0.95;
constexpr std::uint64_t kBenchmarkSeed = 7;
const std::vector<std::uint64_t> kHeteroSeeds = {1, 2, 3, 4, 5};

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void criterion(const std::string& name, double limit_s, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out{false, ""};
  try {
    out = fn();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= limit_s) {
    out.pass = false;
    out.detail += fmt(" [over the %.0f s budget]", limit_s);
  }
  failures += !out.pass;
  std::printf("%s %s (%.2f s / %.0f s): %s\n", out.pass ? "PASS" : "FAIL", name.c_str(), secs,
              limit_s, out.detail.c_str());
  std::fflush(stdout);
}

struct Benchmark {
  SplitViews labeled, unlabeled;
};

Benchmark load_benchmark(std::uint64_t seed, bool heterogeneous, std::size_t max_k) {
  const auto data = generate_synthetic(benchmark_data(seed, heterogeneous));
  const auto views = data.all_views();
  return {SplitViews::build(views, data.split.labeled, data.truth, max_k, 1),
          SplitViews::build(views, data.split.unlabeled, data.truth, max_k, 1)};
}

Outcome dimension_law() {
  std::string detail;
  for (std::size_t n : {0, 1, 4, 8}) {
    SyntheticConfig c;
    c.num_identities = 6;
    c.samples_min = c.samples_max = 4;
    c.dim = 8;
    c.num_committee = n;
    c.labeled_identities = 1;
    const auto data = generate_synthetic(c);
    const auto sets = data.all_views();
    std::vector<KnnGraph> graphs;
    for (const auto& s : sets) graphs.push_back(build_knn_graph(s, 3));
    const auto pairs = candidate_pairs(graphs[0]);
    const auto single = assemble_mediator_input(pairs.front(), graphs, sets).size();
    const auto batch = assemble_features(pairs, graphs, sets).dim();
    const auto model = MediatorModel::initialize({n, kAllBlocks}, 1).input_dim();
    detail += fmt("N=%zu:%zu ", n, single);
    if (single != 6 * n + 5 || batch != single || model != single)
      return {false, detail + "length differs from 6N+5"};
  }
  const auto first = MediatorModel::initialize({8, kAllBlocks}, 1).layers().front();
  detail += fmt("first layer %zux%zu", first.outputs, first.inputs);
  return {first.outputs == 50 && first.inputs == 53, detail};
}

Outcome propagation_oracle() {
  PropagationConfig cfg;
  cfg.max_size = 2;
  const auto triangle =
      propagate(ConsensusGraph({0, 1, 2}, {{0, 1, .9}, {0, 2, .9}, {1, 2, .9}}), cfg);
  if (!triangle.ids.empty() || triangle.unlabeled_ids.size() != 3)
    return {false, "triangle trace: expected every node unlabeled"};
  const auto chain =
      propagate(ConsensusGraph({0, 1, 2, 3}, {{0, 1, .99}, {1, 2, .95}, {2, 3, .99}}), cfg);
  if (chain.num_labels != 2 || chain.labels != std::vector<std::uint32_t>{0, 0, 1, 1})
    return {false, "chain trace: expected {0,1} and {2,3}"};

  Rng rng(derive_seed(kBenchmarkSeed, "acceptance/propagation"));
  std::size_t splits = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto g = test::random_graph(rng, 12);
    PropagationConfig c;
    c.max_size = 1 + rng.below(6);
    c.step = rng.uniform(0.05, 0.5);
    const auto got = propagate(ConsensusGraph(g.nodes, g.edges), c);
    const auto want = test::oracle_propagate(g.nodes, g.edges, c.max_size, c.step);
    if (!(got == want)) return {false, fmt("graph %d differs from the transliteration", t)};
    splits += got.num_labels;
  }
  return {true, fmt("hand traces ok, 1000 graphs equal (%zu clusters)", splits)};
}

Outcome knn_oracle() {
  Rng rng(derive_seed(kBenchmarkSeed, "acceptance/knn"));
  std::size_t checked = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(199);
    const std::size_t dim = 1 + rng.below(32);
    const std::size_t k = 1 + rng.below(std::min<std::size_t>(n + 5, 40));
    std::vector<float> values(n * dim);
    for (auto& v : values) v = static_cast<float>(rng.normal());
    // Exact duplicates so the id tie-break is exercised.
    for (std::size_t r = 1; r < n; ++r)
      if (rng.uniform() < 0.1) {
        const std::size_t src = rng.below(r);
        std::copy_n(values.begin() + src * dim, dim, values.begin() + r * dim);
      }
    std::vector<SampleId> ids(n);
    SampleId id = rng.below(4);
    for (auto& x : ids) x = id += 1 + rng.below(3);
    const EmbeddingSet set(std::move(ids), dim, std::move(values));
    const auto g = build_knn_graph(set, k, 1 + rng.below(4));
    const auto want = test::brute_force_knn(set, k);
    if (g.width() != std::min(k, n - 1)) return {false, fmt("dataset %d: wrong width", t)};
    for (std::size_t i = 0; i < n; ++i) {
      const auto got = g.neighbors(i);
      for (std::size_t r = 0; r < got.size(); ++r) {
        if (g.id_of(got[r].index) != want[i][r].id ||
            std::abs(got[r].similarity - want[i][r].sim) > kSimTolerance)
          return {false, fmt("dataset %d node %zu rank %zu differs", t, i, r)};
        ++checked;
      }
    }
  }
  return {true, fmt("100 datasets, %zu neighbor slots equal", checked)};
}

Outcome gradient() {
  std::string detail;
  bool pass = true;
  for (std::size_t n : {0, 8}) {
    const auto r = test::gradient_check(n, 10, kGradStep);
    pass = pass && r.max_rel_error <= kGradTolerance;
    detail += fmt("N=%zu: %zu params, max rel err %.2e; ", n, r.parameters, r.max_rel_error);
  }
  return {pass, detail};
}

std::optional<Benchmark> bench7;

Outcome table2() {
  bench7 = load_benchmark(kBenchmarkSeed, true, 40);
  const auto p = benchmark_params(kBenchmarkSeed);
  const auto med = run_mediator(bench7->labeled, bench7->unlabeled, p);
  const auto vote = run_voting(bench7->unlabeled, p);
  const bool a = med.pairs.pair_count > vote.pairs.pair_count &&
                 med.pairs.precision >= kMinPairPrecision;
  const bool b = med.clusters.pairwise_precision > vote.clusters.pairwise_precision;
  return {a && b,
          fmt("%zu unlabeled; (a) mediator %zu pairs @ %.4f vs voting %zu pairs; "
              "(b) pairwise precision %.4f vs %.4f",
              bench7->unlabeled.truth.ids().size(), med.pairs.pair_count, med.pairs.precision,
              vote.pairs.pair_count, med.clusters.pairwise_precision,
              vote.clusters.pairwise_precision)};
}

Outcome k_sweep() {
  if (!bench7) bench7 = load_benchmark(kBenchmarkSeed, true, 40);
  std::string detail;
  bool pass = true;
  std::size_t last_count = 0;
  double last_prec = 2;
  for (std::size_t k : {10, 20, 30, 40}) {
    const auto r =
        run_mediator(bench7->labeled, bench7->unlabeled, benchmark_params(kBenchmarkSeed, k));
    pass = pass && r.pairs.pair_count >= last_count && r.clusters.pairwise_precision <= last_prec;
    last_count = r.pairs.pair_count;
    last_prec = r.clusters.pairwise_precision;
    detail += fmt("k=%zu %zu pairs %.4f; ", k, last_count, last_prec);
  }
  return {pass, detail};
}

Outcome heterogeneity() {
  double hetero = 0, homo = 0;
  std::string detail;
  for (auto seed : kHeteroSeeds) {
    double pp[2];
    for (int h = 0; h < 2; ++h) {
      const auto b = load_benchmark(seed, h == 1, kDefaultK);
      const auto r = run_mediator(b.labeled, b.unlabeled, benchmark_params(seed));
      pp[h] = r.clusters.pairwise_precision;
    }
    hetero += pp[1] / kHeteroSeeds.size();
    homo += pp[0] / kHeteroSeeds.size();
    detail += fmt("s%llu %.4f/%.4f ", static_cast<unsigned long long>(seed), pp[1], pp[0]);
  }
  return {hetero >= homo, detail + fmt("mean hetero %.4f vs homo %.4f", hetero, homo)};
}

bool soft_ok(const LabelAssignment& hard, const ConsensusGraph& g, double& worst) {
  const auto zero = soft_labels(hard, g, 0, 0.5);
  for (std::size_t i = 0; i < hard.ids.size(); ++i)
    for (std::size_t c = 0; c < hard.num_labels; ++c)
      if (zero.row(i)[c] != (c == hard.labels[i] ? 1.0 : 0.0)) return false;
  for (std::size_t depth : {1, 2, 4})
    for (double decay : {0.3, 0.5, 0.9}) {
      const auto s = soft_labels(hard, g, depth, decay);
      for (std::size_t i = 0; i < s.ids.size(); ++i) {
        double sum = 0;
        for (double v : s.row(i)) sum += v;
        worst = std::max(worst, std::abs(sum - 1));
      }
    }
  return worst <= kSoftSumTolerance;
}

Outcome soft_degeneracy() {
  Rng rng(derive_seed(kBenchmarkSeed, "acceptance/soft"));
  double worst = 0;
  for (int t = 0; t < 300; ++t) {
    const auto g = test::random_graph(rng, 40);
    const ConsensusGraph cg(g.nodes, g.edges);
    PropagationConfig c;
    c.max_size = 1 + rng.below(10);
    if (!soft_ok(propagate(cg, c), cg, worst)) return {false, fmt("random graph %d", t)};
  }
  SyntheticConfig sc;
  sc.num_identities = 40;
  sc.samples_min = 5;
  sc.samples_max = 30;
  sc.labeled_identities = 10;
  const auto data = generate_synthetic(sc);
  const auto views = data.all_views();
  const auto lab = SplitViews::build(views, data.split.labeled, data.truth, 10, 1);
  const auto unl = SplitViews::build(views, data.split.unlabeled, data.truth, 10, 1);
  CdpParams p = benchmark_params(sc.seed, 10);
  p.propagation.max_size = 40;
  const auto run = run_mediator(lab, unl, p);
  const auto nodes = unl.truth.ids();
  const auto cg = ConsensusGraph::from_selection({nodes.begin(), nodes.end()}, run.selected);
  if (!soft_ok(run.labels, cg, worst)) return {false, "synthetic consensus graph"};
  return {true, fmt("300 random graphs + synthetic run; worst row-sum error %.1e", worst)};
}

Outcome size_bound() {
  Rng rng(derive_seed(kBenchmarkSeed, "acceptance/size"));
  std::size_t largest = 0, edges = 0;
  for (int t = 0; t < 500; ++t) {
    // Sparse ids, up to 400 nodes, k-NN-like degree.
    const std::size_t n = 1 + rng.below(400);
    std::vector<SampleId> nodes(n);
    SampleId id = 0;
    for (auto& x : nodes) x = id += 1 + rng.below(3);
    std::vector<ScoredEdge> list;
    const std::size_t degree = 1 + rng.below(12);
    const bool grid = rng.uniform() < 0.3;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < degree && n > 1; ++d) {
        std::size_t j = rng.below(n);
        if (j == i) continue;
        const auto key = std::minmax(i, j);
        if (!seen.insert(key).second) continue;
        const double s = grid ? 0.9 + 0.02 * static_cast<double>(rng.below(6)) : rng.uniform();
        list.push_back({nodes[key.first], nodes[key.second], s});
      }
    std::sort(list.begin(), list.end(),
              [](const ScoredEdge& x, const ScoredEdge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
    edges += list.size();
    PropagationConfig c;
    c.max_size = 1 + rng.below(60);
    c.step = rng.uniform(0.01, 0.5);
    const auto out = propagate(ConsensusGraph(nodes, list), c);
    out.check(nodes, c.max_size);
    std::vector<std::size_t> sizes(out.num_labels);
    for (auto l : out.labels) ++sizes[l];
    for (auto s : sizes) {
      if (s > c.max_size) return {false, fmt("graph %d: cluster of %zu > M=%zu", t, s, c.max_size)};
      largest = std::max(largest, s);
    }
  }
  return {true, fmt("500 graphs (%zu edges) terminated, largest cluster %zu", edges, largest)};
}

Outcome determinism() {
#ifndef CDP_EXE
  return {false, "the cdp executable was not built"};
#else
  test::TempDir dir("acceptance");
  const auto cfg = std::filesystem::path(CDP_CONFIG_DIR) / "benchmark.ini";
  std::vector<std::string> reports;
  for (const char* run : {"1", "1", "4"}) {
    const auto out = dir / ("out" + std::to_string(reports.size()));
    const std::string cmd = std::string(CDP_EXE) + " --config " + cfg.string() + " --out " +
                            out.string() + " --workers " + run + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      return {false, fmt("pipeline run %zu failed", reports.size())};
    reports.push_back(test::slurp(out / "report.csv"));
  }
  const bool same = !reports[0].empty() && reports[0] == reports[1] && reports[0] == reports[2];
  return {same, fmt("3 runs (workers 1, 1, 4), report.csv %zu bytes, %s", reports[0].size(),
                    same ? "identical" : "differ")};
#endif
}

}  // namespace

int main() {
  criterion("dimension_law", 1, dimension_law);
  criterion("propagation_oracle", 30, propagation_oracle);
  criterion("knn_oracle", 60, knn_oracle);
  criterion("gradient_check", 10, gradient);
  criterion("ablation_mediator_vs_voting", 300, table2);
  criterion("k_sweep_tradeoff", 600, k_sweep);
  criterion("heterogeneity", 600, heterogeneity);
  criterion("soft_label_degeneracy", 10, soft_degeneracy);
  criterion("cluster_size_bound", 60, size_bound);
  criterion("end_to_end_determinism", 600, determinism);
  // Full-scale results are out of reach here; the checks above stand in for them.
  const bool substitutes = failures == 0;
  std::printf("%s desk_scale_substitution: %s\n", substitutes ? "PASS" : "FAIL",
              substitutes ? "every substitute check passed" : "a substitute check failed");
  return failures == 0 ? 0 : 1;
}
