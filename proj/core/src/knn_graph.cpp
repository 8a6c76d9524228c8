#include "cdp/knn_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "binary_io.hpp"
#include "cdp/error.hpp"
#include "cdp/parallel.hpp"
#include "similarity.hpp"

namespace cdp {

namespace {
constexpr std::uint32_t kGraphVersion = 1;
constexpr double kSimilaritySlack = 1e-6;
}  // namespace

KnnGraph::KnnGraph(std::size_t k, std::vector<SampleId> ids, std::vector<Neighbor> table)
    : k_(k), ids_(std::move(ids)), neighbors_(std::move(table)) {
  require(k_ >= 1, Errc::invalid_argument, "k must be >= 1");
  require(ids_.size() >= 2, Errc::invalid_argument, "graph needs at least two nodes");
  width_ = std::min(k_, ids_.size() - 1);
  require(neighbors_.size() == ids_.size() * width_, Errc::dimension_mismatch,
          "neighbor table does not match n x min(k, n-1)");
  for (std::size_t i = 1; i < ids_.size(); ++i)
    require(ids_[i - 1] < ids_[i], Errc::invalid_argument, "graph ids must be sorted and unique");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const auto list = neighbors(i);
    for (std::size_t r = 0; r < list.size(); ++r) {
      const auto& nb = list[r];
      require(nb.index < ids_.size(), Errc::malformed, "neighbor index out of range");
      require(nb.index != i, Errc::invariant, "self-edge in k-NN graph");
      require(nb.similarity >= -1.0 - kSimilaritySlack && nb.similarity <= 1.0 + kSimilaritySlack,
              Errc::invariant, "similarity outside [-1, 1]");
      if (r > 0)
        require(list[r - 1].similarity >= nb.similarity, Errc::invariant,
                "neighbor similarities must be non-increasing");
    }
  }
}

std::size_t KnnGraph::index_of(SampleId id) const {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id)
    fail(Errc::unknown_id, "id not in graph: " + std::to_string(id));
  return static_cast<std::size_t>(it - ids_.begin());
}

bool KnnGraph::linked(std::size_t i, std::size_t j) const noexcept {
  auto has = [this](std::size_t from, std::size_t to) {
    for (const auto& nb : neighbors(from))
      if (nb.index == to) return true;
    return false;
  };
  return has(i, j) || has(j, i);
}

double cosine_similarity(std::span<const float> u, std::span<const float> v) {
  require(u.size() == v.size(), Errc::dimension_mismatch, "cosine_similarity: dim mismatch");
  const double nu = detail::norm(u);
  const double nv = detail::norm(v);
  require(nu > 0.0 && nv > 0.0, Errc::zero_norm, "cosine_similarity: zero-norm vector");
  return detail::cosine_from(detail::dot(u, v), nu, nv);
}

KnnGraph build_knn_graph(const EmbeddingSet& set, std::size_t k, unsigned workers) {
  require(k >= 1, Errc::invalid_argument, "k must be >= 1");
  require(set.size() >= 2, Errc::invalid_argument, "k-NN graph needs at least two samples");
  const std::size_t n = set.size();
  const std::size_t width = std::min(k, n - 1);

  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = detail::norm(set.row(i));

  std::vector<Neighbor> table(n * width);
  parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
    std::vector<Neighbor> scratch(n - 1);
    // Index order equals id order, so comparing indices implements the
    // smaller-id tie-break.
    auto before = [](const Neighbor& x, const Neighbor& y) {
      return x.similarity > y.similarity ||
             (x.similarity == y.similarity && x.index < y.index);
    };
    for (std::size_t i = begin; i < end; ++i) {
      const auto qi = set.row(i);
      std::size_t m = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        scratch[m++] = {static_cast<std::uint32_t>(j),
                        detail::cosine_from(detail::dot(qi, set.row(j)), norms[i], norms[j])};
      }
      std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(width),
                        scratch.end(), before);
      std::copy_n(scratch.begin(), width, table.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
  });
  return KnnGraph(k, {set.ids().begin(), set.ids().end()}, std::move(table));
}

KnnGraph truncate_graph(const KnnGraph& graph, std::size_t k) {
  require(k >= 1, Errc::invalid_argument, "k must be >= 1");
  require(k <= graph.k(), Errc::invalid_argument, "cannot truncate a graph to a larger k");
  const std::size_t width = std::min(k, graph.size() - 1);
  std::vector<Neighbor> table;
  table.reserve(graph.size() * width);
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto list = graph.neighbors(i);
    table.insert(table.end(), list.begin(), list.begin() + static_cast<std::ptrdiff_t>(width));
  }
  return KnnGraph(k, {graph.ids().begin(), graph.ids().end()}, std::move(table));
}

std::vector<CandidatePair> candidate_pairs(const KnnGraph& graph) {
  std::vector<CandidatePair> pairs;
  pairs.reserve(graph.size() * graph.width());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (const auto& nb : graph.neighbors(i)) {
      const SampleId a = graph.id_of(i);
      const SampleId b = graph.id_of(nb.index);
      pairs.push_back(a < b ? CandidatePair{a, b} : CandidatePair{b, a});
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

void save_graph(const KnnGraph& graph, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("CDPG");
  w.put<std::uint32_t>(kGraphVersion);
  w.put<std::uint64_t>(graph.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(graph.k()));
  for (SampleId id : graph.ids()) w.put<std::uint64_t>(id);
  for (const auto& nb : graph.all_neighbors()) {
    w.put<std::uint32_t>(nb.index);
    w.put<double>(nb.similarity);
  }
  w.flush(path);
}

KnnGraph load_graph(const std::filesystem::path& path) {
  detail::ByteReader r(path);
  r.expect_magic("CDPG");
  const auto version = r.get<std::uint32_t>();
  if (version != kGraphVersion)
    fail(Errc::unsupported_version, path.string() + ": graph version " + std::to_string(version));
  const auto n = r.get<std::uint64_t>();
  const auto k = r.get<std::uint32_t>();
  if (n < 2 || k == 0) fail(Errc::malformed, path.string() + ": bad graph header");
  const std::uint64_t width = std::min<std::uint64_t>(k, n - 1);
  if (n > r.remaining()) fail(Errc::truncated, path.string() + ": graph payload truncated");
  r.expect_exact_payload(n * 8 + n * width * 12);
  std::vector<SampleId> ids(n);
  for (auto& id : ids) id = r.get<std::uint64_t>();
  std::vector<Neighbor> table(n * width);
  for (auto& nb : table) {
    nb.index = r.get<std::uint32_t>();
    nb.similarity = r.get<double>();
  }
  return KnnGraph(k, std::move(ids), std::move(table));
}

void write_graph_csv(const KnnGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot open for writing: " + path.string());
  out << "node,rank,neighbor,similarity\n";
  char buf[64];
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto list = graph.neighbors(i);
    for (std::size_t r = 0; r < list.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.17g", list[r].similarity);
      out << graph.id_of(i) << ',' << r << ',' << graph.id_of(list[r].index) << ',' << buf << '\n';
    }
  }
  if (!out) fail(Errc::io, "write failed: " + path.string());
}

}  // namespace cdp
