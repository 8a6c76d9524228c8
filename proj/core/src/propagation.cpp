#include "cdp/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numeric>

#include "cdp/error.hpp"
#include "cdp/parallel.hpp"
#include "csv.hpp"

namespace cdp {

namespace {

struct IndexedEdge {
  std::uint32_t a;
  std::uint32_t b;
  double score;
};

struct Component {
  std::vector<std::uint32_t> nodes;  // sorted
  std::vector<std::uint32_t> edges;  // ids into the edge table
};

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::uint32_t{0});
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::uint32_t x, std::uint32_t y) {
    x = find(x);
    y = find(y);
    if (x == y) return;
    if (y < x) std::swap(x, y);
    parent_[y] = x;
  }

 private:
  std::vector<std::uint32_t> parent_;
};

// Connected components of the graph (nodes, edge_ids). `local` is scratch of
// size >= total node count. Components come out ordered by smallest node.
std::vector<Component> decompose(const std::vector<std::uint32_t>& nodes,
                                 const std::vector<std::uint32_t>& edge_ids,
                                 std::span<const IndexedEdge> table,
                                 std::vector<std::uint32_t>& local) {
  for (std::uint32_t i = 0; i < nodes.size(); ++i) local[nodes[i]] = i;
  DisjointSets sets(nodes.size());
  for (auto e : edge_ids) sets.unite(local[table[e].a], local[table[e].b]);

  std::vector<Component> out;
  std::vector<std::uint32_t> slot(nodes.size(), UINT32_MAX);
  for (std::uint32_t i = 0; i < nodes.size(); ++i) {
    const auto root = sets.find(i);
    if (slot[root] == UINT32_MAX) {
      slot[root] = static_cast<std::uint32_t>(out.size());
      out.emplace_back();
    }
    out[slot[root]].nodes.push_back(nodes[i]);
  }
  for (auto e : edge_ids) out[slot[sets.find(local[table[e].a])]].edges.push_back(e);
  return out;
}

std::vector<IndexedEdge> index_edges(const ConsensusGraph& graph) {
  std::vector<IndexedEdge> table;
  table.reserve(graph.edges().size());
  for (const auto& e : graph.edges())
    table.push_back({static_cast<std::uint32_t>(graph.index_of(e.a)),
                     static_cast<std::uint32_t>(graph.index_of(e.b)), e.score});
  return table;
}

std::vector<std::uint32_t> iota_u32(std::size_t n) {
  std::vector<std::uint32_t> v(n);
  std::iota(v.begin(), v.end(), std::uint32_t{0});
  return v;
}

}  // namespace

ConsensusGraph::ConsensusGraph(std::vector<SampleId> nodes, std::vector<ScoredEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  for (std::size_t i = 1; i < nodes_.size(); ++i)
    require(nodes_[i - 1] < nodes_[i], Errc::invalid_argument,
            "consensus graph nodes must be sorted and unique");
  std::sort(edges_.begin(), edges_.end(),
            [](const ScoredEdge& x, const ScoredEdge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const auto& e = edges_[i];
    require(e.a < e.b, Errc::invalid_argument, "consensus edge must satisfy a < b");
    require(std::binary_search(nodes_.begin(), nodes_.end(), e.a) &&
                std::binary_search(nodes_.begin(), nodes_.end(), e.b),
            Errc::unknown_id, "consensus edge endpoint is not a graph node");
    require(e.score >= 0.0 && e.score <= 1.0, Errc::invalid_argument,
            "consensus edge score outside [0, 1]");
    if (i > 0)
      require(!(edges_[i - 1].a == e.a && edges_[i - 1].b == e.b), Errc::duplicate_id,
              "duplicate consensus edge");
  }
}

ConsensusGraph ConsensusGraph::from_selection(std::vector<SampleId> nodes,
                                              std::span<const SelectedEdge> selected) {
  std::vector<ScoredEdge> edges;
  edges.reserve(selected.size());
  for (const auto& s : selected) edges.push_back({s.pair.a, s.pair.b, s.weight});
  return ConsensusGraph(std::move(nodes), std::move(edges));
}

std::size_t ConsensusGraph::index_of(SampleId id) const {
  const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id);
  if (it == nodes_.end() || *it != id)
    fail(Errc::unknown_id, "id not in consensus graph: " + std::to_string(id));
  return static_cast<std::size_t>(it - nodes_.begin());
}

std::optional<std::uint32_t> LabelAssignment::label_of(SampleId id) const noexcept {
  const auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) return std::nullopt;
  return labels[static_cast<std::size_t>(it - ids.begin())];
}

void LabelAssignment::check(std::span<const SampleId> all_nodes,
                            std::optional<std::size_t> max_size) const {
  require(ids.size() == labels.size(), Errc::invariant, "assignment ids/labels length differ");
  std::vector<std::size_t> sizes(num_labels, 0);
  for (auto l : labels) {
    require(l < num_labels, Errc::invariant, "pseudo-label out of range");
    ++sizes[l];
  }
  for (std::size_t l = 0; l < num_labels; ++l) {
    require(sizes[l] > 0, Errc::invariant, "pseudo-labels are not contiguous");
    if (max_size) require(sizes[l] <= *max_size, Errc::invariant, "cluster exceeds max size");
  }
  std::vector<SampleId> both;
  std::merge(ids.begin(), ids.end(), unlabeled_ids.begin(), unlabeled_ids.end(),
             std::back_inserter(both));
  require(std::equal(both.begin(), both.end(), all_nodes.begin(), all_nodes.end()),
          Errc::invariant, "assigned and unassigned ids do not partition the node set");
}

void PropagationConfig::validate() const {
  require(step > 0.0 && step < 1.0, Errc::invalid_argument, "propagation step must lie in (0, 1)");
  require(max_size >= 1, Errc::invalid_argument, "propagation max_size must be >= 1");
}

std::vector<std::vector<SampleId>> connected_components(const ConsensusGraph& graph) {
  const auto table = index_edges(graph);
  std::vector<std::uint32_t> local(graph.nodes().size());
  const auto comps = decompose(iota_u32(graph.nodes().size()), iota_u32(table.size()), table, local);
  std::vector<std::vector<SampleId>> out;
  out.reserve(comps.size());
  for (const auto& c : comps) {
    auto& ids = out.emplace_back();
    ids.reserve(c.nodes.size());
    for (auto i : c.nodes) ids.push_back(graph.nodes()[i]);
  }
  return out;
}

LabelAssignment propagate(const ConsensusGraph& graph, const PropagationConfig& cfg) {
  cfg.validate();
  const std::size_t n = graph.nodes().size();
  const auto table = index_edges(graph);
  std::vector<std::uint32_t> local(n);
  constexpr std::uint32_t kNone = UINT32_MAX;
  std::vector<std::uint32_t> label(n, kNone);

  std::deque<Component> queue;
  for (auto& c : decompose(iota_u32(n), iota_u32(table.size()), table, local))
    queue.push_back(std::move(c));

  std::uint32_t next_label = 0;
  while (!queue.empty()) {
    Component c = std::move(queue.front());
    queue.pop_front();
    if (c.nodes.size() > cfg.max_size) {
      double s_min = 1.0;
      for (auto e : c.edges) s_min = std::min(s_min, table[e].score);
      const double th = s_min + (1.0 - s_min) * cfg.step;
      std::vector<std::uint32_t> kept;
      for (auto e : c.edges)
        if (table[e].score > th) kept.push_back(e);
      require(kept.size() < c.edges.size(), Errc::invariant,
              "propagation split removed no edge");
      if (kept.empty()) continue;
      std::vector<std::uint32_t> nodes;
      nodes.reserve(2 * kept.size());
      for (auto e : kept) {
        nodes.push_back(table[e].a);
        nodes.push_back(table[e].b);
      }
      std::sort(nodes.begin(), nodes.end());
      nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
      for (auto& sub : decompose(nodes, kept, table, local)) queue.push_back(std::move(sub));
    } else {
      if (cfg.discard_singletons && c.nodes.size() == 1) continue;
      for (auto i : c.nodes) label[i] = next_label;
      ++next_label;
    }
  }

  LabelAssignment out;
  out.num_labels = next_label;
  for (std::size_t i = 0; i < n; ++i) {
    if (label[i] == kNone) {
      out.unlabeled_ids.push_back(graph.nodes()[i]);
    } else {
      out.ids.push_back(graph.nodes()[i]);
      out.labels.push_back(label[i]);
    }
  }
  return out;
}

SoftLabels soft_labels(const LabelAssignment& hard, const ConsensusGraph& graph,
                       std::size_t depth, double decay, unsigned workers) {
  require(decay > 0.0 && decay <= 1.0, Errc::invalid_argument, "decay must lie in (0, 1]");
  const std::size_t n = graph.nodes().size();
  const auto table = index_edges(graph);

  // CSR adjacency in index space.
  std::vector<std::size_t> offsets(n + 1, 0);
  for (const auto& e : table) {
    ++offsets[e.a + 1];
    ++offsets[e.b + 1];
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<std::uint32_t> adjacency(offsets.back());
  {
    std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
    for (const auto& e : table) {
      adjacency[fill[e.a]++] = e.b;
      adjacency[fill[e.b]++] = e.a;
    }
  }

  constexpr std::int64_t kUnlabeled = -1;
  std::vector<std::int64_t> label_at(n, kUnlabeled);
  std::vector<std::uint32_t> sources;
  sources.reserve(hard.ids.size());
  for (std::size_t i = 0; i < hard.ids.size(); ++i) {
    const auto idx = graph.index_of(hard.ids[i]);
    label_at[idx] = hard.labels[i];
    sources.push_back(static_cast<std::uint32_t>(idx));
  }

  SoftLabels out;
  out.ids = hard.ids;
  out.num_labels = hard.num_labels;
  out.values.assign(hard.ids.size() * hard.num_labels, 0.0);

  parallel_for(sources.size(), workers, [&](std::size_t begin, std::size_t end) {
    std::vector<std::uint32_t> seen(n, 0);
    std::uint32_t stamp = 0;
    std::vector<std::uint32_t> frontier, next;
    for (std::size_t s = begin; s < end; ++s) {
      ++stamp;
      double* row = out.values.data() + s * out.num_labels;
      frontier.assign(1, sources[s]);
      seen[sources[s]] = stamp;
      double weight = 1.0;
      for (std::size_t d = 0;; ++d) {
        for (auto v : frontier)
          if (label_at[v] != kUnlabeled) row[label_at[v]] += weight;
        if (d == depth) break;
        next.clear();
        for (auto v : frontier)
          for (std::size_t p = offsets[v]; p < offsets[v + 1]; ++p)
            if (seen[adjacency[p]] != stamp) {
              seen[adjacency[p]] = stamp;
              next.push_back(adjacency[p]);
            }
        if (next.empty()) break;
        std::swap(frontier, next);
        weight *= decay;
      }
      double total = 0.0;
      for (std::size_t l = 0; l < out.num_labels; ++l) total += row[l];
      for (std::size_t l = 0; l < out.num_labels; ++l) row[l] /= total;
    }
  });
  return out;
}

void save_assignment(const LabelAssignment& assign, const std::filesystem::path& path,
                     const std::filesystem::path& unassigned_path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot open for writing: " + path.string());
  out << "id,pseudo_label\n";
  for (std::size_t i = 0; i < assign.ids.size(); ++i)
    out << assign.ids[i] << ',' << assign.labels[i] << '\n';
  if (!out) fail(Errc::io, "write failed: " + path.string());

  std::ofstream side(unassigned_path, std::ios::trunc);
  if (!side) fail(Errc::io, "cannot open for writing: " + unassigned_path.string());
  side << "id\n";
  for (SampleId id : assign.unlabeled_ids) side << id << '\n';
  if (!side) fail(Errc::io, "write failed: " + unassigned_path.string());
}

LabelAssignment load_assignment(const std::filesystem::path& path,
                                const std::filesystem::path& unassigned_path) {
  std::vector<std::pair<SampleId, std::uint32_t>> rows;
  detail::read_csv(path, "id,pseudo_label", [&](const auto& f, std::size_t line) {
    if (f.size() != 2) fail(Errc::malformed, path.string() + ": expected 2 fields");
    rows.emplace_back(detail::parse_number<SampleId>(f[0], path, line),
                      detail::parse_number<std::uint32_t>(f[1], path, line));
  });
  std::sort(rows.begin(), rows.end());
  LabelAssignment a;
  for (const auto& [id, label] : rows) {
    if (!a.ids.empty() && a.ids.back() == id)
      fail(Errc::duplicate_id, path.string() + ": duplicate id " + std::to_string(id));
    a.ids.push_back(id);
    a.labels.push_back(label);
    a.num_labels = std::max<std::size_t>(a.num_labels, label + 1);
  }
  detail::read_csv(unassigned_path, "id", [&](const auto& f, std::size_t line) {
    a.unlabeled_ids.push_back(detail::parse_number<SampleId>(f[0], unassigned_path, line));
  });
  std::sort(a.unlabeled_ids.begin(), a.unlabeled_ids.end());
  std::vector<SampleId> all;
  std::merge(a.ids.begin(), a.ids.end(), a.unlabeled_ids.begin(), a.unlabeled_ids.end(),
             std::back_inserter(all));
  require(std::adjacent_find(all.begin(), all.end()) == all.end(), Errc::duplicate_id,
          path.string() + ": id both assigned and unassigned");
  a.check(all, std::nullopt);
  return a;
}

void save_soft_labels(const SoftLabels& soft, const std::filesystem::path& path) {
  require(soft.num_labels > 0, Errc::invalid_argument, "soft labels have no columns");
  std::vector<float> values(soft.values.begin(), soft.values.end());
  save_embeddings(EmbeddingSet(soft.ids, soft.num_labels, std::move(values)), path);
}

void save_edges(std::span<const SelectedEdge> edges, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot open for writing: " + path.string());
  out << "a,b,score\n";
  char buf[64];
  for (const auto& e : edges) {
    std::snprintf(buf, sizeof buf, "%.17g", e.weight);
    out << e.pair.a << ',' << e.pair.b << ',' << buf << '\n';
  }
  if (!out) fail(Errc::io, "write failed: " + path.string());
}

std::vector<SelectedEdge> load_edges(const std::filesystem::path& path) {
  std::vector<SelectedEdge> edges;
  detail::read_csv(path, "a,b,score", [&](const auto& f, std::size_t line) {
    if (f.size() != 3) fail(Errc::malformed, path.string() + ": expected 3 fields");
    edges.push_back({{detail::parse_number<SampleId>(f[0], path, line),
                      detail::parse_number<SampleId>(f[1], path, line)},
                     detail::parse_number<double>(f[2], path, line)});
  });
  return edges;
}

}  // namespace cdp
