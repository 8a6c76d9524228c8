#include "cdp/features.hpp"

#include <algorithm>

#include "binary_io.hpp"
#include "cdp/error.hpp"
#include "cdp/parallel.hpp"
#include "similarity.hpp"

namespace cdp {

namespace {

constexpr std::uint32_t kFeatureVersion = 1;

NodeNeighborStats stats_of(std::span<const Neighbor> list) {
  NodeNeighborStats s;
  if (list.empty()) return s;
  double sum = 0.0;
  for (const auto& nb : list) sum += nb.similarity;
  s.mean = sum / static_cast<double>(list.size());
  double sq = 0.0;
  for (const auto& nb : list) sq += (nb.similarity - s.mean) * (nb.similarity - s.mean);
  s.var = sq / static_cast<double>(list.size());
  return s;
}

void check_models(std::span<const KnnGraph> graphs, std::span<const EmbeddingSet> sets) {
  require(!graphs.empty(), Errc::invalid_argument, "at least the base model is required");
  require(graphs.size() == sets.size(), Errc::invalid_argument,
          "graph and embedding lists differ in length");
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    const bool same_ids = std::equal(graphs[m].ids().begin(), graphs[m].ids().end(),
                                     sets[m].ids().begin(), sets[m].ids().end()) &&
                          std::equal(graphs[m].ids().begin(), graphs[m].ids().end(),
                                     graphs[0].ids().begin(), graphs[0].ids().end());
    require(same_ids, Errc::invalid_argument,
            "model " + std::to_string(m) + " does not share the base model's sample ids");
  }
}

}  // namespace

std::string block_mask_name(unsigned blocks) {
  std::string name;
  auto add = [&](unsigned bit, const char* tag) {
    if (!(blocks & bit)) return;
    if (!name.empty()) name += '+';
    name += tag;
  };
  add(kRelationship, "IR");
  add(kAffinity, "IA");
  add(kDistribution, "ID");
  return name.empty() ? "none" : name;
}

unsigned parse_block_mask(const std::string& text) {
  unsigned mask = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto plus = text.find('+', start);
    const auto token = text.substr(start, plus == std::string::npos ? std::string::npos : plus - start);
    if (token == "IR")
      mask |= kRelationship;
    else if (token == "IA")
      mask |= kAffinity;
    else if (token == "ID")
      mask |= kDistribution;
    else
      fail(Errc::invalid_argument, "unknown mediator input block '" + token + "'");
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  require(mask != 0, Errc::invalid_argument, "empty mediator input set");
  return mask;
}

std::vector<float> PairFeatureVector::flatten(unsigned blocks) const {
  std::vector<float> out;
  out.reserve(size());
  if (blocks & kRelationship) out.insert(out.end(), relationship.begin(), relationship.end());
  if (blocks & kAffinity) out.insert(out.end(), affinity.begin(), affinity.end());
  if (blocks & kDistribution) {
    out.insert(out.end(), dist_mean.begin(), dist_mean.end());
    out.insert(out.end(), dist_var.begin(), dist_var.end());
  }
  return out;
}

std::vector<float> relationship_vector(const CandidatePair& pair,
                                       std::span<const KnnGraph> committee_graphs) {
  std::vector<float> out;
  out.reserve(committee_graphs.size());
  for (const auto& g : committee_graphs)
    out.push_back(g.linked(g.index_of(pair.a), g.index_of(pair.b)) ? 1.0f : 0.0f);
  return out;
}

std::vector<double> affinity_vector(const CandidatePair& pair,
                                    std::span<const EmbeddingSet> all_sets) {
  std::vector<double> out;
  out.reserve(all_sets.size());
  for (const auto& set : all_sets) out.push_back(cosine_similarity(set.row_of(pair.a), set.row_of(pair.b)));
  return out;
}

NodeNeighborStats neighbor_stats(SampleId node, const KnnGraph& graph) {
  return stats_of(graph.neighbors(graph.index_of(node)));
}

PairFeatureVector assemble_mediator_input(const CandidatePair& pair,
                                          std::span<const KnnGraph> graphs,
                                          std::span<const EmbeddingSet> sets) {
  check_models(graphs, sets);
  PairFeatureVector f;
  f.relationship = relationship_vector(pair, graphs.subspan(1));
  for (double a : affinity_vector(pair, sets)) f.affinity.push_back(static_cast<float>(a));
  const std::size_t models = graphs.size();
  f.dist_mean.resize(2 * models);
  f.dist_var.resize(2 * models);
  for (std::size_t m = 0; m < models; ++m) {
    const auto sa = neighbor_stats(pair.a, graphs[m]);
    const auto sb = neighbor_stats(pair.b, graphs[m]);
    f.dist_mean[m] = static_cast<float>(sa.mean);
    f.dist_mean[models + m] = static_cast<float>(sb.mean);
    f.dist_var[m] = static_cast<float>(sa.var);
    f.dist_var[models + m] = static_cast<float>(sb.var);
  }
  return f;
}

FeatureMatrix assemble_features(std::span<const CandidatePair> pairs,
                                std::span<const KnnGraph> graphs,
                                std::span<const EmbeddingSet> sets, unsigned blocks,
                                unsigned workers) {
  check_models(graphs, sets);
  require(blocks != 0 && (blocks & ~kAllBlocks) == 0, Errc::invalid_argument,
          "invalid mediator input block mask");
  const std::size_t models = graphs.size();
  const std::size_t n = graphs[0].size();

  std::vector<NodeNeighborStats> stats;
  std::vector<double> norms;
  if (blocks & kDistribution) {
    stats.resize(models * n);
    for (std::size_t m = 0; m < models; ++m)
      for (std::size_t i = 0; i < n; ++i) stats[m * n + i] = stats_of(graphs[m].neighbors(i));
  }
  if (blocks & kAffinity) {
    norms.resize(models * n);
    for (std::size_t m = 0; m < models; ++m)
      for (std::size_t i = 0; i < n; ++i) norms[m * n + i] = detail::norm(sets[m].row(i));
  }

  FeatureMatrix out;
  out.layout = {models - 1, blocks};
  out.pairs.assign(pairs.begin(), pairs.end());
  const std::size_t dim = out.layout.dim();
  out.values.resize(pairs.size() * dim);

  const auto& base = graphs[0];
  parallel_for(pairs.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto& pair = pairs[p];
      require(pair.a < pair.b, Errc::invalid_argument, "candidate pair must satisfy a < b");
      const std::size_t ia = base.index_of(pair.a);
      const std::size_t ib = base.index_of(pair.b);
      float* row = out.values.data() + p * dim;
      if (blocks & kRelationship)
        for (std::size_t m = 1; m < models; ++m) *row++ = graphs[m].linked(ia, ib) ? 1.0f : 0.0f;
      if (blocks & kAffinity)
        for (std::size_t m = 0; m < models; ++m)
          *row++ = static_cast<float>(detail::cosine_from(
              detail::dot(sets[m].row(ia), sets[m].row(ib)), norms[m * n + ia], norms[m * n + ib]));
      if (blocks & kDistribution) {
        for (std::size_t m = 0; m < models; ++m) *row++ = static_cast<float>(stats[m * n + ia].mean);
        for (std::size_t m = 0; m < models; ++m) *row++ = static_cast<float>(stats[m * n + ib].mean);
        for (std::size_t m = 0; m < models; ++m) *row++ = static_cast<float>(stats[m * n + ia].var);
        for (std::size_t m = 0; m < models; ++m) *row++ = static_cast<float>(stats[m * n + ib].var);
      }
    }
  });
  return out;
}

FeatureMatrix select_blocks(const FeatureMatrix& features, unsigned blocks) {
  require(blocks != 0 && (blocks & ~features.layout.blocks) == 0, Errc::invalid_argument,
          "requested blocks are not present in the feature matrix");
  const auto& from = features.layout;
  FeatureLayout to{from.committee, blocks};

  // Source column ranges to keep, in block order.
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t offset = 0;
  auto visit = [&](unsigned bit, std::size_t width) {
    if (!(from.blocks & bit)) return;
    if (blocks & bit) ranges.emplace_back(offset, width);
    offset += width;
  };
  visit(kRelationship, from.relationship_size());
  visit(kAffinity, from.affinity_size());
  visit(kDistribution, from.mean_size() + from.var_size());

  FeatureMatrix out;
  out.layout = to;
  out.pairs = features.pairs;
  out.targets = features.targets;
  out.values.reserve(features.rows() * to.dim());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    const auto row = features.row(r);
    for (const auto& [start, width] : ranges)
      out.values.insert(out.values.end(), row.begin() + static_cast<std::ptrdiff_t>(start),
                        row.begin() + static_cast<std::ptrdiff_t>(start + width));
  }
  return out;
}

void save_features(const FeatureMatrix& features, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("CDPF");
  w.put<std::uint32_t>(kFeatureVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(features.layout.committee));
  w.put<std::uint32_t>(features.layout.blocks);
  w.put<std::uint64_t>(features.rows());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(features.dim()));
  w.put<std::uint8_t>(features.targets.empty() ? 0 : 1);
  for (const auto& p : features.pairs) {
    w.put<std::uint64_t>(p.a);
    w.put<std::uint64_t>(p.b);
  }
  for (float v : features.values) w.put<float>(v);
  for (auto t : features.targets) w.put<std::uint8_t>(t);
  w.flush(path);
}

FeatureMatrix load_features(const std::filesystem::path& path) {
  detail::ByteReader r(path);
  r.expect_magic("CDPF");
  const auto version = r.get<std::uint32_t>();
  if (version != kFeatureVersion)
    fail(Errc::unsupported_version, path.string() + ": feature version " + std::to_string(version));
  FeatureMatrix f;
  f.layout.committee = r.get<std::uint32_t>();
  f.layout.blocks = r.get<std::uint32_t>();
  if (f.layout.blocks == 0 || (f.layout.blocks & ~kAllBlocks) != 0)
    fail(Errc::malformed, path.string() + ": bad block mask");
  const auto rows = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint32_t>();
  if (dim != f.layout.dim())
    fail(Errc::dimension_mismatch, path.string() + ": header dim disagrees with layout");
  const bool has_targets = r.get<std::uint8_t>() != 0;
  const std::uint64_t per_row = 16 + 4ull * dim + (has_targets ? 1 : 0);
  if (rows > r.remaining() / std::max<std::uint64_t>(per_row, 1) + 1)
    fail(Errc::truncated, path.string() + ": feature payload truncated");
  r.expect_exact_payload(rows * per_row);
  f.pairs.resize(rows);
  for (auto& p : f.pairs) {
    p.a = r.get<std::uint64_t>();
    p.b = r.get<std::uint64_t>();
  }
  f.values.resize(rows * dim);
  for (auto& v : f.values) v = r.get<float>();
  if (has_targets) {
    f.targets.resize(rows);
    for (auto& t : f.targets) t = r.get<std::uint8_t>();
  }
  return f;
}

}  // namespace cdp
