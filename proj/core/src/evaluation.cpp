#include "cdp/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "cdp/error.hpp"
#include "similarity.hpp"

namespace cdp {

namespace {

double choose2(std::size_t n) {
  return n < 2 ? 0.0 : 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
}

double ratio_or_one(double num, double den) { return den > 0.0 ? num / den : 1.0; }

}  // namespace

PairMetrics pair_metrics(std::span<const CandidatePair> selected, const GroundTruth& truth,
                         std::span<const SampleId> universe) {
  std::vector<std::size_t> counts(truth.num_identities(), 0);
  for (SampleId id : universe) ++counts[truth.label_of(id)];
  double positives = 0.0;
  for (auto c : counts) positives += choose2(c);

  auto in_universe = [&](SampleId id) {
    return std::binary_search(universe.begin(), universe.end(), id);
  };
  std::size_t hits = 0;
  for (const auto& p : selected) {
    require(in_universe(p.a) && in_universe(p.b), Errc::unknown_id,
            "selected pair (" + std::to_string(p.a) + ", " + std::to_string(p.b) +
                ") lies outside the evaluation universe");
    if (truth.label_of(p.a) == truth.label_of(p.b)) ++hits;
  }
  PairMetrics m;
  m.pair_count = selected.size();
  m.empty_selection = selected.empty();
  m.recall = positives > 0.0 ? static_cast<double>(hits) / positives : 0.0;
  m.precision = ratio_or_one(static_cast<double>(hits), static_cast<double>(selected.size()));
  return m;
}

ClusterMetrics cluster_metrics(const LabelAssignment& assign, const GroundTruth& truth) {
  std::vector<std::size_t> truth_counts(truth.num_identities(), 0);
  for (auto l : truth.labels()) ++truth_counts[l];

  std::vector<std::size_t> cluster_sizes(assign.num_labels, 0);
  std::unordered_map<std::uint64_t, std::size_t> joint;
  for (std::size_t i = 0; i < assign.ids.size(); ++i) {
    const auto t = truth.label_of(assign.ids[i]);
    const auto c = assign.labels[i];
    ++cluster_sizes.at(c);
    ++joint[static_cast<std::uint64_t>(c) * truth.num_identities() + t];
  }

  double same_truth = 0.0, same_cluster = 0.0, both = 0.0;
  for (auto c : truth_counts) same_truth += choose2(c);
  for (auto c : cluster_sizes) same_cluster += choose2(c);
  for (const auto& [key, c] : joint) both += choose2(c);
  return {ratio_or_one(both, same_truth), ratio_or_one(both, same_cluster)};
}

LabelAssignment hierarchical_baseline(const EmbeddingSet& base, double threshold) {
  require(threshold >= -1.0 && threshold <= 1.0, Errc::invalid_argument,
          "clustering threshold must lie in [-1, 1]");
  const std::size_t n = base.size();
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = detail::norm(base.row(i));

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto ri = find(i);
      const auto rj = find(j);
      if (ri == rj) continue;
      const double s =
          detail::cosine_from(detail::dot(base.row(i), base.row(j)), norms[i], norms[j]);
      if (s >= threshold) parent[std::max(ri, rj)] = std::min(ri, rj);
    }
  }

  std::vector<std::size_t> size(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++size[find(i)];
  // Roots are the smallest member, so scanning in index order numbers the
  // clusters by smallest member.
  std::vector<std::uint32_t> label_of_root(n, UINT32_MAX);
  LabelAssignment out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = find(i);
    if (size[r] < 2) {
      out.unlabeled_ids.push_back(base.ids()[i]);
      continue;
    }
    if (label_of_root[r] == UINT32_MAX) label_of_root[r] = static_cast<std::uint32_t>(out.num_labels++);
    out.ids.push_back(base.ids()[i]);
    out.labels.push_back(label_of_root[r]);
  }
  return out;
}

std::string format_report_csv(std::span<const ReportRow> rows) {
  std::ostringstream out;
  out << "config,pair_count,pair_recall,pair_precision,pairwise_recall,pairwise_precision\n";
  char buf[160];
  for (const auto& r : rows) {
    out << r.config << ',';
    if (r.pairs) {
      std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,", r.pairs->pair_count, r.pairs->recall,
                    r.pairs->precision);
      out << buf;
    } else {
      out << ",,,";
    }
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", r.clusters.pairwise_recall,
                  r.clusters.pairwise_precision);
    out << buf;
  }
  return out.str();
}

void write_report_csv(std::span<const ReportRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) fail(Errc::io, "cannot open for writing: " + path.string());
  out << format_report_csv(rows);
  if (!out) fail(Errc::io, "write failed: " + path.string());
}

void write_report_json(std::span<const ReportRow> rows, const std::filesystem::path& path) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["config"] = r.config;
    if (r.pairs) {
      row["pair_count"] = r.pairs->pair_count;
      row["pair_recall"] = r.pairs->recall;
      row["pair_precision"] = r.pairs->precision;
    } else {
      row["pair_count"] = nullptr;
      row["pair_recall"] = nullptr;
      row["pair_precision"] = nullptr;
    }
    row["pairwise_recall"] = r.clusters.pairwise_recall;
    row["pairwise_precision"] = r.clusters.pairwise_precision;
    doc.push_back(std::move(row));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot open for writing: " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace cdp
