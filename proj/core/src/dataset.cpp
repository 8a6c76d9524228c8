#include "cdp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "binary_io.hpp"
#include "cdp/error.hpp"
#include "cdp/rng.hpp"
#include "csv.hpp"

namespace cdp {

namespace {

constexpr std::uint32_t kEmbeddingVersion = 1;

void check_sorted_unique(std::span<const SampleId> ids, const char* what) {
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] == ids[i - 1])
      fail(Errc::duplicate_id, std::string(what) + ": duplicate id " + std::to_string(ids[i]));
    if (ids[i] < ids[i - 1])
      fail(Errc::invalid_argument, std::string(what) + ": ids not sorted ascending");
  }
}

void normalize(std::span<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
}

}  // namespace

EmbeddingSet::EmbeddingSet(std::vector<SampleId> ids, std::size_t dim,
                           std::vector<float> values)
    : ids_(std::move(ids)), dim_(dim), values_(std::move(values)) {
  require(dim_ > 0, Errc::invalid_argument, "embedding dim must be positive");
  require(values_.size() == ids_.size() * dim_, Errc::dimension_mismatch,
          "embedding values do not match num_samples x dim");
  check_sorted_unique(ids_, "embedding ids");
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    double sq = 0.0;
    for (float x : row(i)) {
      if (!std::isfinite(x))
        fail(Errc::zero_norm, "non-finite entry in row for id " + std::to_string(ids_[i]));
      sq += static_cast<double>(x) * x;
    }
    if (!(sq > 0.0)) fail(Errc::zero_norm, "zero-norm row for id " + std::to_string(ids_[i]));
  }
}

std::optional<std::size_t> EmbeddingSet::find(SampleId id) const noexcept {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

std::size_t EmbeddingSet::index_of(SampleId id) const {
  const auto idx = find(id);
  if (!idx) fail(Errc::unknown_id, "unknown sample id " + std::to_string(id));
  return *idx;
}

EmbeddingSet EmbeddingSet::subset(std::span<const SampleId> ids) const {
  std::vector<float> values;
  values.reserve(ids.size() * dim_);
  for (SampleId id : ids) {
    const auto r = row_of(id);
    values.insert(values.end(), r.begin(), r.end());
  }
  return EmbeddingSet({ids.begin(), ids.end()}, dim_, std::move(values));
}

GroundTruth::GroundTruth(std::vector<SampleId> ids, std::vector<std::uint32_t> labels)
    : ids_(std::move(ids)), labels_(std::move(labels)) {
  require(ids_.size() == labels_.size(), Errc::dimension_mismatch,
          "ground truth ids and labels differ in length");
  check_sorted_unique(ids_, "ground truth ids");
  std::vector<bool> seen;
  for (auto l : labels_) {
    if (l >= seen.size()) seen.resize(l + 1, false);
    seen[l] = true;
  }
  require(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }),
          Errc::invalid_argument, "ground truth labels are not contiguous from 0");
  num_identities_ = seen.size();
}

std::optional<std::uint32_t> GroundTruth::find(SampleId id) const noexcept {
  const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return std::nullopt;
  return labels_[static_cast<std::size_t>(it - ids_.begin())];
}

std::uint32_t GroundTruth::label_of(SampleId id) const {
  const auto l = find(id);
  if (!l) fail(Errc::unknown_id, "id missing from ground truth: " + std::to_string(id));
  return *l;
}

GroundTruth GroundTruth::subset(std::span<const SampleId> ids) const {
  std::map<std::uint32_t, std::uint32_t> remap;
  std::vector<std::uint32_t> labels;
  labels.reserve(ids.size());
  for (SampleId id : ids) {
    const auto original = label_of(id);
    const auto [it, inserted] =
        remap.emplace(original, static_cast<std::uint32_t>(remap.size()));
    labels.push_back(it->second);
  }
  return GroundTruth({ids.begin(), ids.end()}, std::move(labels));
}

void SyntheticConfig::validate() const {
  auto check = [](bool ok, const char* field, const char* rule) {
    if (!ok) fail(Errc::invalid_argument, std::string("synthetic config: ") + field + " " + rule);
  };
  check(num_identities >= 2, "num_identities", "must be >= 2");
  check(samples_min >= 1, "samples_per_identity", "must be >= 1");
  check(samples_max >= samples_min, "samples_per_identity", "max must be >= min");
  check(dim >= 2, "dim", "must be >= 2");
  check(std::isfinite(intra_class_sigma) && intra_class_sigma >= 0, "intra_class_sigma",
        "must be finite and >= 0");
  check(std::isfinite(view_rotation_angle) && view_rotation_angle >= 0, "view_rotation_angle",
        "must be finite and >= 0");
  check(std::isfinite(view_noise_sigma) && view_noise_sigma >= 0, "view_noise_sigma",
        "must be finite and >= 0");
  check(std::isfinite(base_noise_sigma) && base_noise_sigma >= 0, "base_noise_sigma",
        "must be finite and >= 0");
  check(intra_class_rank < dim, "intra_class_rank", "must be < dim (0 means full rank)");
  check(view_weak_dims <= dim, "view_weak_dims", "must be <= dim");
  check(std::isfinite(view_weak_gain) && view_weak_gain >= 0, "view_weak_gain",
        "must be finite and >= 0");
  check(heterogeneity_spread >= 0 && heterogeneity_spread < 1, "heterogeneity_spread",
        "must be in [0, 1)");
  check(labeled_identities < num_identities, "labeled_identities",
        "must leave at least one unlabeled identity");
}

std::size_t SyntheticConfig::resolved_labeled_identities() const {
  if (labeled_identities > 0) return labeled_identities;
  return std::max<std::size_t>(1, num_identities / 11);
}

std::vector<EmbeddingSet> SyntheticData::all_views() const {
  std::vector<EmbeddingSet> views;
  views.reserve(committee.size() + 1);
  views.push_back(base);
  views.insert(views.end(), committee.begin(), committee.end());
  return views;
}

std::vector<double> random_rotation(std::size_t dim, double angle, std::uint64_t seed) {
  std::vector<double> out(dim * dim, 0.0);
  if (angle == 0.0) {
    for (std::size_t i = 0; i < dim; ++i) out[i * dim + i] = 1.0;
    return out;
  }
  Rng rng(seed);
  const auto n = static_cast<Eigen::Index>(dim);
  Eigen::MatrixXd gaussian(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c) gaussian(r, c) = rng.normal();

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd upper = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (upper(j, j) < 0) q.col(j) *= -1.0;

  // Plane rotations in the basis given by q.
  Eigen::MatrixXd planes = Eigen::MatrixXd::Identity(n, n);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  for (Eigen::Index p = 0; p + 1 < n; p += 2) {
    planes(p, p) = c;
    planes(p, p + 1) = -s;
    planes(p + 1, p) = s;
    planes(p + 1, p + 1) = c;
  }
  const Eigen::MatrixXd rot = q * planes * q.transpose();
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index col = 0; col < n; ++col)
      out[static_cast<std::size_t>(r * n + col)] = rot(r, col);
  return out;
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t dim = cfg.dim;
  Rng latent(derive_seed(cfg.seed, "synthetic/latent"));

  std::vector<double> means(cfg.num_identities * dim);
  for (std::size_t i = 0; i < cfg.num_identities; ++i) {
    std::span<double> m(means.data() + i * dim, dim);
    for (double& x : m) x = latent.normal();
    normalize(m);
  }

  std::vector<std::uint32_t> identity_of;
  for (std::size_t i = 0; i < cfg.num_identities; ++i) {
    std::size_t count = cfg.samples_min;
    if (cfg.samples_max > cfg.samples_min)
      count += static_cast<std::size_t>(latent.below(cfg.samples_max - cfg.samples_min + 1));
    identity_of.insert(identity_of.end(), count, static_cast<std::uint32_t>(i));
  }
  const std::size_t total = identity_of.size();

  // Sample s is stored at row position_of[s], which is also its id.
  std::vector<std::size_t> position_of(total);
  std::iota(position_of.begin(), position_of.end(), std::size_t{0});
  latent.shuffle(std::span<std::size_t>(position_of));

  // Optional low-rank intra-class variation: each identity varies only inside
  // its own random rank-r subspace, with the same total variance.
  const std::size_t rank = cfg.intra_class_rank;
  std::vector<double> bases;
  double rank_scale = 0.0;
  if (rank > 0) {
    rank_scale = cfg.intra_class_sigma *
                 std::sqrt(static_cast<double>(dim) / static_cast<double>(rank));
    Rng basis_rng(derive_seed(cfg.seed, "synthetic/basis"));
    bases.resize(cfg.num_identities * rank * dim);
    for (std::size_t i = 0; i < cfg.num_identities; ++i) {
      double* b = bases.data() + i * rank * dim;
      // Gram-Schmidt over Gaussian draws.
      for (std::size_t j = 0; j < rank; ++j) {
        std::span<double> u(b + j * dim, dim);
        for (double& v : u) v = basis_rng.normal();
        for (std::size_t q = 0; q < j; ++q) {
          const double* w = b + q * dim;
          double dot = 0.0;
          for (std::size_t d = 0; d < dim; ++d) dot += u[d] * w[d];
          for (std::size_t d = 0; d < dim; ++d) u[d] -= dot * w[d];
        }
        normalize(u);
      }
    }
  }

  std::vector<double> samples(total * dim);
  std::vector<std::uint32_t> labels(total);
  for (std::size_t s = 0; s < total; ++s) {
    const std::size_t row = position_of[s];
    const std::uint32_t identity = identity_of[s];
    std::span<double> x(samples.data() + row * dim, dim);
    for (std::size_t d = 0; d < dim; ++d) x[d] = means[identity * dim + d];
    if (rank == 0) {
      for (std::size_t d = 0; d < dim; ++d) x[d] += cfg.intra_class_sigma * latent.normal();
    } else {
      const double* basis = bases.data() + identity * rank * dim;
      for (std::size_t j = 0; j < rank; ++j) {
        const double z = rank_scale * latent.normal();
        for (std::size_t d = 0; d < dim; ++d) x[d] += z * basis[j * dim + d];
      }
    }
    normalize(x);
    labels[row] = identity;
  }

  std::vector<SampleId> ids(total);
  std::iota(ids.begin(), ids.end(), SampleId{0});

  auto make_view = [&](double angle, std::uint64_t rotation_seed, double noise,
                       std::uint64_t noise_seed, std::size_t weak_dims) {
    std::vector<float> values(total * dim);
    std::vector<double> rotation;
    if (angle != 0.0) rotation = random_rotation(dim, angle, rotation_seed);
    Rng noise_rng(noise_seed);
    std::vector<double> y(dim);
    for (std::size_t r = 0; r < total; ++r) {
      const double* x = samples.data() + r * dim;
      if (rotation.empty()) {
        std::copy(x, x + dim, y.begin());
      } else {
        for (std::size_t i = 0; i < dim; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < dim; ++j) acc += rotation[i * dim + j] * x[j];
          y[i] = acc;
        }
      }
      for (std::size_t i = 0; i < weak_dims; ++i) y[i] *= cfg.view_weak_gain;
      if (noise != 0.0)
        for (double& v : y) v += noise * noise_rng.normal();
      for (std::size_t i = 0; i < dim; ++i) values[r * dim + i] = static_cast<float>(y[i]);
    }
    return EmbeddingSet(ids, dim, std::move(values));
  };

  SyntheticData data;
  data.base = make_view(0.0, 0, cfg.base_noise_sigma, derive_seed(cfg.seed, "synthetic/base"), 0);

  const std::size_t n_views = cfg.num_committee;
  for (std::size_t v = 0; v < n_views; ++v) {
    double scale = 1.0;
    if (cfg.heterogeneous && n_views > 1)
      scale = 1.0 - cfg.heterogeneity_spread +
              2.0 * cfg.heterogeneity_spread * static_cast<double>(v) /
                  static_cast<double>(n_views - 1);
    const std::string tag = std::to_string(v);
    const std::uint64_t rotation_seed =
        cfg.heterogeneous ? derive_seed(cfg.seed, "synthetic/rotation/" + tag)
                          : derive_seed(cfg.seed, "synthetic/rotation");
    data.committee.push_back(make_view(cfg.view_rotation_angle * scale, rotation_seed,
                                       cfg.view_noise_sigma * scale,
                                       derive_seed(cfg.seed, "synthetic/noise/" + tag),
                                       cfg.view_weak_dims));
  }

  data.truth = GroundTruth(ids, labels);
  const auto labeled_count = cfg.resolved_labeled_identities();
  for (std::size_t r = 0; r < total; ++r)
    (labels[r] < labeled_count ? data.split.labeled : data.split.unlabeled).push_back(ids[r]);
  return data;
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("CDPE");
  w.put<std::uint32_t>(kEmbeddingVersion);
  w.put<std::uint64_t>(set.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.dim()));
  for (SampleId id : set.ids()) w.put<std::uint64_t>(id);
  for (float v : set.values()) w.put<float>(v);
  w.flush(path);
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
  detail::ByteReader r(path);
  r.expect_magic("CDPE");
  const auto version = r.get<std::uint32_t>();
  if (version != kEmbeddingVersion)
    fail(Errc::unsupported_version, path.string() + ": embedding version " +
                                        std::to_string(version) + " not supported");
  const auto rows = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint32_t>();
  if (dim == 0) fail(Errc::malformed, path.string() + ": header declares dim 0");
  const unsigned __int128 needed =
      static_cast<unsigned __int128>(rows) * 8 + static_cast<unsigned __int128>(rows) * dim * 4;
  if (needed > r.remaining())
    fail(Errc::truncated, path.string() + ": header declares " + std::to_string(rows) +
                              " rows but payload is too short");
  r.expect_exact_payload(static_cast<std::uint64_t>(needed));
  std::vector<SampleId> ids(rows);
  for (auto& id : ids) id = r.get<std::uint64_t>();
  std::vector<float> values(rows * dim);
  for (auto& v : values) v = r.get<float>();
  return EmbeddingSet(std::move(ids), dim, std::move(values));
}

void save_labels(const GroundTruth& truth, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot open for writing: " + path.string());
  out << "id,label\n";
  for (std::size_t i = 0; i < truth.size(); ++i)
    out << truth.ids()[i] << ',' << truth.labels()[i] << '\n';
  if (!out) fail(Errc::io, "write failed: " + path.string());
}

GroundTruth load_labels(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  std::vector<std::pair<SampleId, std::uint64_t>> rows;
  detail::read_csv(path, "id,label", [&](const auto& fields, std::size_t line) {
    if (fields.size() != 2)
      fail(Errc::malformed, path.string() + ":" + std::to_string(line) + ": expected 2 fields");
    rows.emplace_back(detail::parse_number<SampleId>(fields[0], path, line),
                      detail::parse_number<std::uint64_t>(fields[1], path, line));
  });
  std::sort(rows.begin(), rows.end());
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].first == rows[i - 1].first)
      fail(Errc::duplicate_id, path.string() + ": duplicate id " + std::to_string(rows[i].first));

  std::map<std::uint64_t, std::uint32_t> dense;
  for (const auto& row : rows) dense.emplace(row.second, 0);
  std::uint32_t next = 0;
  bool contiguous = true;
  for (auto& [value, mapped] : dense) {
    if (value != next) contiguous = false;
    mapped = next++;
  }
  if (!contiguous && warnings)
    warnings->push_back(path.string() + ": labels not contiguous; remapped " +
                        std::to_string(dense.size()) + " distinct values to 0.." +
                        std::to_string(dense.size() - 1));

  std::vector<SampleId> ids;
  std::vector<std::uint32_t> labels;
  ids.reserve(rows.size());
  labels.reserve(rows.size());
  for (const auto& [id, label] : rows) {
    ids.push_back(id);
    labels.push_back(dense.at(label));
  }
  return GroundTruth(std::move(ids), std::move(labels));
}

void save_split(const Split& split, const std::filesystem::path& path) {
  std::vector<std::pair<SampleId, bool>> rows;
  for (SampleId id : split.labeled) rows.emplace_back(id, true);
  for (SampleId id : split.unlabeled) rows.emplace_back(id, false);
  std::sort(rows.begin(), rows.end());
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot open for writing: " + path.string());
  out << "id,partition\n";
  for (const auto& [id, labeled] : rows) out << id << ',' << (labeled ? "labeled" : "unlabeled") << '\n';
  if (!out) fail(Errc::io, "write failed: " + path.string());
}

Split load_split(const std::filesystem::path& path) {
  Split split;
  detail::read_csv(path, "id,partition", [&](const auto& fields, std::size_t line) {
    if (fields.size() != 2)
      fail(Errc::malformed, path.string() + ":" + std::to_string(line) + ": expected 2 fields");
    const auto id = detail::parse_number<SampleId>(fields[0], path, line);
    if (fields[1] == "labeled")
      split.labeled.push_back(id);
    else if (fields[1] == "unlabeled")
      split.unlabeled.push_back(id);
    else
      fail(Errc::malformed, path.string() + ":" + std::to_string(line) +
                                ": partition must be 'labeled' or 'unlabeled'");
  });
  std::sort(split.labeled.begin(), split.labeled.end());
  std::sort(split.unlabeled.begin(), split.unlabeled.end());
  std::vector<SampleId> both;
  std::merge(split.labeled.begin(), split.labeled.end(), split.unlabeled.begin(),
             split.unlabeled.end(), std::back_inserter(both));
  check_sorted_unique(both, "split ids");
  return split;
}

}  // namespace cdp
