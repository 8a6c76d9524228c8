#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include <cdp/dataset.hpp>
#include <cdp/knn_graph.hpp>
#include <cdp/rng.hpp>

#include "test_util.hpp"

using namespace cdp;
using cdp::test::TempDir;

namespace {

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.num_identities = 12;
  c.samples_min = 3;
  c.samples_max = 7;
  c.dim = 8;
  c.num_committee = 3;
  c.seed = 11;
  return c;
}

double cosine64(std::span<const double> a, std::span<const double> b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return d / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("zero spread: sample cosine equals cosine of the identity means") {
  SyntheticConfig c;
  c.num_identities = 2;
  c.samples_min = c.samples_max = 1;
  c.dim = 6;
  c.intra_class_sigma = 0.0;
  c.num_committee = 0;
  c.labeled_identities = 1;
  c.seed = 99;
  const auto data = generate_synthetic(c);

  // Means re-derived from the documented latent stream.
  Rng rng(derive_seed(c.seed, "synthetic/latent"));
  std::vector<double> m0(c.dim), m1(c.dim);
  for (auto& v : m0) v = rng.normal();
  for (auto& v : m1) v = rng.normal();

  const SampleId id0 = data.truth.label_of(0) == 0 ? 0 : 1;
  const SampleId id1 = 1 - id0;
  const double got = cosine_similarity(data.base.row_of(id0), data.base.row_of(id1));
  CHECK(got == doctest::Approx(cosine64(m0, m1)).epsilon(1e-6));
}

TEST_CASE("zero perturbation: committee views are bit-identical to the base") {
  auto c = small_config();
  c.view_rotation_angle = 0.0;
  c.view_noise_sigma = 0.0;
  c.num_committee = 3;
  const auto data = generate_synthetic(c);
  REQUIRE(data.committee.size() == 3);
  for (const auto& view : data.committee) CHECK(view == data.base);
}

TEST_CASE("rotation only: committee cosines match base cosines") {
  auto c = small_config();
  c.view_noise_sigma = 0.0;
  c.view_rotation_angle = 0.7;
  const auto data = generate_synthetic(c);
  const auto n = data.base.size();
  for (const auto& view : data.committee) {
    CHECK_FALSE(view == data.base);
    for (std::size_t i = 0; i < n; i += 3)
      for (std::size_t j = i + 1; j < n; j += 5)
        CHECK(cosine_similarity(view.row(i), view.row(j)) ==
              doctest::Approx(cosine_similarity(data.base.row(i), data.base.row(j))).epsilon(1e-5));
  }
}

TEST_CASE("random_rotation is orthogonal and preserves cosine") {
  const std::size_t dim = 9;
  CHECK(random_rotation(dim, 0.0, 5) == [&] {
    std::vector<double> eye(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) eye[i * dim + i] = 1.0;
    return eye;
  }());

  Rng rng(3);
  for (double angle : {0.1, 0.5, 1.5}) {
    const auto r = random_rotation(dim, angle, 17);
    for (std::size_t a = 0; a < dim; ++a)
      for (std::size_t b = 0; b < dim; ++b) {
        double dot = 0;
        for (std::size_t k = 0; k < dim; ++k) dot += r[a * dim + k] * r[b * dim + k];
        CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-12));
      }
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(dim), y(dim), rx(dim, 0.0), ry(dim, 0.0);
      for (auto& v : x) v = rng.normal();
      for (auto& v : y) v = rng.normal();
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t k = 0; k < dim; ++k) {
          rx[i] += r[i * dim + k] * x[k];
          ry[i] += r[i * dim + k] * y[k];
        }
      CHECK(std::abs(cosine64(rx, ry) - cosine64(x, y)) <= 1e-9);
    }
  }
}

TEST_CASE("generation is deterministic per seed") {
  const auto c = small_config();
  const auto a = generate_synthetic(c);
  const auto b = generate_synthetic(c);
  CHECK(a.base == b.base);
  CHECK(a.committee == b.committee);
  CHECK(a.truth == b.truth);
  CHECK(a.split == b.split);

  TempDir dir("det");
  save_embeddings(a.base, dir / "a.cdpe");
  save_embeddings(b.base, dir / "b.cdpe");
  CHECK(test::slurp(dir / "a.cdpe") == test::slurp(dir / "b.cdpe"));

  auto other = c;
  other.seed = c.seed + 1;
  CHECK_FALSE(generate_synthetic(other).base == a.base);
}

TEST_CASE("split is by identity and covers every sample") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    auto c = small_config();
    c.seed = seed;
    c.labeled_identities = 1 + seed % 4;
    const auto data = generate_synthetic(c);
    std::set<std::uint32_t> labeled, unlabeled;
    for (auto id : data.split.labeled) labeled.insert(data.truth.label_of(id));
    for (auto id : data.split.unlabeled) unlabeled.insert(data.truth.label_of(id));
    for (auto l : labeled) CHECK(unlabeled.count(l) == 0);
    CHECK(labeled.size() == c.labeled_identities);
    CHECK(data.split.labeled.size() + data.split.unlabeled.size() == data.base.size());
    CHECK(std::is_sorted(data.split.labeled.begin(), data.split.labeled.end()));
    CHECK(std::is_sorted(data.split.unlabeled.begin(), data.split.unlabeled.end()));
  }
}

TEST_CASE("default labeled split is one identity in eleven") {
  SyntheticConfig c;
  CHECK(c.resolved_labeled_identities() == 10);
  c.num_identities = 5;
  CHECK(c.resolved_labeled_identities() == 1);
}

TEST_CASE("sample counts honor the per-identity range") {
  const auto c = small_config();
  const auto data = generate_synthetic(c);
  std::vector<std::size_t> counts(c.num_identities, 0);
  for (auto l : data.truth.labels()) ++counts[l];
  for (auto n : counts) {
    CHECK(n >= c.samples_min);
    CHECK(n <= c.samples_max);
  }
  CHECK(data.truth.num_identities() == c.num_identities);
}

TEST_CASE("low-rank intra-class spread is deterministic and differs from isotropic") {
  auto c = small_config();
  c.intra_class_rank = 2;
  const auto a = generate_synthetic(c);
  CHECK(a.base == generate_synthetic(c).base);
  c.intra_class_rank = 0;
  CHECK_FALSE(a.base == generate_synthetic(c).base);
}

TEST_CASE("invalid synthetic configs name the offending field") {
  auto expect_field = [](SyntheticConfig c, const std::string& field) {
    try {
      c.validate();
      FAIL("expected a validation error for " << field);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::invalid_argument);
      CHECK(std::string(e.what()).find(field) != std::string::npos);
    }
  };
  auto c = small_config();
  c.num_identities = 1;
  expect_field(c, "num_identities");
  c = small_config();
  c.samples_min = 0;
  expect_field(c, "samples_per_identity");
  c = small_config();
  c.dim = 1;
  expect_field(c, "dim");
  c = small_config();
  c.intra_class_sigma = -1;
  expect_field(c, "intra_class_sigma");
  c = small_config();
  c.intra_class_rank = c.dim;
  expect_field(c, "intra_class_rank");
  c = small_config();
  c.labeled_identities = c.num_identities;
  expect_field(c, "labeled_identities");
}

TEST_CASE("EmbeddingSet validates ids and rows") {
  using test::error_code_of;
  CHECK(error_code_of([] { EmbeddingSet({1, 0}, 1, {1.f, 1.f}); }) == Errc::invalid_argument);
  CHECK(error_code_of([] { EmbeddingSet({0, 0}, 1, {1.f, 1.f}); }) == Errc::duplicate_id);
  CHECK(error_code_of([] { EmbeddingSet({0, 1}, 2, {1.f, 0.f, 0.f, 0.f}); }) == Errc::zero_norm);
  CHECK(error_code_of([] { EmbeddingSet({0, 1}, 2, {1.f, 0.f, 1.f}); }) ==
        Errc::dimension_mismatch);
  CHECK(error_code_of([] { EmbeddingSet({0}, 1, {NAN}); }) == Errc::zero_norm);
}

TEST_CASE("embedding file round trip is bit exact") {
  TempDir dir("emb");
  const EmbeddingSet set({2, 5, 9}, 4,
                         {0.1f, -2.f, 3.5f, 1e-7f, 4.f, 5.f, 6.f, 7.f, -1.f, 0.f, 0.f, 1e30f});
  save_embeddings(set, dir / "x.cdpe");
  const auto back = load_embeddings(dir / "x.cdpe");
  CHECK(back == set);
  CHECK(std::memcmp(back.values().data(), set.values().data(), set.values().size() * 4) == 0);
  // 4 magic + 4 version + 8 count + 4 dim + 3 ids + 12 floats.
  CHECK(test::slurp(dir / "x.cdpe").size() == 4 + 4 + 8 + 4 + 3 * 8 + 12 * 4);
}

TEST_CASE("embedding loader reports each malformation distinctly") {
  using test::error_code_of;
  TempDir dir("bad");
  const auto set = test::random_set(10, 3, 1);
  save_embeddings(set, dir / "ok.cdpe");
  const std::string bytes = test::slurp(dir / "ok.cdpe");

  SUBCASE("wrong magic") {
    auto b = bytes;
    b[0] = 'X';
    test::spit(dir / "m.cdpe", b);
    CHECK(error_code_of([&] { load_embeddings(dir / "m.cdpe"); }) == Errc::bad_magic);
  }
  SUBCASE("unsupported version") {
    auto b = bytes;
    b[4] = 2;
    test::spit(dir / "v.cdpe", b);
    CHECK(error_code_of([&] { load_embeddings(dir / "v.cdpe"); }) == Errc::unsupported_version);
  }
  SUBCASE("ten rows declared over a nine-row payload") {
    auto b = bytes.substr(0, bytes.size() - 3 * 4);
    test::spit(dir / "t.cdpe", b);
    CHECK(error_code_of([&] { load_embeddings(dir / "t.cdpe"); }) == Errc::truncated);
  }
  SUBCASE("header cut short") {
    test::spit(dir / "h.cdpe", bytes.substr(0, 10));
    CHECK(error_code_of([&] { load_embeddings(dir / "h.cdpe"); }) == Errc::truncated);
  }
  SUBCASE("trailing bytes beyond the declared size") {
    test::spit(dir / "x.cdpe", bytes + std::string(4, '\0'));
    CHECK(error_code_of([&] { load_embeddings(dir / "x.cdpe"); }) == Errc::dimension_mismatch);
  }
  SUBCASE("missing file") {
    CHECK(error_code_of([&] { load_embeddings(dir / "none.cdpe"); }) == Errc::io);
  }
}

TEST_CASE("labels round trip, duplicates and remapping") {
  using test::error_code_of;
  TempDir dir("labels");
  const GroundTruth truth({0, 1, 2}, {0, 0, 1});
  save_labels(truth, dir / "l.csv");
  CHECK(test::slurp(dir / "l.csv") == "id,label\n0,0\n1,0\n2,1\n");
  CHECK(load_labels(dir / "l.csv") == truth);

  test::spit(dir / "dup.csv", "id,label\n0,0\n0,1\n");
  CHECK(error_code_of([&] { load_labels(dir / "dup.csv"); }) == Errc::duplicate_id);

  test::spit(dir / "gap.csv", "id,label\n0,0\n1,2\n2,2\n");
  std::vector<std::string> warnings;
  const auto remapped = load_labels(dir / "gap.csv", &warnings);
  CHECK(remapped == GroundTruth({0, 1, 2}, {0, 1, 1}));
  CHECK(warnings.size() == 1);

  test::spit(dir / "hdr.csv", "sample,label\n0,0\n");
  CHECK(error_code_of([&] { load_labels(dir / "hdr.csv"); }) == Errc::malformed);
  test::spit(dir / "num.csv", "id,label\n0,x\n");
  CHECK(error_code_of([&] { load_labels(dir / "num.csv"); }) == Errc::malformed);
}

TEST_CASE("split file round trip") {
  using test::error_code_of;
  TempDir dir("split");
  const Split split{{1, 4}, {0, 2, 3}};
  save_split(split, dir / "s.csv");
  CHECK(load_split(dir / "s.csv") == split);
  test::spit(dir / "bad.csv", "id,partition\n0,train\n");
  CHECK(error_code_of([&] { load_split(dir / "bad.csv"); }) == Errc::malformed);
  test::spit(dir / "dup.csv", "id,partition\n0,labeled\n0,unlabeled\n");
  CHECK(error_code_of([&] { load_split(dir / "dup.csv"); }) == Errc::duplicate_id);
}

TEST_CASE("GroundTruth subset re-densifies labels") {
  const GroundTruth truth({0, 1, 2, 3, 4}, {2, 0, 1, 2, 0});
  const std::vector<SampleId> keep = {0, 3, 4};
  const auto sub = truth.subset(keep);
  CHECK(sub == GroundTruth({0, 3, 4}, {0, 0, 1}));
  CHECK(sub.num_identities() == 2);
}
