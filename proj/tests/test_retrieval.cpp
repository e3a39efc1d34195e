#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "mprl/error.hpp"
#include "mprl/retrieval.hpp"

using namespace mprl;

namespace {

struct Oracle {
  double mAP = 0.0;
  std::vector<double> cmc;
};

// Rank of gallery item g for one query: items strictly closer, or equally
// close with a lower index, come first.
std::size_t rank_of(std::span<const double> d, std::size_t g) {
  std::size_t r = 1;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (d[j] < d[g] || (d[j] == d[g] && j < g)) ++r;
  }
  return r;
}

Oracle brute_force(const DistanceMatrix& dm, const std::vector<std::size_t>& ql,
                   const std::vector<std::size_t>& gl) {
  Oracle o;
  o.cmc.assign(dm.cols, 0.0);
  for (std::size_t q = 0; q < dm.rows; ++q) {
    const auto d = dm.row(q);
    std::vector<std::size_t> relevant_ranks;
    for (std::size_t g = 0; g < dm.cols; ++g) {
      if (gl[g] == ql[q]) relevant_ranks.push_back(rank_of(d, g));
    }
    double ap = 0.0;
    for (std::size_t r : relevant_ranks) {
      const auto hits = std::count_if(relevant_ranks.begin(), relevant_ranks.end(), [&](std::size_t x) { return x <= r; });
      ap += static_cast<double>(hits) / static_cast<double>(r);
    }
    o.mAP += ap / static_cast<double>(relevant_ranks.size()) / static_cast<double>(dm.rows);
    const std::size_t first = *std::min_element(relevant_ranks.begin(), relevant_ranks.end());
    for (std::size_t k = first - 1; k < dm.cols; ++k) o.cmc[k] += 1.0 / static_cast<double>(dm.rows);
  }
  return o;
}

EmbeddingSet make_set(std::vector<std::vector<double>> vectors, std::vector<std::size_t> labels) {
  EmbeddingSet s;
  for (std::size_t i = 0; i < vectors.size(); ++i) s.ids.push_back(i);
  s.labels = std::move(labels);
  s.vectors = std::move(vectors);
  return s;
}

EmbeddingSet random_set(std::size_t n, std::size_t dim, std::size_t classes, std::mt19937_64& rng,
                        std::uint64_t id_offset) {
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<std::size_t> cd(0, classes - 1);
  EmbeddingSet s;
  for (std::size_t i = 0; i < n; ++i) {
    s.ids.push_back(id_offset + i);
    s.labels.push_back(cd(rng));
    std::vector<double> v(dim);
    for (double& x : v) x = nd(rng);
    s.vectors.push_back(v);
  }
  return s;
}

}  // namespace

TEST(Distance, ThreeFourFive) {
  const auto q = make_set({{0.0, 0.0}}, {0});
  const auto g = make_set({{3.0, 4.0}, {0.0, 0.0}}, {0, 1});
  const DistanceMatrix d = pairwise_sq_euclidean(q, g);
  EXPECT_EQ(d(0, 0), 25.0);
  EXPECT_EQ(d(0, 1), 0.0);
}

TEST(Distance, SelfDistanceIsZeroAndMatchesBruteForce) {
  std::mt19937_64 rng(4);
  const auto q = random_set(5, 3, 3, rng, 0);
  const auto g = random_set(7, 3, 3, rng, 100);
  const DistanceMatrix self = pairwise_sq_euclidean(q, q);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(self(i, i), 0.0);
  const DistanceMatrix d = pairwise_sq_euclidean(q, g);
  ASSERT_EQ(d.rows, 5u);
  ASSERT_EQ(d.cols, 7u);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 7; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += std::pow(q.vectors[i][k] - g.vectors[j][k], 2);
      EXPECT_NEAR(d(i, j), s, 1e-12);
    }
  }
}

TEST(Distance, DimensionMismatch) {
  const auto q = make_set({{0.0, 0.0}}, {0});
  const auto g = make_set({{1.0, 2.0, 3.0}}, {0});
  EXPECT_THROW(pairwise_sq_euclidean(q, g), Error);
}

TEST(Evaluate, HandCaseFiveSixths) {
  // Relevant items land at ranks 1 and 3.
  DistanceMatrix d{1, 4, {0.1, 0.2, 0.3, 0.4}};
  const std::vector<std::size_t> ql{7};
  const std::vector<std::size_t> gl{7, 2, 7, 3};
  const EvalReport r = evaluate(d, ql, gl);
  EXPECT_NEAR(r.mAP, 5.0 / 6.0, 1e-12);
  EXPECT_EQ(r.rank1, 1.0);
  EXPECT_EQ(r.cmc, (std::vector<double>{1.0, 1.0, 1.0, 1.0}));
}

TEST(Evaluate, AllRelevantIsPerfect) {
  DistanceMatrix d{2, 3, {3, 1, 2, 0.5, 0.5, 0.5}};
  const std::vector<std::size_t> ql{1, 1};
  const std::vector<std::size_t> gl{1, 1, 1};
  const EvalReport r = evaluate(d, ql, gl);
  EXPECT_EQ(r.mAP, 1.0);
  EXPECT_EQ(r.rank1, 1.0);
}

TEST(Evaluate, TiesBrokenByGalleryIndex) {
  DistanceMatrix d{1, 3, {1.0, 1.0, 1.0}};
  const std::vector<std::size_t> ql{0};
  EXPECT_EQ(evaluate(d, ql, std::vector<std::size_t>{1, 0, 1}).rank1, 0.0);
  EXPECT_EQ(evaluate(d, ql, std::vector<std::size_t>{0, 1, 1}).rank1, 1.0);
  EXPECT_NEAR(evaluate(d, ql, std::vector<std::size_t>{1, 0, 1}).mAP, 0.5, 1e-15);
}

TEST(Evaluate, MatchesBruteForceOracle) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> nq(1, 10), ng(3, 15);
    auto q = random_set(nq(rng), 4, 3, rng, 0);
    auto g = random_set(ng(rng), 4, 3, rng, 1000);
    // Ensure every query class is present in the gallery.
    for (std::size_t c = 0; c < 3; ++c) g.labels[c] = c;
    DistanceMatrix d = pairwise_sq_euclidean(q, g);
    // Inject ties.
    if (trial % 3 == 0) d.values[0] = d.values[1];
    const Oracle o = brute_force(d, q.labels, g.labels);
    const EvalReport r = evaluate(d, q.labels, g.labels);
    EXPECT_NEAR(r.mAP, o.mAP, 1e-12);
    ASSERT_EQ(r.cmc.size(), o.cmc.size());
    for (std::size_t k = 0; k < o.cmc.size(); ++k) EXPECT_NEAR(r.cmc[k], o.cmc[k], 1e-12);
    EXPECT_EQ(r.rank1, r.cmc[0]);
    for (std::size_t k = 1; k < r.cmc.size(); ++k) EXPECT_LE(r.cmc[k - 1], r.cmc[k]);
    EXPECT_GE(r.mAP, 0.0);
    EXPECT_LE(r.mAP, 1.0);
  }
}

TEST(Evaluate, MonotoneTransformInvariance) {
  std::mt19937_64 rng(5);
  auto q = random_set(6, 3, 3, rng, 0);
  auto g = random_set(12, 3, 3, rng, 100);
  for (std::size_t c = 0; c < 3; ++c) g.labels[c] = c;
  const DistanceMatrix d = pairwise_sq_euclidean(q, g);
  DistanceMatrix t = d;
  for (double& v : t.values) v = std::sqrt(v) * 3.0 + 1.0;
  const EvalReport a = evaluate(d, q.labels, g.labels);
  const EvalReport b = evaluate(t, q.labels, g.labels);
  EXPECT_EQ(a.mAP, b.mAP);
  EXPECT_EQ(a.cmc, b.cmc);
}

TEST(Evaluate, QueryPermutationInvariance) {
  std::mt19937_64 rng(6);
  auto q = random_set(8, 3, 2, rng, 0);
  auto g = random_set(10, 3, 2, rng, 100);
  g.labels[0] = 0;
  g.labels[1] = 1;
  const EvalReport a = evaluate(pairwise_sq_euclidean(q, g), q.labels, g.labels);
  std::vector<std::size_t> perm(q.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  EmbeddingSet p;
  for (std::size_t i : perm) {
    p.ids.push_back(q.ids[i]);
    p.labels.push_back(q.labels[i]);
    p.vectors.push_back(q.vectors[i]);
  }
  const EvalReport b = evaluate(pairwise_sq_euclidean(p, g), p.labels, g.labels);
  EXPECT_NEAR(a.mAP, b.mAP, 1e-12);
  for (std::size_t k = 0; k < a.cmc.size(); ++k) EXPECT_NEAR(a.cmc[k], b.cmc[k], 1e-12);
}

TEST(Evaluate, ProtocolViolations) {
  DistanceMatrix d{1, 2, {0.1, 0.2}};
  try {
    evaluate(d, std::vector<std::size_t>{5}, std::vector<std::size_t>{0, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ProtocolViolation);
  }
  DistanceMatrix empty{0, 2, {}};
  EXPECT_THROW(evaluate(empty, std::vector<std::size_t>{}, std::vector<std::size_t>{0, 1}), Error);
}

TEST(Report, JsonFormat) {
  EvalReport r{0.5, 2.0 / 3.0, {0.5, 1.0}};
  EXPECT_EQ(to_json(r).rfind("{\"rank1\": 0.500000, \"mAP\": 0.666667, \"cmc\": [0.500000, 1.000000]}", 0), 0u);
}

TEST(EmbeddingFile, RoundTripIsBitExact) {
  std::mt19937_64 rng(8);
  const auto s = random_set(9, 5, 3, rng, 40);
  std::stringstream buf;
  write_embeddings(s, buf);
  const EmbeddingSet back = read_embeddings(buf);
  EXPECT_EQ(back.ids, s.ids);
  EXPECT_EQ(back.labels, s.labels);
  EXPECT_EQ(back.vectors, s.vectors);
}

TEST(EmbeddingSet, DuplicateIdsRejected) {
  auto s = make_set({{1.0}, {2.0}}, {0, 0});
  s.ids[1] = s.ids[0];
  EXPECT_THROW(s.validate(), Error);
}
