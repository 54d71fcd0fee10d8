#include "divns/sampler.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <map>

namespace divns {
namespace {

// One user, 10 items, train positives 0..7.
PreparedData eight_of_ten() {
  return testing::make_data(10, {{0, 1, 2, 3, 4, 5, 6, 7}}, {{8}}, {{9}});
}

TEST(SampleCandidates, ForcedWhenPoolEqualsM) {
  const auto data = eight_of_ten();
  Rng rng(1);
  auto c = sample_candidates(data, 0, 0, 2, rng);
  std::sort(c.items.begin(), c.items.end());
  EXPECT_EQ(c.items, (std::vector<Index>{8, 9}));
  EXPECT_THROW(sample_candidates(data, 0, 0, 3, rng), Error);
}

TEST(SampleCandidates, DistinctNegativesAndDeterministic) {
  const auto data = testing::random_data(5, 200, 40, 3);
  for (Index u = 0; u < 5; ++u) {
    Rng a = make_stream(9, StreamTag::kPools, 0, u), b = make_stream(9, StreamTag::kPools, 0, u);
    const auto x = sample_candidates(data, u, data.split.train[u][0], 30, a);
    const auto y = sample_candidates(data, u, data.split.train[u][0], 30, b);
    EXPECT_EQ(x.items, y.items);
    std::set<Index> seen(x.items.begin(), x.items.end());
    EXPECT_EQ(seen.size(), 30u);
    for (Index j : x.items) EXPECT_FALSE(data.train_mask.contains(u, j));
  }
}

TEST(SampleCandidates, DenseRegimeIsAlsoDistinct) {
  const auto data = eight_of_ten();
  Rng rng(4);
  // Two eligible items; every draw must land on one of them.
  for (int k = 0; k < 100; ++k) {
    const auto c = sample_candidates(data, 0, 0, 1, rng);
    EXPECT_TRUE(c.items[0] == 8 || c.items[0] == 9);
  }
}

// Each (user, item) not in train is equally likely to be drawn: counts
// over 1e5 single draws stay within 3 sigma of n/|eligible|.
TEST(SampleCandidates, UniformOverEligibleItems) {
  const auto data = testing::make_data(12, {{0, 3, 7}}, {{1}}, {{2}});
  Rng rng(5);
  std::map<Index, int> counts;
  const int n = 100000;
  for (int k = 0; k < n; ++k) ++counts[sample_candidates(data, 0, 0, 1, rng).items[0]];
  EXPECT_EQ(counts.size(), 9u);
  const double p = 1.0 / 9.0, sigma = std::sqrt(n * p * (1 - p));
  for (auto [item, c] : counts) EXPECT_NEAR(c, n * p, 3 * sigma) << item;
}

TEST(Rns, SingletonAndUniform) {
  Rng rng(6);
  EXPECT_EQ(rns_select(CandidateSet{0, 0, {42}}, rng), 42);
  const CandidateSet c{0, 0, {3, 1, 4, 5, 9, 2, 6, 8, 7, 0}};
  std::map<Index, int> counts;
  const int n = 100000;
  for (int k = 0; k < n; ++k) ++counts[rns_select(c, rng)];
  const double p = 0.1, sigma = std::sqrt(n * p * (1 - p));
  for (auto [item, cnt] : counts) EXPECT_NEAR(cnt, n * p, 3 * sigma) << item;
  Rng a(7), b(7);
  for (int k = 0; k < 50; ++k) EXPECT_EQ(rns_select(c, a), rns_select(c, b));
  EXPECT_THROW(rns_select(CandidateSet{}, rng), Error);
}

TEST(Pns, PopularityOneToThree) {
  // Train positives 0 and 1 are excluded; eligible 2 (pop 1) and 3 (pop 3).
  const auto data = testing::make_data(4, {{0, 1}});
  const PopularitySampler sampler({5, 5, 1, 3}, 1.0);
  Rng rng(8);
  const int n = 100000;
  int three = 0;
  for (int k = 0; k < n; ++k) {
    const Index j = pns_select(sampler, data, 0, rng);
    ASSERT_TRUE(j == 2 || j == 3);
    three += j == 3;
  }
  const double p = 0.75, sigma = std::sqrt(p * (1 - p) / n);
  EXPECT_NEAR(three / double(n), p, 3 * sigma);
}

TEST(Pns, EqualPopularityAndZeroBetaAreUniform) {
  const auto data = testing::make_data(5, {{0}});
  const int n = 100000;
  for (const auto& [pop, beta] : std::vector<std::pair<std::vector<Index>, double>>{{{4, 4, 4, 4, 4}, 0.75},
                                                                                   {{1, 9, 2, 30, 5}, 0.0}}) {
    const PopularitySampler sampler(pop, beta);
    Rng rng(9);
    std::map<Index, int> counts;
    for (int k = 0; k < n; ++k) ++counts[pns_select(sampler, data, 0, rng)];
    EXPECT_EQ(counts.count(0), 0u);
    const double p = 0.25, sigma = std::sqrt(n * p * (1 - p));
    for (auto [item, c] : counts) EXPECT_NEAR(c, n * p, 3 * sigma) << "beta=" << beta << " item " << item;
  }
}

EmbeddingTable one_dim(std::vector<double> item_scores) {
  EmbeddingTable t;
  t.users = Matrix::Ones(1, 1);
  t.items.resize(static_cast<Eigen::Index>(item_scores.size()), 1);
  for (std::size_t i = 0; i < item_scores.size(); ++i) t.items(static_cast<Eigen::Index>(i), 0) = item_scores[i];
  return t;
}

TEST(Dns, ArgmaxAndRanking) {
  const auto t = one_dim({0.1, 0.9, 0.5});
  const auto r = dns_select(t, 0, CandidateSet{0, 0, {0, 1, 2}});
  EXPECT_EQ(r.hard, 1);
  ASSERT_EQ(r.ranked.size(), 3u);
  EXPECT_EQ(r.ranked[0].item, 1);
  EXPECT_EQ(r.ranked[1].item, 2);
  EXPECT_EQ(r.ranked[2].item, 0);
}

TEST(Dns, TiesGoToLowestIndex) {
  const auto t = one_dim({0.3, 0.3, 0.3, 0.3});
  EXPECT_EQ(dns_select(t, 0, CandidateSet{0, 0, {3, 2, 1}}).hard, 1);
}

TEST(Dns, MatchesLinearScanOracle) {
  const auto t = init_embeddings(1, 100, 8, 3, 1.0);
  Rng rng(10);
  std::uniform_int_distribution<Index> pick(0, 99);
  for (int trial = 0; trial < 200; ++trial) {
    CandidateSet c{0, 0, {}};
    while (c.items.size() < 10) {
      const Index j = pick(rng);
      if (std::find(c.items.begin(), c.items.end(), j) == c.items.end()) c.items.push_back(j);
    }
    Index best = c.items[0];
    for (Index j : c.items) {
      const double s = t.users.row(0).dot(t.items.row(j)), sb = t.users.row(0).dot(t.items.row(best));
      if (s > sb || (s == sb && j < best)) best = j;
    }
    EXPECT_EQ(dns_select(t, 0, c).hard, best);
  }
}

TEST(BuildPools, SizesFollowShape) {
  const auto data = testing::make_data(60, {{0, 1, 2, 3, 4, 5}});
  const auto t = init_embeddings(1, 60, 4, 1);
  Rng rng(11);
  const auto p = build_pools(t, data, 0, 10, 4, rng);
  EXPECT_EQ(p.hard.size(), 6u);
  EXPECT_EQ(p.cache.size(), 24u);
  EXPECT_EQ(p.hard.positives, (std::vector<Index>{0, 1, 2, 3, 4, 5}));
  Rng rng4(11);
  const auto w = build_pools(t, data, 0, PoolShape{10, 4, 4}, 0, rng4);
  EXPECT_EQ(PoolShape({10, 4, 4}).candidates(), 40u);
  EXPECT_EQ(w.hard.size(), 24u);
  EXPECT_EQ(w.cache.size(), 96u);
  EXPECT_THROW(build_pools(t, data, 0, 10, 10, rng), Error);
}

// Item scores fall with item index, so each positive's ranked candidates
// are its candidate ids in ascending order: hard = smallest id, cache =
// the next r ids. The candidate draws are replayed from the same stream.
TEST(BuildPools, CacheIsNextRankedCandidates) {
  std::vector<double> s(50);
  for (int i = 0; i < 50; ++i) s[i] = 100.0 - i;
  const auto t = one_dim(s);
  const auto data = testing::make_data(50, {{0, 1, 2}});
  for (std::size_t r : {std::size_t{4}, std::size_t{9}}) {
    Rng rng(12), replay(12);
    const auto p = build_pools(t, data, 0, 10, r, rng);
    for (std::size_t g = 0; g < 3; ++g) {
      auto cand = sample_candidates(data, 0, data.split.train[0][g], 10, replay).items;
      std::sort(cand.begin(), cand.end());
      EXPECT_EQ(p.hard.items[g], cand[0]);
      for (std::size_t c = 0; c < r; ++c) EXPECT_EQ(p.cache.entries[g * r + c].item, cand[1 + c]);
    }
    if (r == 9) {
      // r = m - 1: every non-hard candidate is cached.
      EXPECT_EQ(p.cache.size(), 27u);
    }
  }
}

}  // namespace
}  // namespace divns
