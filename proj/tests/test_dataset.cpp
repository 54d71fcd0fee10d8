#include "divns/dataset.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

namespace divns {
namespace {

RawInteractionLog parse(const std::string& text, const InputFormat& f = InputFormat::tsv()) {
  std::istringstream in(text);
  return parse_interactions(in, f);
}

RawInteractionLog pairs_log(const std::vector<std::pair<std::string, std::string>>& pairs) {
  RawInteractionLog log;
  for (const auto& [u, i] : pairs) log.records.push_back({u, i, {}, {}});
  return log;
}

std::set<std::pair<std::string, std::string>> pair_set(const RawInteractionLog& log) {
  std::set<std::pair<std::string, std::string>> s;
  for (const auto& r : log.records) s.insert({r.user, r.item});
  return s;
}

TEST(LoadInteractions, ThreeLinesGiveThreeRecords) {
  const auto log = parse("1\t10\n2\t10\n2\t11\n");
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log.records[2].user, "2");
  EXPECT_EQ(log.records[2].item, "11");
  EXPECT_FALSE(log.records[0].weight.has_value());
}

TEST(LoadInteractions, EmptyInputGivesEmptyLog) { EXPECT_TRUE(parse("").empty()); }

TEST(LoadInteractions, SingleFieldLineReportsItsLineNumber) {
  try {
    parse("1\t2\n\n3\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(LoadInteractions, OptionalWeightAndTimestamp) {
  const auto log = parse("196,242,3,881250949\n", InputFormat::csv());
  ASSERT_EQ(log.size(), 1u);
  EXPECT_DOUBLE_EQ(*log.records[0].weight, 3.0);
  EXPECT_EQ(*log.records[0].timestamp, 881250949);
}

TEST(LoadInteractions, MultiCharacterDelimiter) {
  const auto log = parse("1::1193::5::978300760\n", InputFormat::parse("::"));
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log.records[0].item, "1193");
}

TEST(LoadInteractions, BadWeightIsAParseError) { EXPECT_THROW(parse("1\t2\tx\n"), ParseError); }

TEST(LoadInteractions, MissingFileThrows) {
  EXPECT_THROW(load_interactions("/nonexistent/divns/u.data"), Error);
}

TEST(KCore, KOneOnlyDeduplicates) {
  const auto log = pairs_log({{"a", "x"}, {"a", "x"}, {"b", "y"}});
  const auto out = k_core_filter(log, 1);
  EXPECT_EQ(out.size(), 2u);
  EXPECT_EQ(pair_set(out), pair_set(log));
}

TEST(KCore, CompleteFiveByFiveIsAlreadyACore) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (int u = 0; u < 5; ++u)
    for (int i = 0; i < 5; ++i) pairs.push_back({"u" + std::to_string(u), "i" + std::to_string(i)});
  const auto log = pairs_log(pairs);
  EXPECT_EQ(pair_set(k_core_filter(log, 5)), pair_set(log));
}

// Users a, b hold items 0..4 and item 5 is held by a, b and c. c holds
// items 5 and 6 only. With k = 2: c survives (degree 2), item 6 dies
// (one holder), which drops c to degree 1, so c dies, leaving item 5 with
// two holders. The oracle replays that cascade by hand.
TEST(KCore, CascadeRemovesLowDegreeUserAndItsItems) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const char* u : {"a", "b"})
    for (int i = 0; i <= 5; ++i) pairs.push_back({u, "i" + std::to_string(i)});
  pairs.push_back({"c", "i5"});
  pairs.push_back({"c", "i6"});
  const auto out = k_core_filter(pairs_log(pairs), 2);
  std::set<std::pair<std::string, std::string>> expected;
  for (const char* u : {"a", "b"})
    for (int i = 0; i <= 5; ++i) expected.insert({u, "i" + std::to_string(i)});
  EXPECT_EQ(pair_set(out), expected);
}

// Five users share five items; a sixth holds two of them. k = 5 removes the
// sixth user and leaves every shared item with five holders.
TEST(KCore, ThirdUserBelowKIsRemoved) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const char* u : {"a", "b", "c", "d", "e"})
    for (int i = 0; i < 5; ++i) pairs.push_back({u, "i" + std::to_string(i)});
  pairs.push_back({"z", "i0"});
  pairs.push_back({"z", "i1"});
  const auto out = k_core_filter(pairs_log(pairs), 5);
  for (const auto& r : out.records) EXPECT_NE(r.user, "z");
  EXPECT_EQ(out.size(), 25u);
}

// Removing the light user pushes item i9 below k, which then drags a
// second user below k.
TEST(KCore, ItemRemovalRechecksUsers) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const char* u : {"a", "b", "c"})
    for (int i = 0; i < 3; ++i) pairs.push_back({u, "i" + std::to_string(i)});
  pairs.push_back({"d", "i9"});  // d has one interaction and dies first
  pairs.push_back({"e", "i9"});
  pairs.push_back({"e", "i0"});
  pairs.push_back({"e", "i1"});
  pairs.push_back({"f", "i9"});
  pairs.push_back({"f", "i2"});
  pairs.push_back({"f", "i1"});
  // k = 3: d goes, i9 falls to 2 holders and goes, e and f fall to 2 and go,
  // leaving the 3 x 3 block.
  const auto out = k_core_filter(pairs_log(pairs), 3);
  std::set<std::pair<std::string, std::string>> expected;
  for (const char* u : {"a", "b", "c"})
    for (int i = 0; i < 3; ++i) expected.insert({u, "i" + std::to_string(i)});
  EXPECT_EQ(pair_set(out), expected);
}

// Two users sharing five items plus a third with two: after the third user
// goes, each item has two holders, below k = 5, so the cascade empties the log.
TEST(KCore, TwoUserToyCascadesToEmpty) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const char* u : {"a", "b"})
    for (int i = 0; i < 5; ++i) pairs.push_back({u, "i" + std::to_string(i)});
  pairs.push_back({"c", "i0"});
  pairs.push_back({"c", "i1"});
  EXPECT_THROW(k_core_filter(pairs_log(pairs), 5), EmptyResultError);
}

TEST(KCore, EverySurvivorHasAtLeastKOnRandomLogs) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::pair<std::string, std::string>> pairs;
    std::uniform_int_distribution<int> u(0, 29), i(0, 39);
    for (int n = 0; n < 400; ++n) pairs.push_back({std::to_string(u(rng)), std::to_string(i(rng))});
    RawInteractionLog out;
    try {
      out = k_core_filter(pairs_log(pairs), 4);
    } catch (const EmptyResultError&) {
      continue;
    }
    std::map<std::string, int> ud, id;
    for (const auto& [uu, ii] : pair_set(out)) {
      ++ud[uu];
      ++id[ii];
    }
    for (const auto& [k, d] : ud) EXPECT_GE(d, 4);
    for (const auto& [k, d] : id) EXPECT_GE(d, 4);
  }
}

TEST(KCore, EmptyResultIsAnError) {
  EXPECT_THROW(k_core_filter(pairs_log({{"a", "x"}}), 2), EmptyResultError);
}

TEST(Binarize, RepeatedRecordIsOnePositive) {
  const auto ds = binarize_and_index(pairs_log({{"a", "x"}, {"a", "x"}, {"a", "x"}}));
  EXPECT_EQ(ds.num_users, 1);
  EXPECT_EQ(ds.num_items, 1);
  EXPECT_EQ(ds.positives[0], std::vector<Index>{0});
  EXPECT_EQ(ds.popularity, std::vector<Index>{1});
}

TEST(Binarize, FullyCrossedTwoByTwo) {
  const auto ds = binarize_and_index(pairs_log({{"a", "x"}, {"a", "y"}, {"b", "y"}, {"b", "x"}}));
  EXPECT_EQ(ds.popularity, (std::vector<Index>{2, 2}));
  EXPECT_EQ(ds.num_interactions(), 4u);
  EXPECT_EQ(ds.item_index.at("y"), 1);
  EXPECT_EQ(ds.user_tokens[1], "b");
}

TEST(Binarize, EmptyLogThrows) { EXPECT_THROW(binarize_and_index(RawInteractionLog{}), EmptyResultError); }

TEST(Split, TenPositivesGiveSevenOneTwo) {
  EXPECT_EQ(split_sizes(10), (std::array<std::size_t, 3>{7, 1, 2}));
}

TEST(Split, FivePositivesKeepEveryPartNonEmpty) {
  const auto s = split_sizes(5);
  EXPECT_GE(s[0], 3u);
  EXPECT_LE(s[0], 4u);
  EXPECT_GE(s[1], 1u);
  EXPECT_GE(s[2], 1u);
  EXPECT_EQ(s[0] + s[1] + s[2], 5u);
}

// Floor each share, then hand leftovers out round-robin from train, then
// borrow from train for any empty evaluation part. Recomputed here with
// integer arithmetic for every n up to 2000.
TEST(Split, SizesMatchIntegerOracleByEnumeration) {
  for (std::size_t n = 3; n <= 2000; ++n) {
    std::array<std::size_t, 3> want{n * 70 / 100, n * 10 / 100, n * 20 / 100};
    std::size_t left = n - want[0] - want[1] - want[2];
    for (std::size_t s = 0; left > 0; s = (s + 1) % 3, --left) ++want[s];
    for (std::size_t s = 1; s < 3; ++s)
      if (want[s] == 0) {
        --want[0];
        ++want[s];
      }
    ASSERT_EQ(split_sizes(n), want) << "n=" << n;
  }
}

TEST(Split, FewerThanThreeIsRejected) { EXPECT_THROW(split_sizes(2), Error); }

TEST(Split, PartitionIsDisjointCompleteAndSeeded) {
  const auto data = testing::random_data(30, 80, 17, 5);
  const DataSplit again = split(data.dataset, 5);
  const DataSplit other = split(data.dataset, 6);
  bool differs = false;
  for (Index u = 0; u < data.dataset.num_users; ++u) {
    std::vector<Index> all;
    for (auto* p : {&data.split.train[u], &data.split.validation[u], &data.split.test[u]}) all.insert(all.end(), p->begin(), p->end());
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, data.dataset.positives[u]);
    EXPECT_EQ(data.split.train[u], again.train[u]);
    EXPECT_EQ(data.split.test[u], again.test[u]);
    differs |= data.split.test[u] != other.test[u];
    EXPECT_EQ(data.split.train[u].size(), 12u);
  }
  EXPECT_TRUE(differs);
}

TEST(Snapshot, RoundTripPreservesSplitAndTokens) {
  const auto data = testing::random_data(12, 40, 9, 8);
  const auto dir = testing::scratch_dir("snapshot");
  write_snapshot(dir, data.dataset, data.split);
  const PreparedData back = read_snapshot(dir);
  EXPECT_EQ(back.dataset.num_users, data.dataset.num_users);
  EXPECT_EQ(back.dataset.num_items, data.dataset.num_items);
  EXPECT_EQ(back.split.seed, 8u);
  EXPECT_EQ(back.dataset.positives, data.dataset.positives);
  EXPECT_EQ(back.split.train, data.split.train);
  EXPECT_EQ(back.split.validation, data.split.validation);
  EXPECT_EQ(back.split.test, data.split.test);
  EXPECT_EQ(back.dataset.item_tokens, data.dataset.item_tokens);
  EXPECT_EQ(back.dataset.popularity, data.dataset.popularity);
}

TEST(Snapshot, MalformedRowReportsLine) {
  const auto dir = testing::scratch_dir("snapshot_bad");
  std::ofstream(dir / "interactions.tsv") << "user_index\titem_index\tsplit\n0\t1\ttrain\n0\tx\ttest\n";
  try {
    read_snapshot(dir);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(InteractionMask, MatchesTrainLists) {
  const auto data = testing::random_data(10, 130, 20, 2);
  for (Index u = 0; u < data.dataset.num_users; ++u)
    for (Index i = 0; i < data.dataset.num_items; ++i)
      EXPECT_EQ(data.train_mask.contains(u, i),
                std::binary_search(data.split.train[u].begin(), data.split.train[u].end(), i));
}

}  // namespace
}  // namespace divns
