#ifndef DIVNS_TESTS_FIXTURES_HPP
#define DIVNS_TESTS_FIXTURES_HPP

// Hand-derived ranking fixtures. D(p) = 1/log2(p + 1) is the discount at
// 1-based rank p; every expected value below was worked out by listing
// the relevant hits and the ideal prefix.

#include "divns/common.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace divns::fixtures {

inline double D(int p) { return 1.0 / std::log2(p + 1.0); }

struct RankingCase {
  std::string name;
  std::vector<Index> ranking;
  std::vector<Index> relevant;  // sorted
  std::size_t k;
  double ndcg;
  double recall;
};

inline std::vector<Index> iota_ranking(Index first, Index count) {
  std::vector<Index> r(static_cast<std::size_t>(count));
  std::iota(r.begin(), r.end(), first);
  return r;
}

inline std::vector<RankingCase> ranking_cases() {
  std::vector<Index> long_list(60);
  std::iota(long_list.begin(), long_list.end(), 100);
  long_list[2] = 3;
  long_list[49] = 50;
  return {
      {"sole_hit_rank1", {7, 1, 2}, {7}, 10, 1.0, 1.0},
      {"sole_hit_rank3", {1, 2, 7}, {7}, 10, 0.5, 1.0},
      {"hit_just_past_k", {1, 2, 7}, {7}, 2, 0.0, 0.0},
      {"ranks_3_and_50_k10", long_list, {3, 50}, 10, D(3) / (D(1) + D(2)), 0.5},
      {"ranks_3_and_50_k50", long_list, {3, 50}, 50, (D(3) + D(50)) / (D(1) + D(2)), 1.0},
      {"ideal_prefix", {4, 5, 6, 1}, {4, 5, 6}, 3, 1.0, 1.0},
      {"ideal_prefix_k_below_relevant", {4, 5, 6, 1}, {4, 5, 6}, 2, 1.0, 2.0 / 3.0},
      {"hits_at_2_and_4", {1, 4, 2, 5}, {4, 5}, 4, (D(2) + D(4)) / (D(1) + D(2)), 1.0},
      {"no_hit", {1, 2, 3}, {9}, 3, 0.0, 0.0},
      {"ranking_shorter_than_k", {9, 8, 7, 6, 5}, {5, 6, 7, 8, 9}, 10, 1.0, 1.0},
      {"hits_at_1_3_5", {9, 1, 8, 2, 7}, {7, 8, 9}, 5, (D(1) + D(3) + D(5)) / (D(1) + D(2) + D(3)), 1.0},
      {"hits_at_1_3_5_k1", {9, 1, 8, 2, 7}, {7, 8, 9}, 1, 1.0, 1.0 / 3.0},
      {"miss_at_k1", {1, 9, 2, 8}, {8, 9}, 1, 0.0, 0.0},
      {"hit_at_2_k2", {1, 9, 2, 8}, {8, 9}, 2, D(2) / (D(1) + D(2)), 0.5},
      {"hit_at_20", iota_ranking(0, 20), {19}, 20, D(20), 1.0},
      {"twenty_relevant_k10", iota_ranking(0, 20), iota_ranking(0, 20), 10, 1.0, 0.5},
      {"three_of_ten_on_top", {5, 3, 1}, iota_ranking(1, 10), 3, 1.0, 0.3},
      {"even_ranks", {2, 4, 6, 8, 10, 12}, {4, 8, 12}, 6, (D(2) + D(4) + D(6)) / (D(1) + D(2) + D(3)), 1.0},
      {"even_ranks_k4", {2, 4, 6, 8, 10, 12}, {4, 8, 12}, 4, (D(2) + D(4)) / (D(1) + D(2) + D(3)), 2.0 / 3.0},
      {"hit_at_11_k10", iota_ranking(11, 11), {21}, 10, 0.0, 0.0},
  };
}

}  // namespace divns::fixtures

#endif  // DIVNS_TESTS_FIXTURES_HPP
