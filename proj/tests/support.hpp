#ifndef DIVNS_TESTS_SUPPORT_HPP
#define DIVNS_TESTS_SUPPORT_HPP

#include "divns/dataset.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace divns::testing {

/// Dataset with explicit per-user splits; positives are their union.
inline PreparedData make_data(Index num_items, std::vector<std::vector<Index>> train,
                              std::vector<std::vector<Index>> validation = {},
                              std::vector<std::vector<Index>> test = {}) {
  const auto nu = train.size();
  validation.resize(nu);
  test.resize(nu);
  ImplicitDataset ds;
  ds.num_users = static_cast<Index>(nu);
  ds.num_items = num_items;
  ds.positives.resize(nu);
  for (std::size_t u = 0; u < nu; ++u) {
    for (auto* part : {&train[u], &validation[u], &test[u]}) {
      std::sort(part->begin(), part->end());
      ds.positives[u].insert(ds.positives[u].end(), part->begin(), part->end());
    }
    std::sort(ds.positives[u].begin(), ds.positives[u].end());
  }
  ds.popularity = compute_popularity(ds.positives, num_items);
  DataSplit sp;
  sp.train = std::move(train);
  sp.validation = std::move(validation);
  sp.test = std::move(test);
  return PreparedData(std::move(ds), std::move(sp));
}

/// Every user holds `per_user` distinct uniform items, split by the library.
inline PreparedData random_data(Index users, Index items, std::size_t per_user, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RawInteractionLog log;
  for (Index u = 0; u < users; ++u) {
    std::vector<Index> ids(static_cast<std::size_t>(items));
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t p = 0; p < per_user; ++p) log.records.push_back({"u" + std::to_string(u), "i" + std::to_string(ids[p]), {}, {}});
  }
  ImplicitDataset ds = binarize_and_index(log);
  DataSplit sp = split(ds, seed);
  return PreparedData(std::move(ds), std::move(sp));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("divns_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace divns::testing

#endif  // DIVNS_TESTS_SUPPORT_HPP
