#ifndef DIVNS_SYNTHETIC_HPP
#define DIVNS_SYNTHETIC_HPP

#include "divns/common.hpp"

#include <cmath>
#include <ostream>

namespace divns {

/// Parameters of a clustered latent-factor interaction generator. Defaults
/// give a MovieLens-100K-sized log (943 users, 1682 items, ~100k events).
struct SyntheticSpec {
  int num_users = 943;
  int num_items = 1682;
  std::size_t target_interactions = 100000;
  int min_per_user = 20;
  int max_per_user = 737;
  int clusters = 18;
  int latent_dim = 16;
  double item_spread = 0.6;       // within-cluster noise
  double user_spread = 0.5;
  int user_topics = 2;            // preferred clusters per user
  double affinity = 6.0;          // logit weight of the latent match
  double popularity_weight = 2.2; // logit weight of log item popularity
  double activity_sigma = 0.9;    // lognormal spread of user activity
};

/// Writes "user item rating timestamp" lines (tab separated) drawn from the
/// generator. Items are chosen per user without replacement by Gumbel top-k
/// over affinity + popularity logits.
inline void generate_synthetic_log(std::ostream& out, const SyntheticSpec& spec, std::uint64_t seed) {
  Rng rng = make_stream(seed, StreamTag::kSynthetic);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int d = spec.latent_dim;

  Matrix centers(spec.clusters, d);
  for (int c = 0; c < spec.clusters; ++c) {
    for (int j = 0; j < d; ++j) centers(c, j) = normal(rng);
    centers.row(c).normalize();
  }
  // Unequal cluster sizes: weights ~ 1/(rank+1).
  std::vector<double> cluster_weight(static_cast<std::size_t>(spec.clusters));
  for (int c = 0; c < spec.clusters; ++c) cluster_weight[c] = 1.0 / (c + 1.0);
  std::discrete_distribution<int> pick_cluster(cluster_weight.begin(), cluster_weight.end());

  Matrix items(spec.num_items, d);
  std::vector<double> item_bias(static_cast<std::size_t>(spec.num_items));
  const double ispread = spec.item_spread / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < spec.num_items; ++i) {
    const int c = pick_cluster(rng);
    for (int j = 0; j < d; ++j) items(i, j) = centers(c, j) + ispread * normal(rng);
    items.row(i).normalize();
    item_bias[i] = spec.popularity_weight * normal(rng);
  }

  std::vector<double> activity(static_cast<std::size_t>(spec.num_users));
  double total = 0.0;
  for (auto& a : activity) {
    a = std::exp(spec.activity_sigma * normal(rng));
    total += a;
  }
  const double scale = static_cast<double>(spec.target_interactions) / total;

  const double uspread = spec.user_spread / std::sqrt(static_cast<double>(d));
  std::uniform_int_distribution<int> any_cluster(0, spec.clusters - 1);
  std::uniform_int_distribution<int> rating(1, 5);
  std::int64_t clock = 874724710;
  std::vector<std::pair<double, int>> keys(static_cast<std::size_t>(spec.num_items));
  for (int u = 0; u < spec.num_users; ++u) {
    Vector pref = Vector::Zero(d);
    for (int k = 0; k < spec.user_topics; ++k) pref += unif(rng) * centers.row(any_cluster(rng)).transpose();
    for (int j = 0; j < d; ++j) pref(j) += uspread * normal(rng);
    pref.normalize();
    const int count = std::clamp(static_cast<int>(std::lround(activity[u] * scale)), spec.min_per_user,
                                 std::min(spec.max_per_user, spec.num_items));
    for (int i = 0; i < spec.num_items; ++i) {
      const double logit = spec.affinity * items.row(i).dot(pref) + item_bias[i];
      const double gumbel = -std::log(-std::log(std::max(unif(rng), 1e-300)));
      keys[i] = {logit + gumbel, i};
    }
    std::partial_sort(keys.begin(), keys.begin() + count, keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int p = 0; p < count; ++p) {
      clock += 1 + static_cast<std::int64_t>(unif(rng) * 600);
      out << (u + 1) << '\t' << (keys[p].second + 1) << '\t' << rating(rng) << '\t' << clock << '\n';
    }
  }
}

}  // namespace divns

#endif  // DIVNS_SYNTHETIC_HPP
