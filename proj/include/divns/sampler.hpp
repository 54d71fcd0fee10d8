#ifndef DIVNS_SAMPLER_HPP
#define DIVNS_SAMPLER_HPP

#include "divns/dataset.hpp"
#include "divns/model.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <span>

namespace divns {

/// Uniform candidate negatives for one (user, positive) pair.
struct CandidateSet {
  Index user = 0;
  Index positive = 0;
  std::vector<Index> items;
};

inline std::size_t num_eligible_negatives(const PreparedData& data, Index u) {
  return static_cast<std::size_t>(data.dataset.num_items) - data.split.train[u].size();
}

/// Draws m distinct items uniformly from the user's non-train-positive items.
inline CandidateSet sample_candidates(const PreparedData& data, Index u, Index positive,
                                      std::size_t m, Rng& rng) {
  const std::size_t eligible = num_eligible_negatives(data, u);
  if (m > eligible) {
    throw Error("sample_candidates: m=" + std::to_string(m) + " exceeds " +
                std::to_string(eligible) + " eligible negatives for user " + std::to_string(u));
  }
  CandidateSet out{u, positive, {}};
  out.items.reserve(m);
  const Index n = data.dataset.num_items;
  if (2 * m <= eligible) {
    std::uniform_int_distribution<Index> pick(0, n - 1);
    while (out.items.size() < m) {
      const Index j = pick(rng);
      if (data.train_mask.contains(u, j)) continue;
      if (std::find(out.items.begin(), out.items.end(), j) != out.items.end()) continue;
      out.items.push_back(j);
    }
  } else {
    // Dense regime: partial Fisher-Yates over the explicit eligible list.
    std::vector<Index> pool;
    pool.reserve(eligible);
    for (Index j = 0; j < n; ++j) {
      if (!data.train_mask.contains(u, j)) pool.push_back(j);
    }
    for (std::size_t s = 0; s < m; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, pool.size() - 1);
      std::swap(pool[s], pool[pick(rng)]);
      out.items.push_back(pool[s]);
    }
  }
  return out;
}

inline Index rns_select(const CandidateSet& candidates, Rng& rng) {
  if (candidates.items.empty()) throw Error("rns_select: empty candidate set");
  std::uniform_int_distribution<std::size_t> pick(0, candidates.items.size() - 1);
  return candidates.items[pick(rng)];
}

/// Popularity-proportional sampler over the whole catalogue, p(i) ~ pop(i)^beta.
/// Restriction to I_u^- is done by rejection, which leaves the conditional
/// distribution exact.
class PopularitySampler {
 public:
  PopularitySampler(const std::vector<Index>& popularity, double beta) : beta_(beta) {
    std::vector<double> w(popularity.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] = popularity[i] > 0 ? std::pow(static_cast<double>(popularity[i]), beta) : 0.0;
    }
    weights_ = w;
    dist_ = std::discrete_distribution<Index>(w.begin(), w.end());
  }

  double beta() const { return beta_; }
  const std::vector<double>& weights() const { return weights_; }

  Index draw(const PreparedData& data, Index u, Rng& rng) const {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      const Index j = dist_(rng);
      if (!data.train_mask.contains(u, j)) return j;
    }
    // Heavy users can make rejection slow; fall back to an explicit draw.
    std::vector<double> w(weights_.size(), 0.0);
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (!data.train_mask.contains(u, static_cast<Index>(j))) w[j] = weights_[j];
    }
    std::discrete_distribution<Index> restricted(w.begin(), w.end());
    return restricted(rng);
  }

 private:
  double beta_;
  std::vector<double> weights_;
  mutable std::discrete_distribution<Index> dist_;
};

inline Index pns_select(const PopularitySampler& sampler, const PreparedData& data, Index u, Rng& rng) {
  if (num_eligible_negatives(data, u) == 0) throw Error("pns_select: user has no negatives");
  return sampler.draw(data, u, rng);
}

struct ScoredItem {
  Index item = 0;
  double score = 0.0;
};

struct DnsResult {
  Index hard = 0;
  std::vector<ScoredItem> ranked;  // descending score, ties by lowest item index
};

inline void rank_by_score(std::vector<ScoredItem>& items) {
  std::sort(items.begin(), items.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item < b.item;
  });
}

inline DnsResult dns_select(const EmbeddingTable& table, Index u, const CandidateSet& candidates) {
  if (candidates.items.empty()) throw Error("dns_select: empty candidate set");
  DnsResult out;
  out.ranked.reserve(candidates.items.size());
  const auto user = table.users.row(u);
  for (Index j : candidates.items) out.ranked.push_back({j, user.dot(table.items.row(j))});
  rank_by_score(out.ranked);
  out.hard = out.ranked.front().item;
  return out;
}

/// Hard negatives of one user, `per_positive` entries for every train positive.
struct HardNegativeSet {
  Index user = 0;
  int epoch_tag = 0;
  std::vector<Index> positives;  // owning positive of each entry
  std::vector<Index> items;

  std::size_t size() const { return items.size(); }
};

struct NegativeCache {
  Index user = 0;
  int epoch_tag = -1;
  std::vector<ScoredItem> entries;

  std::size_t size() const { return entries.size(); }
};

struct UserPools {
  HardNegativeSet hard;
  NegativeCache cache;
};

/// Pool sizes for a first-stage size m, cache ratio r and sampling ratio omega.
struct PoolShape {
  std::size_t m = 10;
  std::size_t r = 4;
  std::size_t omega = 1;

  std::size_t candidates() const { return omega * m; }
  std::size_t hard_per_positive() const { return omega; }
  std::size_t cached_per_positive() const { return omega * r; }
};

/// For every train positive: draw omega*m candidates, keep the top omega as
/// hard negatives and the next omega*r as cache entries.
inline UserPools build_pools(const EmbeddingTable& table, const PreparedData& data, Index u,
                             const PoolShape& shape, int epoch, Rng& rng) {
  if (shape.r >= shape.m) throw Error("build_pools: cache ratio r must be < m");
  if (shape.omega < 1) throw Error("build_pools: omega must be >= 1");
  UserPools out;
  out.hard.user = u;
  out.hard.epoch_tag = epoch;
  out.cache.user = u;
  out.cache.epoch_tag = epoch;
  const auto& train = data.split.train[u];
  out.hard.items.reserve(train.size() * shape.hard_per_positive());
  out.hard.positives.reserve(train.size() * shape.hard_per_positive());
  out.cache.entries.reserve(train.size() * shape.cached_per_positive());
  for (Index pos : train) {
    const CandidateSet cand = sample_candidates(data, u, pos, shape.candidates(), rng);
    const DnsResult ranked = dns_select(table, u, cand);
    for (std::size_t h = 0; h < shape.hard_per_positive(); ++h) {
      out.hard.items.push_back(ranked.ranked[h].item);
      out.hard.positives.push_back(pos);
    }
    const std::size_t first = shape.hard_per_positive();
    for (std::size_t c = 0; c < shape.cached_per_positive(); ++c) {
      out.cache.entries.push_back(ranked.ranked[first + c]);
    }
  }
  return out;
}

inline UserPools build_pools(const EmbeddingTable& table, const PreparedData& data, Index u,
                             std::size_t m, std::size_t r, Rng& rng) {
  return build_pools(table, data, u, PoolShape{m, r, 1}, 0, rng);
}

/// Debug dump, one row per (user, positive): hard and cached items are
/// comma-joined.
inline void write_pools(std::ostream& out, std::span<const UserPools> pools, const PoolShape& shape) {
  out << "user\tpositive\thard\tcached\n";
  const std::size_t hpp = shape.hard_per_positive();
  const std::size_t cpp = shape.cached_per_positive();
  for (const auto& p : pools) {
    const std::size_t groups = hpp == 0 ? 0 : p.hard.items.size() / hpp;
    for (std::size_t g = 0; g < groups; ++g) {
      out << p.hard.user << '\t' << p.hard.positives[g * hpp] << '\t';
      for (std::size_t h = 0; h < hpp; ++h) out << (h ? "," : "") << p.hard.items[g * hpp + h];
      out << '\t';
      for (std::size_t c = 0; c < cpp && g * cpp + c < p.cache.size(); ++c) {
        out << (c ? "," : "") << p.cache.entries[g * cpp + c].item;
      }
      out << '\n';
    }
  }
}

}  // namespace divns

#endif  // DIVNS_SAMPLER_HPP
