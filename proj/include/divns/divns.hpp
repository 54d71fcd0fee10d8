#ifndef DIVNS_DIVNS_HPP
#define DIVNS_DIVNS_HPP

#include "divns/dataset.hpp"
#include "divns/dpp.hpp"
#include "divns/eval.hpp"
#include "divns/model.hpp"
#include "divns/sampler.hpp"

#include <chrono>
#include <functional>
#include <iostream>
#include <optional>
#include <span>
#include <string_view>

namespace divns {

enum class SamplerKind { kRns, kPns, kDns, kDivns };
enum class Variant { kFull, kNoSynthesis, kUniformCache, kPlainKdpp };

inline std::string_view to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::kRns: return "rns";
    case SamplerKind::kPns: return "pns";
    case SamplerKind::kDns: return "dns";
    case SamplerKind::kDivns: return "divns";
  }
  return "?";
}

inline SamplerKind parse_sampler(std::string_view s) {
  if (s == "rns") return SamplerKind::kRns;
  if (s == "pns") return SamplerKind::kPns;
  if (s == "dns") return SamplerKind::kDns;
  if (s == "divns") return SamplerKind::kDivns;
  throw Error("unknown sampler: " + std::string(s));
}

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoSynthesis: return "no_synthesis";
    case Variant::kUniformCache: return "uniform_cache";
    case Variant::kPlainKdpp: return "plain_kdpp";
  }
  return "?";
}

inline Variant parse_variant(std::string_view s) {
  if (s == "full") return Variant::kFull;
  if (s == "no_synthesis") return Variant::kNoSynthesis;
  if (s == "uniform_cache") return Variant::kUniformCache;
  if (s == "plain_kdpp") return Variant::kPlainKdpp;
  throw Error("unknown variant: " + std::string(s));
}

/// One concrete training configuration. Grids live in the CLI.
struct DivnsConfig {
  SamplerKind sampler = SamplerKind::kDivns;
  Variant variant = Variant::kFull;
  std::size_t m = 10;
  std::size_t r = 4;
  double lambda = 0.5;
  std::size_t omega = 1;
  int epochs = 200;
  int patience = 10;  // 0 disables early stopping
  std::uint64_t seed = 0;

  int dim = 64;
  std::size_t batch = 2048;
  double learning_rate = 1e-3;
  double l2 = 1e-4;
  double init_stddev = 0.01;
  double pns_beta = 0.75;
  bool clamp_penalty = true;
  RankingOptions ranking{};

  unsigned threads = 1;
  bool diagnostics = false;

  void validate() const {
    if (m < 1) throw Error("config: m must be >= 1");
    if (sampler == SamplerKind::kDivns && r >= m) throw Error("config: cache ratio r must be < m");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("config: lambda must lie in [0, 1]");
    if (omega < 1) throw Error("config: omega must be >= 1");
    if (dim < 1 || batch < 1) throw Error("config: dim and batch must be positive");
    if (epochs < 0) throw Error("config: epochs must be >= 0");
  }

  PoolShape pool_shape() const {
    return PoolShape{m, sampler == SamplerKind::kDivns ? r : 0, omega};
  }

  CacheSampling cache_sampling() const {
    switch (variant) {
      case Variant::kUniformCache: return CacheSampling::kUniform;
      case Variant::kPlainKdpp: return CacheSampling::kPlainDpp;
      default: return CacheSampling::kAugmentedDpp;
    }
  }

  bool synthesizes() const { return sampler == SamplerKind::kDivns && variant != Variant::kNoSynthesis; }
};

/// Scales the first-stage pool to omega*m; hard negatives, cache and D_u
/// grow by the same factor.
inline DivnsConfig apply_sampling_ratio(const DivnsConfig& config, std::size_t omega) {
  if (omega < 1) throw Error("apply_sampling_ratio: omega must be >= 1");
  DivnsConfig out = config;
  out.omega = omega;
  return out;
}

/// lambda * v_hard + (1 - lambda) * v_diverse.
template <typename A, typename B>
Vector mixup(const Eigen::MatrixBase<A>& v_hard, const Eigen::MatrixBase<B>& v_diverse, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("mixup: lambda must lie in [0, 1]");
  if (v_hard.size() != v_diverse.size()) throw Error("mixup: dimension mismatch");
  Vector a = v_hard.derived().reshaped();
  Vector b = v_diverse.derived().reshaped();
  return lambda * a + (1.0 - lambda) * b;
}

/// Caches carried between epochs plus the current epoch's pools.
struct EpochState {
  int epoch = -1;
  std::vector<UserPools> pools;
  std::vector<NegativeCache> previous_caches;
  std::vector<std::vector<Index>> diverse;
};

struct EpochOutput {
  std::vector<TrainingTriplet> triplets;
  PhaseTimings timings;
  std::vector<DppDiagnostic> diagnostics;
  std::size_t fallbacks = 0;
  std::size_t greedy_shortfalls = 0;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

inline std::optional<double> diversity_of(const ItemSnapshot& snap, std::span<const Index> items) {
  if (items.size() < 2) return std::nullopt;
  return diversity(gather_rows(snap.unit_items, items));
}

}  // namespace detail

/// Inner sampling step for epoch t: fresh pools for every user, then (for
/// DivNS with t > 0) diverse selection from last epoch's caches and mixup.
/// Reads the table only; the caller runs the optimizer afterwards.
inline EpochOutput run_epoch(EpochState& state, const EmbeddingTable& table, const PreparedData& data,
                             const DivnsConfig& config, int t, const PopularitySampler* popularity = nullptr) {
  if (t < 0) throw Error("run_epoch: negative epoch");
  const auto nu = static_cast<std::size_t>(data.dataset.num_users);
  EpochOutput out;
  std::vector<std::vector<TrainingTriplet>> parts(nu);
  const bool pooled = config.sampler == SamplerKind::kDns || config.sampler == SamplerKind::kDivns;
  const PoolShape shape = config.pool_shape();
  if (config.sampler == SamplerKind::kPns && popularity == nullptr) {
    throw Error("run_epoch: PNS requires a popularity sampler");
  }

  auto start = detail::Clock::now();
  std::vector<UserPools> pools(pooled ? nu : 0);
  parallel_for(nu, config.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t uu = begin; uu < end; ++uu) {
      const auto u = static_cast<Index>(uu);
      Rng rng = make_stream(config.seed, StreamTag::kPools, static_cast<std::uint64_t>(t), uu);
      auto& dst = parts[uu];
      const auto& train = data.split.train[uu];
      switch (config.sampler) {
        case SamplerKind::kRns:
          for (Index pos : train) {
            const auto cand = sample_candidates(data, u, pos, config.omega, rng);
            for (Index j : cand.items) dst.push_back(TrainingTriplet::single(u, pos, j));
          }
          break;
        case SamplerKind::kPns:
          for (Index pos : train) {
            for (std::size_t w = 0; w < config.omega; ++w) {
              dst.push_back(TrainingTriplet::single(u, pos, pns_select(*popularity, data, u, rng)));
            }
          }
          break;
        case SamplerKind::kDns:
        case SamplerKind::kDivns:
          pools[uu] = build_pools(table, data, u, shape, t, rng);
          break;
      }
    }
  });
  out.timings.sampling = detail::seconds_since(start);

  if (pooled) {
    start = detail::Clock::now();
    const bool diverse_step = config.synthesizes() && t > 0;
    if (diverse_step && state.previous_caches.size() != nu) {
      throw Error("run_epoch: epoch " + std::to_string(t) + " needs caches from epoch " + std::to_string(t - 1));
    }
    std::optional<ItemSnapshot> snapshot;
    if (diverse_step) snapshot = snapshot_items(table, t);
    DiverseOptions dopt;
    dopt.sampling = config.cache_sampling();
    dopt.clamp_penalty = config.clamp_penalty;
    std::vector<std::vector<Index>> diverse(diverse_step ? nu : 0);
    std::vector<std::optional<DppDiagnostic>> diags(config.diagnostics && diverse_step ? nu : 0);
    std::vector<char> fallback(nu, 0), shortfall(nu, 0);

    parallel_for(nu, config.threads, [&](std::size_t begin, std::size_t end) {
      for (std::size_t uu = begin; uu < end; ++uu) {
        const auto u = static_cast<Index>(uu);
        const auto& hard = pools[uu].hard;
        auto& dst = parts[uu];
        dst.reserve(hard.size());
        if (!diverse_step) {
          for (std::size_t h = 0; h < hard.size(); ++h) {
            dst.push_back(TrainingTriplet::single(u, hard.positives[h], hard.items[h]));
          }
          continue;
        }
        const auto& cache = state.previous_caches[uu];
        if (cache.epoch_tag != t - 1) throw Error("run_epoch: stale cache lineage");
        Rng rng = make_stream(config.seed, StreamTag::kDiverse, static_cast<std::uint64_t>(t), uu);
        DiverseSelection sel = select_diverse(*snapshot, data, cache, hard, hard.size(), rng, dopt);
        fallback[uu] = sel.fallback;
        shortfall[uu] = sel.items.size() < hard.size() || sel.filled_from_ground + sel.filled_from_negatives > 0;
        for (std::size_t h = 0; h < hard.size(); ++h) {
          if (sel.items.empty()) {
            dst.push_back(TrainingTriplet::single(u, hard.positives[h], hard.items[h]));
            continue;
          }
          std::uniform_int_distribution<std::size_t> pick(0, sel.items.size() - 1);
          dst.push_back(TrainingTriplet::mixed(u, hard.positives[h], hard.items[h], sel.items[pick(rng)],
                                               config.lambda));
        }
        if (!diags.empty()) {
          DppDiagnostic d;
          d.epoch = t;
          d.user = u;
          d.ground_size = sel.ground_size;
          d.selected = sel.items;
          const GroundSet ground = make_ground_set(*snapshot, cache, hard);
          Rng brng = make_stream(config.seed, StreamTag::kBaseline, static_cast<std::uint64_t>(t), uu);
          std::vector<Index> ids = ground.item_ids;
          const std::size_t take = std::min(ids.size(), sel.items.size());
          for (std::size_t s = 0; s < take; ++s) {
            std::uniform_int_distribution<std::size_t> pick(s, ids.size() - 1);
            std::swap(ids[s], ids[pick(brng)]);
          }
          ids.resize(take);
          d.uniform = std::move(ids);
          d.selected_diversity = detail::diversity_of(*snapshot, d.selected);
          d.uniform_diversity = detail::diversity_of(*snapshot, d.uniform);
          diags[uu] = std::move(d);
        }
        diverse[uu] = std::move(sel.items);
      }
    });
    for (std::size_t u = 0; u < nu; ++u) {
      out.fallbacks += fallback[u];
      out.greedy_shortfalls += shortfall[u];
    }
    for (auto& d : diags) {
      if (d) out.diagnostics.push_back(std::move(*d));
    }
    state.diverse = std::move(diverse);
    state.previous_caches.resize(nu);
    for (std::size_t u = 0; u < nu; ++u) state.previous_caches[u] = std::move(pools[u].cache);
    state.pools = std::move(pools);
    out.timings.dpp = detail::seconds_since(start);
  }
  state.epoch = t;

  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  out.triplets.reserve(total);
  for (auto& p : parts) out.triplets.insert(out.triplets.end(), p.begin(), p.end());
  if (out.fallbacks > 0) {
    std::clog << "[divns] epoch " << t << ": " << out.fallbacks
              << " users had an empty ground set; used uniform negatives\n";
  }
  return out;
}

struct TrainHooks {
  std::function<void(int, std::span<const TrainingTriplet>)> on_triplets;
  std::function<void(const MetricsReport&, double loss)> on_epoch;
};

struct TrainResult {
  EmbeddingTable table;  // best checkpoint by validation NDCG@20
  OptimizerState optimizer;
  int best_epoch = -1;
  int epochs_run = 0;
  std::vector<MetricsReport> validation;
  std::optional<MetricsReport> test;
  std::vector<double> epoch_loss;  // mean pre-step batch objective
  std::vector<PhaseTimings> timings;
  std::vector<DppDiagnostic> diagnostics;
};

inline constexpr std::size_t kSelectionK = 20;
inline constexpr std::array<std::size_t, 2> kDefaultKs{10, 20};

/// Alternates the inner sampling step and the optimizer for up to
/// config.epochs epochs, with early stopping on validation NDCG@20.
inline TrainResult train(const PreparedData& data, const DivnsConfig& config, const TrainHooks& hooks = {}) {
  config.validate();
  TrainResult result;
  result.table = init_embeddings(data.dataset.num_users, data.dataset.num_items, config.dim, config.seed,
                                 config.init_stddev);
  result.optimizer = OptimizerState::for_table(result.table, config.learning_rate, config.l2);
  if (config.epochs == 0) return result;

  EmbeddingTable table = result.table;
  OptimizerState& opt = result.optimizer;
  std::optional<PopularitySampler> popularity;
  if (config.sampler == SamplerKind::kPns) popularity.emplace(data.dataset.popularity, config.pns_beta);

  EpochState state;
  Gradients scratch;
  double best_score = -1.0;
  for (int t = 0; t < config.epochs; ++t) {
    EpochOutput epoch = run_epoch(state, table, data, config, t, popularity ? &*popularity : nullptr);
    if (hooks.on_triplets) hooks.on_triplets(t, epoch.triplets);

    auto start = detail::Clock::now();
    Rng shuffle_rng = make_stream(config.seed, StreamTag::kShuffle, static_cast<std::uint64_t>(t));
    std::shuffle(epoch.triplets.begin(), epoch.triplets.end(), shuffle_rng);
    double loss_sum = 0.0;
    const std::span<const TrainingTriplet> all(epoch.triplets);
    for (std::size_t b = 0; b < all.size(); b += config.batch) {
      const auto batch = all.subspan(b, std::min(config.batch, all.size() - b));
      loss_sum += train_step(table, opt, batch, scratch) * static_cast<double>(batch.size());
    }
    epoch.timings.optimization = detail::seconds_since(start);
    result.epoch_loss.push_back(all.empty() ? 0.0 : loss_sum / static_cast<double>(all.size()));

    start = detail::Clock::now();
    MetricsReport report = evaluate(table, data, SplitTag::kValidation, kDefaultKs, config.ranking, config.threads);
    epoch.timings.evaluation = detail::seconds_since(start);
    report.epoch = t;
    report.timings = epoch.timings;
    result.timings.push_back(epoch.timings);
    result.validation.push_back(report);
    for (auto& d : epoch.diagnostics) result.diagnostics.push_back(std::move(d));
    result.epochs_run = t + 1;
    if (hooks.on_epoch) hooks.on_epoch(report, result.epoch_loss.back());

    const double score = report.ndcg(kSelectionK);
    if (score > best_score) {
      best_score = score;
      result.best_epoch = t;
      result.table = table;
    }
    if (config.patience > 0 && t - result.best_epoch >= config.patience) break;
  }
  MetricsReport test = evaluate(result.table, data, SplitTag::kTest, kDefaultKs, config.ranking, config.threads);
  test.epoch = result.best_epoch;
  result.test = test;
  return result;
}

}  // namespace divns

#endif  // DIVNS_DIVNS_HPP
