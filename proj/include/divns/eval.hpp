#ifndef DIVNS_EVAL_HPP
#define DIVNS_EVAL_HPP

#include "divns/dataset.hpp"
#include "divns/dpp.hpp"
#include "divns/model.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>

namespace divns {

struct RankingOptions {
  /// Also drop validation items when ranking for the test split.
  bool exclude_validation_at_test = false;
};

namespace detail {

inline bool score_order(const std::pair<double, Index>& a, const std::pair<double, Index>& b) {
  if (a.first != b.first) return a.first > b.first;
  return a.second < b.second;
}

inline std::vector<std::pair<double, Index>> scored_candidates(const EmbeddingTable& table,
                                                               const PreparedData& data, Index u,
                                                               const std::vector<Index>* also_exclude) {
  const Vector scores = table.items * table.users.row(u).transpose();
  std::vector<std::pair<double, Index>> out;
  out.reserve(static_cast<std::size_t>(table.num_items()));
  for (Index i = 0; i < table.num_items(); ++i) {
    if (data.train_mask.contains(u, i)) continue;
    if (also_exclude && std::binary_search(also_exclude->begin(), also_exclude->end(), i)) continue;
    out.emplace_back(scores(i), i);
  }
  return out;
}

}  // namespace detail

/// Every item except the user's train positives, by descending score.
inline std::vector<Index> rank_items(const EmbeddingTable& table, const PreparedData& data, Index u) {
  auto scored = detail::scored_candidates(table, data, u, nullptr);
  std::sort(scored.begin(), scored.end(), detail::score_order);
  std::vector<Index> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.push_back(s.second);
  return out;
}

/// First `k` entries of rank_items, without sorting the tail.
inline std::vector<Index> top_k_items(const EmbeddingTable& table, const PreparedData& data, Index u,
                                      std::size_t k, const std::vector<Index>* also_exclude = nullptr) {
  auto scored = detail::scored_candidates(table, data, u, also_exclude);
  const std::size_t kk = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(kk), scored.end(),
                    detail::score_order);
  std::vector<Index> out(kk);
  for (std::size_t p = 0; p < kk; ++p) out[p] = scored[p].second;
  return out;
}

/// |top-k ∩ relevant| / |relevant|. `relevant` must be sorted.
inline double recall_at_k(std::span<const Index> ranking, std::span<const Index> relevant, std::size_t k) {
  if (relevant.empty()) throw Error("recall_at_k: empty relevant set");
  std::size_t hits = 0;
  const std::size_t depth = std::min(k, ranking.size());
  for (std::size_t p = 0; p < depth; ++p) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranking[p])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

/// Binary-relevance NDCG with discount 1/log2(rank + 1). `relevant` must be sorted.
inline double ndcg_at_k(std::span<const Index> ranking, std::span<const Index> relevant, std::size_t k) {
  if (relevant.empty()) throw Error("ndcg_at_k: empty relevant set");
  double dcg = 0.0;
  const std::size_t depth = std::min(k, ranking.size());
  for (std::size_t p = 0; p < depth; ++p) {
    if (std::binary_search(relevant.begin(), relevant.end(), ranking[p])) {
      dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, relevant.size());
  for (std::size_t p = 0; p < ideal; ++p) idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

struct PhaseTimings {
  double sampling = 0.0;
  double dpp = 0.0;
  double optimization = 0.0;
  double evaluation = 0.0;

  double training() const { return sampling + dpp + optimization; }
};

struct RankMetrics {
  double ndcg = 0.0;
  double recall = 0.0;
};

struct MetricsReport {
  SplitTag split = SplitTag::kValidation;
  int epoch = 0;
  std::map<std::size_t, RankMetrics> at_k;
  std::size_t users_evaluated = 0;
  PhaseTimings timings;

  double ndcg(std::size_t k) const { return at_k.at(k).ndcg; }
  double recall(std::size_t k) const { return at_k.at(k).recall; }
};

/// Full-ranking metrics averaged over users with at least one relevant item
/// in `split`.
inline MetricsReport evaluate(const EmbeddingTable& table, const PreparedData& data, SplitTag split,
                              std::span<const std::size_t> ks, const RankingOptions& opt = {},
                              unsigned threads = 1) {
  MetricsReport report;
  report.split = split;
  if (ks.empty()) return report;
  const std::size_t depth = *std::max_element(ks.begin(), ks.end());
  const auto& relevant = data.split.part(split);
  const auto nu = static_cast<std::size_t>(data.dataset.num_users);
  std::vector<std::vector<RankMetrics>> per_user(nu);
  std::vector<char> counted(nu, 0);
  parallel_for(nu, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t u = begin; u < end; ++u) {
      if (relevant[u].empty()) continue;
      const std::vector<Index>* extra =
          (split == SplitTag::kTest && opt.exclude_validation_at_test) ? &data.split.validation[u] : nullptr;
      const auto top = top_k_items(table, data, static_cast<Index>(u), depth, extra);
      per_user[u].resize(ks.size());
      for (std::size_t q = 0; q < ks.size(); ++q) {
        per_user[u][q] = {ndcg_at_k(top, relevant[u], ks[q]), recall_at_k(top, relevant[u], ks[q])};
      }
      counted[u] = 1;
    }
  });
  std::vector<RankMetrics> sums(ks.size());
  for (std::size_t u = 0; u < nu; ++u) {
    if (!counted[u]) continue;
    ++report.users_evaluated;
    for (std::size_t q = 0; q < ks.size(); ++q) {
      sums[q].ndcg += per_user[u][q].ndcg;
      sums[q].recall += per_user[u][q].recall;
    }
  }
  const double denom = report.users_evaluated ? static_cast<double>(report.users_evaluated) : 1.0;
  for (std::size_t q = 0; q < ks.size(); ++q) {
    report.at_k[ks[q]] = {sums[q].ndcg / denom, sums[q].recall / denom};
  }
  return report;
}

inline constexpr std::string_view kMetricsSchema = "divns-metrics v1";

/// One row per (epoch, split, k, metric). Timings are kept out so the file
/// is reproducible byte for byte.
inline void write_metrics_header(std::ostream& out) { out << "seed\tepoch\tsplit\tk\tmetric\tvalue\n"; }

inline void write_metrics_rows(std::ostream& out, const MetricsReport& r, std::uint64_t seed) {
  char buf[64];
  for (const auto& [k, m] : r.at_k) {
    std::snprintf(buf, sizeof buf, "%.10f", m.ndcg);
    out << seed << '\t' << r.epoch << '\t' << to_string(r.split) << '\t' << k << "\tndcg\t" << buf << '\n';
    std::snprintf(buf, sizeof buf, "%.10f", m.recall);
    out << seed << '\t' << r.epoch << '\t' << to_string(r.split) << '\t' << k << "\trecall\t" << buf << '\n';
  }
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["split"] = std::string(to_string(r.split));
  j["epoch"] = r.epoch;
  j["users_evaluated"] = r.users_evaluated;
  for (const auto& [k, m] : r.at_k) {
    j["ndcg@" + std::to_string(k)] = m.ndcg;
    j["recall@" + std::to_string(k)] = m.recall;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Diversity diagnostics
// ---------------------------------------------------------------------------

/// One user's DPP selection at one epoch, with a size-matched uniform draw
/// from the same ground set for comparison.
struct DppDiagnostic {
  int epoch = 0;
  Index user = 0;
  std::size_t ground_size = 0;
  std::vector<Index> selected;
  std::vector<Index> uniform;
  std::optional<double> selected_diversity;
  std::optional<double> uniform_diversity;
};

inline void write_dpp_diagnostics(std::ostream& out, std::span<const DppDiagnostic> rows) {
  out << "epoch\tuser\tground\tselected\tdiversity\tuniform_diversity\n";
  char buf[32];
  for (const auto& d : rows) {
    out << d.epoch << '\t' << d.user << '\t' << d.ground_size << '\t' << d.selected.size() << '\t';
    if (d.selected_diversity) {
      std::snprintf(buf, sizeof buf, "%.8f", *d.selected_diversity);
      out << buf;
    } else {
      out << "NA";
    }
    out << '\t';
    if (d.uniform_diversity) {
      std::snprintf(buf, sizeof buf, "%.8f", *d.uniform_diversity);
      out << buf;
    } else {
      out << "NA";
    }
    out << '\n';
  }
}

struct EpochDiversity {
  int epoch = 0;
  std::size_t users = 0;
  std::optional<double> mean_diversity;
  std::optional<double> mean_uniform_diversity;
  std::optional<double> gap;  // selected minus uniform
  std::optional<double> modal_fraction;
  std::optional<double> uniform_modal_fraction;
};

/// Fraction of `items` whose label is the most frequent label among them.
inline std::optional<double> modal_cluster_fraction(std::span<const Index> items, std::span<const int> labels) {
  if (items.empty()) return std::nullopt;
  std::map<int, std::size_t> counts;
  for (Index i : items) ++counts[labels[static_cast<std::size_t>(i)]];
  std::size_t best = 0;
  for (const auto& [label, c] : counts) best = std::max(best, c);
  return static_cast<double>(best) / static_cast<double>(items.size());
}

/// Per-epoch mean diversity of D_u against the matched uniform baseline.
/// `labels` (item -> cluster) enables the concentration statistic.
inline std::vector<EpochDiversity> diversity_report(std::span<const DppDiagnostic> rows,
                                                    std::span<const int> labels = {}) {
  std::map<int, std::vector<const DppDiagnostic*>> by_epoch;
  for (const auto& d : rows) by_epoch[d.epoch].push_back(&d);
  std::vector<EpochDiversity> out;
  for (const auto& [epoch, list] : by_epoch) {
    EpochDiversity e;
    e.epoch = epoch;
    e.users = list.size();
    double sum = 0, usum = 0, msum = 0, umsum = 0;
    std::size_t n = 0, un = 0, mn = 0, umn = 0;
    for (const auto* d : list) {
      if (d->selected_diversity) {
        sum += *d->selected_diversity;
        ++n;
      }
      if (d->uniform_diversity) {
        usum += *d->uniform_diversity;
        ++un;
      }
      if (!labels.empty()) {
        if (auto f = modal_cluster_fraction(d->selected, labels)) {
          msum += *f;
          ++mn;
        }
        if (auto f = modal_cluster_fraction(d->uniform, labels)) {
          umsum += *f;
          ++umn;
        }
      }
    }
    if (n) e.mean_diversity = sum / static_cast<double>(n);
    if (un) e.mean_uniform_diversity = usum / static_cast<double>(un);
    if (e.mean_diversity && e.mean_uniform_diversity) e.gap = *e.mean_diversity - *e.mean_uniform_diversity;
    if (mn) e.modal_fraction = msum / static_cast<double>(mn);
    if (umn) e.uniform_modal_fraction = umsum / static_cast<double>(umn);
    out.push_back(e);
  }
  return out;
}

}  // namespace divns

#endif  // DIVNS_EVAL_HPP
