#ifndef DIVNS_DPP_HPP
#define DIVNS_DPP_HPP

#include "divns/dataset.hpp"
#include "divns/model.hpp"
#include "divns/sampler.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <unordered_set>

namespace divns {

/// 1 - mean pairwise inner product over ordered pairs of (unit) rows.
template <typename Derived>
double diversity(const Eigen::MatrixBase<Derived>& rows) {
  const Eigen::Index m = rows.rows();
  if (m < 2) throw Error("diversity: need at least 2 vectors");
  // sum_{i != j} <v_i, v_j> = ||sum v||^2 - sum ||v||^2
  const Vector total = rows.colwise().sum().transpose();
  const double off_diagonal = total.squaredNorm() - rows.rowwise().squaredNorm().sum();
  return 1.0 - off_diagonal / static_cast<double>(m * (m - 1));
}

inline Matrix gather_rows(const Matrix& source, std::span<const Index> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), source.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = source.row(ids[k]);
  return out;
}

/// Deduplicated cache items with the current hard negatives removed.
struct GroundSet {
  std::vector<Index> item_ids;
  Matrix vectors;  // unit rows from the item snapshot

  std::size_t size() const { return item_ids.size(); }
};

/// Distinct cache items in first-appearance order, hard negatives removed.
inline std::vector<Index> ground_item_ids(Index num_items, const NegativeCache& cache, const HardNegativeSet& hard) {
  std::vector<char> excluded(static_cast<std::size_t>(num_items), 0);
  for (Index h : hard.items) excluded[static_cast<std::size_t>(h)] = 1;
  std::vector<Index> ids;
  ids.reserve(cache.size());
  for (const auto& e : cache.entries) {
    auto& seen = excluded[static_cast<std::size_t>(e.item)];
    if (!seen) {
      seen = 1;
      ids.push_back(e.item);
    }
  }
  return ids;
}

inline GroundSet make_ground_set(const ItemSnapshot& snapshot, const NegativeCache& cache,
                                 const HardNegativeSet& hard) {
  GroundSet g;
  g.item_ids = ground_item_ids(static_cast<Index>(snapshot.unit_items.rows()), cache, hard);
  g.vectors = gather_rows(snapshot.unit_items, g.item_ids);
  return g;
}

inline GroundSet make_ground_set(const Matrix& unit_vectors) {
  GroundSet g;
  g.item_ids.resize(static_cast<std::size_t>(unit_vectors.rows()));
  std::iota(g.item_ids.begin(), g.item_ids.end(), Index{0});
  g.vectors = unit_vectors;
  return g;
}

/// q_i = 1 - mean cosine between ground item i and the hard negatives,
/// clamped to [0, 1] unless `clamp` is false.
inline Vector penalty_vector(const Matrix& ground_vectors, const Matrix& hard_vectors, bool clamp = true) {
  if (hard_vectors.rows() == 0) throw Error("penalty_vector: empty hard-negative set");
  Vector hard_sum = Vector::Zero(hard_vectors.cols());
  for (Eigen::Index a = 0; a < hard_vectors.rows(); ++a) {
    const double n = hard_vectors.row(a).norm();
    if (n > 0) hard_sum += hard_vectors.row(a).transpose() / n;
  }
  const double inv_h = 1.0 / static_cast<double>(hard_vectors.rows());
  Vector q(ground_vectors.rows());
  for (Eigen::Index i = 0; i < ground_vectors.rows(); ++i) {
    const double n = ground_vectors.row(i).norm();
    const double mean_cos = n > 0 ? ground_vectors.row(i).dot(hard_sum.transpose()) * inv_h / n : 0.0;
    q(i) = 1.0 - mean_cos;
    if (clamp) q(i) = std::clamp(q(i), 0.0, 1.0);
  }
  return q;
}

/// Explicit diversity-augmented kernel diag(q) V V^T diag(q).
struct AugmentedKernel {
  Matrix entries;

  Eigen::Index size() const { return entries.rows(); }
};

inline AugmentedKernel augmented_kernel(const Matrix& unit_vectors, const Vector& q) {
  if (q.size() != unit_vectors.rows()) throw Error("augmented_kernel: dimension mismatch");
  const Matrix scaled = q.asDiagonal() * unit_vectors;
  return {scaled * scaled.transpose()};
}

inline AugmentedKernel augmented_kernel(const GroundSet& ground, const Vector& q) {
  return augmented_kernel(ground.vectors, q);
}

// ---------------------------------------------------------------------------
// Greedy MAP inference
// ---------------------------------------------------------------------------

/// Kernel given element-wise.
class ExplicitKernelRows {
 public:
  explicit ExplicitKernelRows(const Matrix& kernel) : kernel_(kernel) {}
  Eigen::Index size() const { return kernel_.rows(); }
  double diagonal(Eigen::Index i) const { return kernel_(i, i); }
  void row(Eigen::Index j, Vector& out) const { out = kernel_.row(j).transpose(); }
  Eigen::Index rank_bound() const { return kernel_.rows(); }

 private:
  const Matrix& kernel_;
};

/// Kernel B B^T given by its factor B (n x d); rows are formed on demand,
/// so the n x n matrix is never materialized.
class FactoredKernelRows {
 public:
  template <typename Derived>
  explicit FactoredKernelRows(const Eigen::MatrixBase<Derived>& factor) : factor_(factor) {}
  explicit FactoredKernelRows(Matrix&& factor) : factor_(std::move(factor)) {}
  Eigen::Index size() const { return factor_.rows(); }
  double diagonal(Eigen::Index i) const { return factor_.row(i).squaredNorm(); }
  void row(Eigen::Index j, Vector& out) const { out.noalias() = factor_ * factor_.row(j).transpose(); }
  Eigen::Index rank_bound() const { return factor_.cols(); }
  const Matrix& factor() const { return factor_; }

 private:
  Matrix factor_;
};

struct GreedyOptions {
  /// Added to the diagonal before the incremental factorization.
  double jitter = 1e-10;
  /// Stop when the best remaining conditional variance, net of the jitter,
  /// is at most this value.
  double min_gain = 1e-9;
};

struct GreedyResult {
  std::vector<Eigen::Index> selected;
  /// Conditional variance det(L_{S+j}) / det(L_S) at each pick, jitter included.
  std::vector<double> gains;
};

/// Greedy MAP for a k-DPP: repeatedly adds the element with the largest
/// conditional variance (marginal determinant gain), maintained through
/// incremental Cholesky rows. Per step O(n * (row cost + |S|)). Ties go to
/// the lowest index; stops early once every remaining gain is numerically
/// zero.
template <typename KernelRows>
GreedyResult greedy_map(const KernelRows& kernel, std::size_t k, const GreedyOptions& opt = {}) {
  const Eigen::Index n = kernel.size();
  if (n == 0) throw Error("greedy_map: empty ground set");
  if (k < 1) throw Error("greedy_map: k must be >= 1");
  // Past the kernel's rank every residual is jitter-level, so the loop
  // would stop there anyway; the cap only bounds the factor storage.
  const auto steps = std::min({static_cast<Eigen::Index>(std::min<std::size_t>(k, static_cast<std::size_t>(n))),
                               kernel.rank_bound()});

  Vector residual(n);
  for (Eigen::Index i = 0; i < n; ++i) residual(i) = kernel.diagonal(i) + opt.jitter;
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  Eigen::MatrixXd chol(n, steps);  // column t holds the t-th Cholesky column
  Vector row(n), cj(steps);

  GreedyResult out;
  out.selected.reserve(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    Eigen::Index best = -1;
    double best_val = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!taken[i] && residual(i) > best_val) {
        best_val = residual(i);
        best = i;
      }
    }
    if (best < 0 || best_val - opt.jitter <= opt.min_gain) break;
    taken[best] = 1;
    out.selected.push_back(best);
    out.gains.push_back(best_val);
    if (t + 1 == steps) break;

    kernel.row(best, row);
    const double inv_d = 1.0 / std::sqrt(best_val);
    auto col = chol.col(t);
    if (t > 0) {
      cj.head(t) = chol.row(best).head(t).transpose();
      col.noalias() = row - chol.leftCols(t) * cj.head(t);
      col *= inv_d;
    } else {
      col = row * inv_d;
    }
    residual.array() -= col.array().square();
  }
  return out;
}

namespace detail {

// Greedy MAP on B B^T. The Cholesky column of pick t equals B u_t, where u_t
// is the unit residual of b_t against the span of earlier picks, so a step
// costs O(n d + d t). D fixes the row width at compile time when known.
template <int D>
GreedyResult greedy_factored(const Matrix& B, std::size_t k, const GreedyOptions& opt) {
  const Eigen::Index n = B.rows();
  const Eigen::Index d = B.cols();
  const auto steps = std::min({static_cast<Eigen::Index>(std::min<std::size_t>(k, static_cast<std::size_t>(n))), d});
  constexpr double kTaken = -std::numeric_limits<double>::infinity();
  using Row = Eigen::Matrix<double, 1, D>;
  using Block = Eigen::Matrix<double, 4, D, Eigen::RowMajor>;

  // Selected items carry -inf so the argmax needs no separate mask.
  Vector residual = B.rowwise().squaredNorm().array() + opt.jitter;
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (residual(i) > residual(best)) best = i;
  }
  Eigen::MatrixXd basis(d, steps);
  Eigen::Matrix<double, D, 1> u(d);
  Vector proj(steps);

  GreedyResult out;
  out.selected.reserve(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    const double best_val = residual(best);
    if (best_val - opt.jitter <= opt.min_gain) break;
    out.selected.push_back(best);
    out.gains.push_back(best_val);
    residual(best) = kTaken;
    if (t + 1 == steps) break;

    u = B.row(best).transpose();
    // Two Gram-Schmidt passes keep the basis orthonormal to working precision.
    for (int pass = 0; pass < 2 && t > 0; ++pass) {
      proj.head(t).noalias() = basis.leftCols(t).transpose() * u;
      u.noalias() -= basis.leftCols(t) * proj.head(t);
    }
    const double norm = u.norm();
    if (!(norm > 0.0)) break;
    u /= norm;
    basis.col(t) = u;

    // residual_i -= <b_i, u>^2, fused with the next argmax.
    double next_val = kTaken;
    const double* data = B.data();
    auto update = [&](Eigen::Index i, double c) {
      residual(i) -= c * c;
      if (residual(i) > next_val) {
        next_val = residual(i);
        best = i;
      }
    };
    Eigen::Index i = 0;
    for (; i + 4 <= n; i += 4) {
      const Eigen::Vector4d c = Eigen::Map<const Block>(data + i * d, 4, d) * u;
      for (int a = 0; a < 4; ++a) update(i + a, c(a));
    }
    for (; i < n; ++i) update(i, Eigen::Map<const Row>(data + i * d, 1, d).dot(u.transpose()));
    if (next_val == kTaken) break;  // every item selected
  }
  return out;
}

}  // namespace detail

/// Same selection rule as the generic version, specialised to B B^T.
inline GreedyResult greedy_map(const FactoredKernelRows& kernel, std::size_t k, const GreedyOptions& opt = {}) {
  const Matrix& B = kernel.factor();
  if (B.rows() == 0) throw Error("greedy_map: empty ground set");
  if (k < 1) throw Error("greedy_map: k must be >= 1");
  switch (B.cols()) {
    case 16: return detail::greedy_factored<16>(B, k, opt);
    case 32: return detail::greedy_factored<32>(B, k, opt);
    case 64: return detail::greedy_factored<64>(B, k, opt);
    default: return detail::greedy_factored<Eigen::Dynamic>(B, k, opt);
  }
}

inline GreedyResult greedy_map_kdpp(const AugmentedKernel& kernel, std::size_t k,
                                    const GreedyOptions& opt = {}) {
  return greedy_map(ExplicitKernelRows(kernel.entries), k, opt);
}

namespace detail {

inline double determinant_of(const Matrix& kernel, std::span<const Eigen::Index> subset) {
  const auto s = static_cast<Eigen::Index>(subset.size());
  if (s == 0) return 1.0;
  Eigen::MatrixXd sub(s, s);
  for (Eigen::Index a = 0; a < s; ++a)
    for (Eigen::Index b = 0; b < s; ++b) sub(a, b) = kernel(subset[a], subset[b]);
  return sub.partialPivLu().determinant();
}

inline double binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace detail

inline double subset_determinant(const Matrix& kernel, std::span<const Eigen::Index> subset) {
  return detail::determinant_of(kernel, subset);
}

struct ExhaustiveResult {
  std::vector<Eigen::Index> subset;
  double determinant = 0.0;
};

/// Brute-force MAP: the k-subset with the largest determinant, ties broken
/// by lexicographic order. Intended for testing on small instances.
inline ExhaustiveResult exhaustive_map_oracle(const AugmentedKernel& kernel, std::size_t k) {
  const auto n = static_cast<std::size_t>(kernel.size());
  if (k < 1 || k > n) throw Error("exhaustive_map_oracle: need 1 <= k <= n");
  if (detail::binomial(n, k) > 1e6) throw Error("exhaustive_map_oracle: instance too large");
  std::vector<Eigen::Index> idx(k);
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  ExhaustiveResult best;
  best.determinant = -std::numeric_limits<double>::infinity();
  while (true) {
    const double det = detail::determinant_of(kernel.entries, idx);
    if (det > best.determinant) {
      best.determinant = det;
      best.subset = idx;
    }
    // next combination in lexicographic order
    std::size_t pos = k;
    while (pos > 0 && idx[pos - 1] == static_cast<Eigen::Index>(n - k + pos - 1)) --pos;
    if (pos == 0) break;
    ++idx[pos - 1];
    for (std::size_t p = pos; p < k; ++p) idx[p] = idx[p - 1] + 1;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Per-user diverse selection
// ---------------------------------------------------------------------------

enum class CacheSampling {
  kAugmentedDpp,  // greedy MAP on the penalty-scaled kernel
  kPlainDpp,      // greedy MAP with q = 1
  kUniform,       // uniform subset of the ground set
};

struct DiverseOptions {
  CacheSampling sampling = CacheSampling::kAugmentedDpp;
  bool clamp_penalty = true;
  GreedyOptions greedy{};
};

struct DiverseSelection {
  std::vector<Index> items;
  std::size_t ground_size = 0;
  std::size_t greedy_picks = 0;
  std::size_t filled_from_ground = 0;
  std::size_t filled_from_negatives = 0;
  bool fallback = false;  // ground set was empty
};

namespace detail {

/// Uniform non-train-positive items outside `exclude`, distinct where possible.
inline void fill_from_negatives(const PreparedData& data, Index u, std::size_t count,
                                std::unordered_set<Index>& exclude, std::vector<Index>& out, Rng& rng) {
  const Index n = data.dataset.num_items;
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::size_t added = 0;
  const std::size_t max_attempts = 64 * (count + 1) + static_cast<std::size_t>(n);
  for (std::size_t attempt = 0; added < count && attempt < max_attempts; ++attempt) {
    const Index j = pick(rng);
    if (data.train_mask.contains(u, j) || exclude.count(j)) continue;
    exclude.insert(j);
    out.push_back(j);
    ++added;
  }
}

}  // namespace detail

/// D_u for one user: greedy k-DPP over (previous cache minus current hard
/// negatives), k = |H_u|. Short selections are padded with uniform picks
/// from the unselected ground set, then from the user's negatives.
inline DiverseSelection select_diverse(const ItemSnapshot& snapshot, const PreparedData& data,
                                       const NegativeCache& cache, const HardNegativeSet& hard,
                                       std::size_t k, Rng& rng, const DiverseOptions& opt = {}) {
  DiverseSelection out;
  if (k == 0) return out;
  const std::vector<Index> ground = ground_item_ids(static_cast<Index>(snapshot.unit_items.rows()), cache, hard);
  out.ground_size = ground.size();
  std::unordered_set<Index> used(hard.items.begin(), hard.items.end());

  if (ground.empty()) {
    out.fallback = true;
    detail::fill_from_negatives(data, hard.user, k, used, out.items, rng);
    out.filled_from_negatives = out.items.size();
    return out;
  }

  std::vector<char> chosen(ground.size(), 0);
  if (opt.sampling == CacheSampling::kUniform) {
    std::vector<std::size_t> order(ground.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(k, ground.size());
    for (std::size_t s = 0; s < take; ++s) {
      std::uniform_int_distribution<std::size_t> pick(s, order.size() - 1);
      std::swap(order[s], order[pick(rng)]);
      chosen[order[s]] = 1;
      out.items.push_back(ground[order[s]]);
    }
    out.filled_from_ground = take;
  } else {
    // Rows of diag(q) V, built in one pass over the snapshot (q = 1 for the
    // plain kernel). Snapshot rows are unit, so cosines are dot products.
    Matrix factor = gather_rows(snapshot.unit_items, ground);
    if (opt.sampling == CacheSampling::kAugmentedDpp) {
      if (hard.items.empty()) throw Error("select_diverse: empty hard-negative set");
      Vector hard_mean = Vector::Zero(factor.cols());
      for (Index h : hard.items) hard_mean += snapshot.unit_items.row(h).transpose();
      hard_mean /= static_cast<double>(hard.items.size());
      for (Eigen::Index g = 0; g < factor.rows(); ++g) {
        double q = 1.0 - factor.row(g).dot(hard_mean.transpose());
        if (opt.clamp_penalty) q = std::clamp(q, 0.0, 1.0);
        factor.row(g) *= q;
      }
    }
    const GreedyResult greedy = greedy_map(FactoredKernelRows(std::move(factor)), k, opt.greedy);
    for (auto idx : greedy.selected) {
      chosen[static_cast<std::size_t>(idx)] = 1;
      out.items.push_back(ground[static_cast<std::size_t>(idx)]);
    }
    out.greedy_picks = greedy.selected.size();
    if (out.items.size() < k) {
      std::vector<std::size_t> rest;
      for (std::size_t g = 0; g < ground.size(); ++g) {
        if (!chosen[g]) rest.push_back(g);
      }
      const std::size_t take = std::min(k - out.items.size(), rest.size());
      for (std::size_t s = 0; s < take; ++s) {
        std::uniform_int_distribution<std::size_t> pick(s, rest.size() - 1);
        std::swap(rest[s], rest[pick(rng)]);
        out.items.push_back(ground[rest[s]]);
      }
      out.filled_from_ground = take;
    }
  }
  if (out.items.size() < k) {
    for (Index j : out.items) used.insert(j);
    const std::size_t before = out.items.size();
    detail::fill_from_negatives(data, hard.user, k - out.items.size(), used, out.items, rng);
    out.filled_from_negatives = out.items.size() - before;
  }
  return out;
}

}  // namespace divns

#endif  // DIVNS_DPP_HPP
