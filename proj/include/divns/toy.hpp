#ifndef DIVNS_TOY_HPP
#define DIVNS_TOY_HPP

#include "divns/dpp.hpp"
#include "divns/eval.hpp"

#include <ostream>

namespace divns {

/// Gaussian-mixture item embeddings on the unit sphere, with a 2-D
/// principal-component projection for plotting.
struct ClusteredEmbeddings {
  Matrix unit;
  std::vector<int> labels;
  Matrix coords;  // n x 2
};

struct ToyOptions {
  int clusters = 3;
  int items_per_cluster = 20;
  int dim = 16;
  double spread = 0.35;  // noise scale relative to the unit cluster center
  std::size_t k = 15;
};

inline Matrix principal_plane(const Matrix& rows) {
  Matrix centered = rows.rowwise() - rows.colwise().mean();
  if (rows.cols() <= 2) {
    Matrix out = Matrix::Zero(rows.rows(), 2);
    out.leftCols(rows.cols()) = centered;
    return out;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  return centered * svd.matrixV().leftCols(2);
}

inline ClusteredEmbeddings make_clustered_embeddings(const ToyOptions& opt, std::uint64_t seed) {
  if (opt.clusters < 1 || opt.items_per_cluster < 1 || opt.dim < 1) throw Error("toy: sizes must be positive");
  Rng rng = make_stream(seed, StreamTag::kToy);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix centers(opt.clusters, opt.dim);
  for (int c = 0; c < opt.clusters; ++c) {
    for (int j = 0; j < opt.dim; ++j) centers(c, j) = normal(rng);
    centers.row(c).normalize();
  }
  const int n = opt.clusters * opt.items_per_cluster;
  ClusteredEmbeddings out;
  out.unit.resize(n, opt.dim);
  out.labels.resize(static_cast<std::size_t>(n));
  const double scale = opt.spread / std::sqrt(static_cast<double>(opt.dim));
  for (int c = 0; c < opt.clusters; ++c) {
    for (int p = 0; p < opt.items_per_cluster; ++p) {
      const int i = c * opt.items_per_cluster + p;
      for (int j = 0; j < opt.dim; ++j) out.unit(i, j) = centers(c, j) + scale * normal(rng);
      const double norm = out.unit.row(i).norm();
      if (norm > 0) out.unit.row(i) /= norm;
      out.labels[static_cast<std::size_t>(i)] = c;
    }
  }
  out.coords = principal_plane(out.unit);
  return out;
}

inline std::vector<Index> uniform_subset(Index n, std::size_t k, Rng& rng) {
  std::vector<Index> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), Index{0});
  const std::size_t take = std::min<std::size_t>(k, ids.size());
  for (std::size_t s = 0; s < take; ++s) {
    std::uniform_int_distribution<std::size_t> pick(s, ids.size() - 1);
    std::swap(ids[s], ids[pick(rng)]);
  }
  ids.resize(take);
  return ids;
}

/// Greedy k-DPP over the linear kernel (q = 1). If the kernel rank runs out
/// before k picks, the rest is filled uniformly from unselected items.
inline std::vector<Index> dpp_subset(const Matrix& unit, std::size_t k, Rng& rng, const GreedyOptions& opt = {}) {
  const GreedyResult g = greedy_map(FactoredKernelRows(unit), k, opt);
  std::vector<Index> out;
  std::vector<char> chosen(static_cast<std::size_t>(unit.rows()), 0);
  for (auto i : g.selected) {
    out.push_back(static_cast<Index>(i));
    chosen[static_cast<std::size_t>(i)] = 1;
  }
  std::vector<Index> rest;
  for (Index i = 0; i < unit.rows(); ++i) {
    if (!chosen[static_cast<std::size_t>(i)]) rest.push_back(i);
  }
  for (std::size_t s = 0; out.size() < k && s < rest.size(); ++s) {
    std::uniform_int_distribution<std::size_t> pick(s, rest.size() - 1);
    std::swap(rest[s], rest[pick(rng)]);
    out.push_back(rest[s]);
  }
  return out;
}

struct ToySelection {
  std::vector<Index> uniform;
  std::vector<Index> dpp;
  double uniform_diversity = 0.0;
  double dpp_diversity = 0.0;
  double uniform_modal_fraction = 0.0;
  double dpp_modal_fraction = 0.0;
};

inline ToySelection run_toy(const ClusteredEmbeddings& emb, std::size_t k, std::uint64_t seed) {
  Rng rng = make_stream(seed, StreamTag::kBaseline);
  ToySelection s;
  s.uniform = uniform_subset(static_cast<Index>(emb.unit.rows()), k, rng);
  s.dpp = dpp_subset(emb.unit, k, rng);
  s.uniform_diversity = diversity(gather_rows(emb.unit, s.uniform));
  s.dpp_diversity = diversity(gather_rows(emb.unit, s.dpp));
  s.uniform_modal_fraction = modal_cluster_fraction(s.uniform, emb.labels).value_or(0.0);
  s.dpp_modal_fraction = modal_cluster_fraction(s.dpp, emb.labels).value_or(0.0);
  return s;
}

/// Plot-ready dump: one row per item with its 2-D coordinates and both
/// selection flags.
inline void write_toy_points(std::ostream& out, const ClusteredEmbeddings& emb, const ToySelection& sel) {
  std::vector<char> in_u(static_cast<std::size_t>(emb.unit.rows()), 0), in_d(in_u.size(), 0);
  for (Index i : sel.uniform) in_u[static_cast<std::size_t>(i)] = 1;
  for (Index i : sel.dpp) in_d[static_cast<std::size_t>(i)] = 1;
  out << "item\tcluster\tx\ty\tuniform\tdpp\n";
  char buf[64];
  for (Index i = 0; i < emb.unit.rows(); ++i) {
    std::snprintf(buf, sizeof buf, "%.6f\t%.6f", emb.coords(i, 0), emb.coords(i, 1));
    out << i << '\t' << emb.labels[static_cast<std::size_t>(i)] << '\t' << buf << '\t'
        << int(in_u[static_cast<std::size_t>(i)]) << '\t' << int(in_d[static_cast<std::size_t>(i)]) << '\n';
  }
}

inline void write_toy_selection(std::ostream& out, const ClusteredEmbeddings& emb, std::span<const Index> items) {
  out << "item\tcluster\tx\ty\n";
  char buf[64];
  for (Index i : items) {
    std::snprintf(buf, sizeof buf, "%.6f\t%.6f", emb.coords(i, 0), emb.coords(i, 1));
    out << i << '\t' << emb.labels[static_cast<std::size_t>(i)] << '\t' << buf << '\n';
  }
}

}  // namespace divns

#endif  // DIVNS_TOY_HPP
