#ifndef DIVNS_MODEL_HPP
#define DIVNS_MODEL_HPP

#include "divns/common.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>

namespace divns {

/// Trainable matrix-factorization parameters. Item rows are kept raw
/// (unnormalized) for scoring and loss; kernel math uses ItemSnapshot.
struct EmbeddingTable {
  Matrix users;
  Matrix items;

  Index num_users() const { return static_cast<Index>(users.rows()); }
  Index num_items() const { return static_cast<Index>(items.rows()); }
  int dim() const { return static_cast<int>(users.cols()); }
};

inline EmbeddingTable init_embeddings(Index num_users, Index num_items, int dim,
                                      std::uint64_t seed, double stddev = 0.01) {
  if (num_users <= 0 || num_items <= 0 || dim <= 0) {
    throw Error("init_embeddings: dimensions must be positive");
  }
  Rng rng = make_stream(seed, StreamTag::kInit);
  std::normal_distribution<double> normal(0.0, stddev);
  EmbeddingTable t;
  t.users.resize(num_users, dim);
  t.items.resize(num_items, dim);
  for (Index r = 0; r < num_users; ++r)
    for (int c = 0; c < dim; ++c) t.users(r, c) = normal(rng);
  for (Index r = 0; r < num_items; ++r)
    for (int c = 0; c < dim; ++c) t.items(r, c) = normal(rng);
  return t;
}

inline void check_user(const EmbeddingTable& t, Index u) {
  if (u < 0 || u >= t.num_users()) throw Error("user index out of range: " + std::to_string(u));
}
inline void check_item(const EmbeddingTable& t, Index i) {
  if (i < 0 || i >= t.num_items()) throw Error("item index out of range: " + std::to_string(i));
}

inline double score(const EmbeddingTable& t, Index u, Index i) {
  check_user(t, u);
  check_item(t, i);
  return t.users.row(u).dot(t.items.row(i));
}

template <typename Derived>
double score_embedding(const EmbeddingTable& t, Index u, const Eigen::MatrixBase<Derived>& v) {
  check_user(t, u);
  if (v.size() != t.dim()) throw Error("score_embedding: dimension mismatch");
  return t.users.row(u).dot(v.derived());
}

/// Unit-norm copy of the item rows, frozen at the start of an epoch.
struct ItemSnapshot {
  Matrix unit_items;
  int epoch = 0;

  auto row(Index i) const { return unit_items.row(i); }
};

inline ItemSnapshot snapshot_items(const EmbeddingTable& t, int epoch) {
  ItemSnapshot s;
  s.epoch = epoch;
  s.unit_items = t.items;
  const int d = t.dim();
  for (Index i = 0; i < t.num_items(); ++i) {
    const double n = s.unit_items.row(i).norm();
    if (n < 1e-12) {
      s.unit_items.row(i).setZero();
      s.unit_items(i, i % d) = 1.0;
    } else {
      s.unit_items.row(i) /= n;
    }
  }
  return s;
}

struct NegativeSource {
  Index item = 0;
  double coefficient = 1.0;
};

/// (user, positive, negative) where the negative is a convex combination of
/// one or two real items. The embedding is rebuilt from the current table
/// whenever the loss is evaluated so gradients reach both sources.
struct TrainingTriplet {
  Index user = 0;
  Index positive = 0;
  std::array<NegativeSource, 2> sources{};
  std::uint8_t num_sources = 1;

  static TrainingTriplet single(Index u, Index pos, Index neg) {
    TrainingTriplet t;
    t.user = u;
    t.positive = pos;
    t.sources[0] = {neg, 1.0};
    t.num_sources = 1;
    return t;
  }

  static TrainingTriplet mixed(Index u, Index pos, Index hard, Index diverse, double lambda) {
    TrainingTriplet t;
    t.user = u;
    t.positive = pos;
    t.sources[0] = {hard, lambda};
    t.sources[1] = {diverse, 1.0 - lambda};
    t.num_sources = 2;
    return t;
  }

  std::span<const NegativeSource> negative_sources() const { return {sources.data(), num_sources}; }

  friend bool operator==(const TrainingTriplet& a, const TrainingTriplet& b) {
    if (a.user != b.user || a.positive != b.positive || a.num_sources != b.num_sources) return false;
    for (std::uint8_t s = 0; s < a.num_sources; ++s) {
      if (a.sources[s].item != b.sources[s].item ||
          a.sources[s].coefficient != b.sources[s].coefficient)
        return false;
    }
    return true;
  }
};

inline Vector negative_embedding(const EmbeddingTable& t, const TrainingTriplet& trip) {
  Vector v = Vector::Zero(t.dim());
  for (const auto& s : trip.negative_sources()) v += s.coefficient * t.items.row(s.item).transpose();
  return v;
}

/// Numerically stable -ln(sigmoid(x)).
inline double neg_log_sigmoid(double x) {
  return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double triplet_difference(const EmbeddingTable& t, const TrainingTriplet& trip) {
  double neg = 0.0;
  for (const auto& s : trip.negative_sources()) {
    neg += s.coefficient * t.users.row(trip.user).dot(t.items.row(s.item));
  }
  return t.users.row(trip.user).dot(t.items.row(trip.positive)) - neg;
}

/// Sum over triplets of -ln sigma(y(u,i) - y(u,j~)).
inline double bpr_loss(const EmbeddingTable& t, std::span<const TrainingTriplet> triplets) {
  if (triplets.empty()) throw Error("bpr_loss: empty triplet list");
  double loss = 0.0;
  for (const auto& trip : triplets) {
    const double diff = triplet_difference(t, trip);
    if (!std::isfinite(diff)) throw NumericError("bpr_loss: non-finite score difference");
    loss += neg_log_sigmoid(diff);
  }
  return loss;
}

struct Gradients {
  Matrix users;
  Matrix items;
};

/// Mini-batch objective: mean BPR loss plus (l2/2B) times the squared norms
/// of the batch's users, positives and negative sources (sources weighted
/// by their mixing coefficient).
inline double batch_objective(const EmbeddingTable& t, std::span<const TrainingTriplet> batch,
                              double l2) {
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double obj = bpr_loss(t, batch) * inv_b;
  double reg = 0.0;
  for (const auto& trip : batch) {
    reg += t.users.row(trip.user).squaredNorm() + t.items.row(trip.positive).squaredNorm();
    for (const auto& s : trip.negative_sources()) reg += s.coefficient * t.items.row(s.item).squaredNorm();
  }
  return obj + 0.5 * l2 * reg * inv_b;
}

/// Analytic gradient of batch_objective; `out` is resized and overwritten.
inline double compute_gradients(const EmbeddingTable& t, std::span<const TrainingTriplet> batch,
                                double l2, Gradients& out) {
  if (batch.empty()) throw Error("compute_gradients: empty batch");
  if (out.users.rows() != t.users.rows() || out.users.cols() != t.users.cols()) out.users.resize(t.users.rows(), t.users.cols());
  if (out.items.rows() != t.items.rows() || out.items.cols() != t.items.cols()) out.items.resize(t.items.rows(), t.items.cols());
  out.users.setZero();
  out.items.setZero();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  double reg = 0.0;
  Vector neg(t.dim());
  for (const auto& trip : batch) {
    const auto u = t.users.row(trip.user);
    const auto vp = t.items.row(trip.positive);
    neg.setZero();
    for (const auto& s : trip.negative_sources()) neg += s.coefficient * t.items.row(s.item).transpose();
    const double diff = u.dot(vp) - u.dot(neg.transpose());
    if (!std::isfinite(diff)) throw NumericError("compute_gradients: non-finite score difference");
    loss += neg_log_sigmoid(diff);
    // d/d(diff) of -ln sigma(diff) is -sigma(-diff).
    const double g = -sigmoid(-diff) * inv_b;
    out.users.row(trip.user) += g * (vp - neg.transpose()) + (l2 * inv_b) * u;
    out.items.row(trip.positive) += g * u + (l2 * inv_b) * vp;
    reg += u.squaredNorm() + vp.squaredNorm();
    for (const auto& s : trip.negative_sources()) {
      const auto vs = t.items.row(s.item);
      out.items.row(s.item) += (-g * s.coefficient) * u + (l2 * inv_b * s.coefficient) * vs;
      reg += s.coefficient * vs.squaredNorm();
    }
  }
  if (!out.users.allFinite() || !out.items.allFinite()) {
    throw NumericError("compute_gradients: non-finite gradient (loss " + std::to_string(loss) + ")");
  }
  return loss * inv_b + 0.5 * l2 * reg * inv_b;
}

/// Adam moments and hyperparameters.
struct OptimizerState {
  double learning_rate = 1e-3;
  double l2 = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  Matrix m_users, v_users, m_items, v_items;

  static OptimizerState for_table(const EmbeddingTable& t, double lr, double l2) {
    OptimizerState s;
    s.learning_rate = lr;
    s.l2 = l2;
    s.m_users = Matrix::Zero(t.users.rows(), t.users.cols());
    s.v_users = s.m_users;
    s.m_items = Matrix::Zero(t.items.rows(), t.items.cols());
    s.v_items = s.m_items;
    return s;
  }
};

namespace detail {

inline void adam_update(Matrix& param, Matrix& m, Matrix& v, const Matrix& g,
                        const OptimizerState& s, double bias1, double bias2) {
  m.array() = s.beta1 * m.array() + (1.0 - s.beta1) * g.array();
  v.array() = s.beta2 * v.array() + (1.0 - s.beta2) * g.array().square();
  param.array() -= s.learning_rate * (m.array() / bias1) / ((v.array() / bias2).sqrt() + s.epsilon);
}

}  // namespace detail

/// One Adam step on the batch objective. Returns the pre-step objective.
inline double train_step(EmbeddingTable& t, OptimizerState& s, std::span<const TrainingTriplet> batch,
                         Gradients& scratch) {
  const double obj = compute_gradients(t, batch, s.l2, scratch);
  ++s.step;
  const double bias1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bias2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  detail::adam_update(t.users, s.m_users, s.v_users, scratch.users, s, bias1, bias2);
  detail::adam_update(t.items, s.m_items, s.v_items, scratch.items, s, bias1, bias2);
  return obj;
}

inline double train_step(EmbeddingTable& t, OptimizerState& s, std::span<const TrainingTriplet> batch) {
  Gradients scratch;
  return train_step(t, s, batch, scratch);
}

// ---------------------------------------------------------------------------
// Checkpoint: "DIVNSCK1", u32 version, then matrices and optimizer state.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_matrix(std::ostream& out, const Matrix& m) {
  const std::int64_t rows = m.rows(), cols = m.cols();
  out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
  out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
}

inline Matrix read_matrix(std::istream& in) {
  std::int64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || rows < 0 || cols < 0 || rows * cols > (std::int64_t{1} << 34)) throw Error("corrupt checkpoint matrix header");
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw Error("truncated checkpoint");
  return m;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'D', 'I', 'V', 'N', 'S', 'C', 'K', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path, const EmbeddingTable& t,
                            const OptimizerState& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
  detail::write_matrix(out, t.users);
  detail::write_matrix(out, t.items);
  const double hyper[5] = {s.learning_rate, s.l2, s.beta1, s.beta2, s.epsilon};
  out.write(reinterpret_cast<const char*>(hyper), sizeof hyper);
  out.write(reinterpret_cast<const char*>(&s.step), sizeof s.step);
  for (const Matrix* m : {&s.m_users, &s.v_users, &s.m_items, &s.v_items}) detail::write_matrix(out, *m);
}

inline std::pair<EmbeddingTable, OptimizerState> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint: " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw Error("not a checkpoint: " + path.string());
  if (version != kCheckpointVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  EmbeddingTable t;
  t.users = detail::read_matrix(in);
  t.items = detail::read_matrix(in);
  OptimizerState s;
  double hyper[5];
  in.read(reinterpret_cast<char*>(hyper), sizeof hyper);
  in.read(reinterpret_cast<char*>(&s.step), sizeof s.step);
  s.learning_rate = hyper[0];
  s.l2 = hyper[1];
  s.beta1 = hyper[2];
  s.beta2 = hyper[3];
  s.epsilon = hyper[4];
  s.m_users = detail::read_matrix(in);
  s.v_users = detail::read_matrix(in);
  s.m_items = detail::read_matrix(in);
  s.v_items = detail::read_matrix(in);
  return {std::move(t), std::move(s)};
}

}  // namespace divns

#endif  // DIVNS_MODEL_HPP
