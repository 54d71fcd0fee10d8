#include "divns/model.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace divns {
namespace {

EmbeddingTable table_from(Matrix users, Matrix items) {
  EmbeddingTable t;
  t.users = std::move(users);
  t.items = std::move(items);
  return t;
}

TEST(InitEmbeddings, SeededAndShaped) {
  const auto a = init_embeddings(7, 11, 64, 42);
  const auto b = init_embeddings(7, 11, 64, 42);
  const auto c = init_embeddings(7, 11, 64, 43);
  EXPECT_EQ(a.users, b.users);
  EXPECT_EQ(a.items, b.items);
  EXPECT_NE(a.users, c.users);
  EXPECT_EQ(a.users.cols(), 64);
  EXPECT_EQ(a.items.cols(), 64);
  EXPECT_EQ(a.items.rows(), 11);
  EXPECT_THROW(init_embeddings(0, 3, 4, 1), Error);
}

TEST(InitEmbeddings, StddevIsRespected) {
  const auto t = init_embeddings(200, 200, 64, 1, 0.01);
  const double var = (t.users.array().square().sum() + t.items.array().square().sum()) / (2.0 * 200 * 64);
  EXPECT_NEAR(std::sqrt(var), 0.01, 0.0005);
}

TEST(Score, HandValues) {
  Matrix u(2, 2), i(3, 2);
  u << 1, 0, 0.5, 0.5;
  i << 1, 0, 0, 1, 1, -1;
  const auto t = table_from(u, i);
  EXPECT_EQ(score(t, 0, 0), 1.0);
  EXPECT_EQ(score(t, 0, 1), 0.0);
  EXPECT_EQ(score(t, 1, 2), 0.0);
  EXPECT_THROW(score(t, 2, 0), Error);
  EXPECT_THROW(score(t, 0, 3), Error);
}

TEST(ScoreEmbedding, ConsistentAndBilinear) {
  const auto t = init_embeddings(3, 5, 8, 9, 1.0);
  for (Index i = 0; i < 5; ++i) EXPECT_EQ(score_embedding(t, 1, t.items.row(i)), score(t, 1, i));
  EXPECT_EQ(score_embedding(t, 1, Vector::Zero(8)), 0.0);
  const double lam = 0.3;
  const Vector mix = lam * t.items.row(2).transpose() + (1 - lam) * t.items.row(4).transpose();
  EXPECT_NEAR(score_embedding(t, 0, mix), lam * score(t, 0, 2) + (1 - lam) * score(t, 0, 4), 1e-12);
  EXPECT_THROW(score_embedding(t, 0, Vector::Zero(3)), Error);
}

TEST(BprLoss, ScalarValues) {
  Matrix u(1, 1), i(3, 1);
  u << 1;
  i << 0.5, 0.5, -0.5;
  const auto t = table_from(u, i);
  const std::vector<TrainingTriplet> equal{TrainingTriplet::single(0, 0, 1)};
  EXPECT_NEAR(bpr_loss(t, equal), std::log(2.0), 1e-15);
  const std::vector<TrainingTriplet> one{TrainingTriplet::single(0, 0, 2)};
  EXPECT_NEAR(bpr_loss(t, one), -std::log(1.0 / (1.0 + std::exp(-1.0))), 1e-15);
  EXPECT_NEAR(bpr_loss(t, one), 0.313262, 1e-6);
  EXPECT_THROW(bpr_loss(t, std::vector<TrainingTriplet>{}), Error);
}

TEST(BprLoss, LargeMarginVanishes) {
  Matrix u(1, 1), i(2, 1);
  u << 1;
  i << 15, -15;
  const auto t = table_from(u, i);
  const std::vector<TrainingTriplet> b{TrainingTriplet::single(0, 0, 1)};
  EXPECT_LT(bpr_loss(t, b), 1e-12);
  EXPECT_TRUE(std::isfinite(neg_log_sigmoid(-800.0)));
}

TEST(BprLoss, MixedNegativeUsesConvexCombination) {
  const auto t = init_embeddings(2, 4, 5, 3, 1.0);
  const auto trip = TrainingTriplet::mixed(1, 0, 2, 3, 0.25);
  const Vector v = negative_embedding(t, trip);
  const double diff = score(t, 1, 0) - score_embedding(t, 1, v);
  EXPECT_NEAR(bpr_loss(t, std::vector<TrainingTriplet>{trip}), neg_log_sigmoid(diff), 1e-12);
  EXPECT_EQ(trip.negative_sources().size(), 2u);
  EXPECT_EQ(trip.sources[0].coefficient, 0.25);
  EXPECT_EQ(trip.sources[1].coefficient, 0.75);
}

TEST(Gradients, MatchFiniteDifferencesOnSingleTriplet) {
  const auto t = init_embeddings(2, 3, 4, 11, 0.7);
  const std::vector<TrainingTriplet> b{TrainingTriplet::single(0, 1, 2)};
  Gradients g;
  compute_gradients(t, b, 0.01, g);
  const auto [gu, gi] = oracle::finite_difference_gradient(t, b, 0.01);
  EXPECT_LT(oracle::max_relative_error(g.users, gu), 1e-4);
  EXPECT_LT(oracle::max_relative_error(g.items, gi), 1e-4);
}

TEST(Gradients, ObjectiveMatchesBatchObjective) {
  const auto t = init_embeddings(3, 6, 4, 2, 0.5);
  const std::vector<TrainingTriplet> b{TrainingTriplet::single(0, 1, 2), TrainingTriplet::mixed(2, 3, 4, 5, 0.6)};
  Gradients g;
  EXPECT_NEAR(compute_gradients(t, b, 0.1, g), batch_objective(t, b, 0.1), 1e-14);
}

TEST(Gradients, LambdaOneLeavesDiverseSourceUntouched) {
  const auto t = init_embeddings(2, 5, 4, 4, 0.5);
  const std::vector<TrainingTriplet> b{TrainingTriplet::mixed(0, 1, 2, 4, 1.0)};
  Gradients g;
  compute_gradients(t, b, 0.05, g);
  EXPECT_TRUE((g.items.row(4).array() == 0.0).all());
  EXPECT_TRUE((g.items.row(2).array() != 0.0).any());
}

TEST(TrainStep, ZeroLearningRateKeepsTable) {
  auto t = init_embeddings(3, 5, 4, 1, 0.1);
  const auto before = t;
  auto s = OptimizerState::for_table(t, 0.0, 1e-4);
  const std::vector<TrainingTriplet> b{TrainingTriplet::single(0, 1, 2), TrainingTriplet::single(2, 0, 4)};
  train_step(t, s, b);
  EXPECT_EQ(t.users, before.users);
  EXPECT_EQ(t.items, before.items);
  EXPECT_EQ(s.step, 1);
}

// First Adam step moves every parameter with nonzero gradient by lr times
// the sign of its gradient, up to epsilon.
TEST(TrainStep, FirstAdamStepIsSignStep) {
  auto t = init_embeddings(2, 3, 3, 6, 0.3);
  const auto before = t;
  auto s = OptimizerState::for_table(t, 1e-2, 0.0);
  const std::vector<TrainingTriplet> b{TrainingTriplet::single(0, 1, 2)};
  Gradients g;
  compute_gradients(t, b, 0.0, g);
  train_step(t, s, b);
  for (Eigen::Index c = 0; c < 3; ++c) {
    const double gc = g.users(0, c);
    const double expected = gc == 0 ? 0.0 : -1e-2 * gc / (std::abs(gc) + 1e-8);
    EXPECT_NEAR(t.users(0, c) - before.users(0, c), expected, 1e-12);
  }
  EXPECT_EQ(t.users.row(1), before.users.row(1));
}

TEST(TrainStep, LossDecreasesOnRepeatedBatch) {
  auto t = init_embeddings(4, 8, 8, 3, 0.1);
  auto s = OptimizerState::for_table(t, 1e-2, 1e-4);
  std::vector<TrainingTriplet> b;
  for (Index u = 0; u < 4; ++u) b.push_back(TrainingTriplet::single(u, u, u + 4));
  const double first = train_step(t, s, b);
  double last = first;
  for (int k = 0; k < 50; ++k) last = train_step(t, s, b);
  EXPECT_LT(last, first);
}

TEST(SnapshotItems, NormalizesRows) {
  Matrix items(3, 4);
  items << 3, 4, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0;
  const auto t = table_from(Matrix::Zero(1, 4), items);
  const auto s = snapshot_items(t, 2);
  EXPECT_EQ(s.epoch, 2);
  EXPECT_NEAR(s.unit_items(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(s.unit_items(0, 1), 0.8, 1e-15);
  EXPECT_NEAR((s.unit_items.row(1) - items.row(1)).norm(), 0.0, 1e-12);
  EXPECT_NEAR(s.unit_items.row(2).norm(), 1.0, 1e-12);  // zero row gets a basis direction
}

TEST(SnapshotItems, RandomRowsAreUnit) {
  const auto t = init_embeddings(1, 300, 16, 5, 0.01);
  const auto s = snapshot_items(t, 0);
  for (Index i = 0; i < 300; ++i) EXPECT_NEAR(s.unit_items.row(i).norm(), 1.0, 1e-6);
}

TEST(Checkpoint, RoundTripIsExact) {
  auto t = init_embeddings(4, 6, 5, 12, 0.2);
  auto s = OptimizerState::for_table(t, 5e-4, 1e-5);
  const std::vector<TrainingTriplet> b{TrainingTriplet::single(0, 1, 2), TrainingTriplet::mixed(3, 4, 5, 0, 0.5)};
  train_step(t, s, b);
  const auto path = testing::scratch_dir("ckpt") / "c.bin";
  save_checkpoint(path, t, s);
  const auto [t2, s2] = load_checkpoint(path);
  EXPECT_EQ(t2.users, t.users);
  EXPECT_EQ(t2.items, t.items);
  EXPECT_EQ(s2.step, 1);
  EXPECT_EQ(s2.learning_rate, 5e-4);
  EXPECT_EQ(s2.v_items, s.v_items);
  std::ofstream(path, std::ios::binary) << "garbage";
  EXPECT_THROW(load_checkpoint(path), Error);
}

}  // namespace
}  // namespace divns
