#include <gtest/gtest.h>

#include <nsnmf/model.hpp>
#include <nsnmf/online.hpp>

#include "oracles.hpp"

#include <random>

using nsnmf::DataMatrix;
using nsnmf::Index;
using nsnmf::InvalidInput;
using nsnmf::Matrix;
using nsnmf::RowVector;
using nsnmf::Vector;
using namespace nsnmf::online;

namespace {

OnlineOptions small_options(int buffer = 8, int k = 2) {
  OnlineOptions o;
  o.buffer = buffer;
  o.k = k;
  o.seed = 5;
  o.bootstrap.max_rounds = 200;
  return o;
}

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

}  // namespace

TEST(WeightUpdate, FixedPointIsUnchanged) {
  // num = 0.8 * 1 * 1 + 0 = 0.8, den = 0.8 * 1 * 1 + 0 * 1 = 0.8
  const RowVector w = RowVector::Constant(1, 1.0);
  const RowVector out = update_weight_row(w, RowVector::Constant(1, 1.0), scalar(1.0),
                                          Vector::Zero(1), Matrix::Zero(1, 1), 0.0, 0.8);
  EXPECT_EQ(out(0), 1.0);
}

TEST(WeightUpdate, ScalarHandComputation) {
  // num = 0.8 * 3 * 1.5 + 1 * 0.5 = 4.1, den = 0.8 * 2 * 2.25 + 1 * 2 = 5.6
  const RowVector out = update_weight_row(RowVector::Constant(1, 2.0), RowVector::Constant(1, 3.0),
                                          scalar(1.5), Vector::Constant(1, 1.0),
                                          Matrix::Constant(1, 1, 0.5), 1.0, 0.8);
  EXPECT_NEAR(out(0), 2.0 * 4.1 / 5.6, 1e-15);
}

TEST(WeightUpdate, IsolatedPointReducesToNmfDirection) {
  std::mt19937_64 rng(1);
  const RowVector w = oracle::uniform(1, 3, rng);
  const RowVector a = oracle::uniform(1, 4, rng);
  const Matrix H = oracle::uniform(3, 4, rng);
  const RowVector out = update_weight_row(w, a, H, Vector::Zero(5), Matrix::Ones(5, 3), 0.0, 0.8);
  const RowVector nmf = w.cwiseProduct((a * H.transpose()).cwiseQuotient(w * H * H.transpose()));
  EXPECT_TRUE(out.isApprox(nmf, 1e-14));
  EXPECT_TRUE(out.allFinite());
}

TEST(WeightUpdate, ZeroDenominatorIsFloored) {
  const RowVector out = update_weight_row(RowVector::Zero(2), RowVector::Zero(3), Matrix::Zero(2, 3),
                                          Vector::Zero(1), Matrix::Zero(1, 2), 0.0, 0.8);
  EXPECT_TRUE(out.allFinite());
  EXPECT_TRUE((out.array() >= 0.0).all());
}

TEST(BasisUpdate, ScalarHandComputation) {
  // H = 2, V = 6, U = 1.5 so U H = 3 and H' = 2 * 6 / 3 = 4.
  EXPECT_EQ(update_basis(scalar(2.0), scalar(1.5), scalar(6.0))(0, 0), 4.0);
}

TEST(BasisUpdate, FixedPoints) {
  std::mt19937_64 rng(2);
  const Matrix H = oracle::uniform(3, 5, rng);
  const Matrix W = oracle::uniform(7, 3, rng);
  const Matrix U = W.transpose() * W;
  EXPECT_TRUE(update_basis(H, U, U * H).isApprox(H, 1e-12));
  EXPECT_TRUE(update_basis(H, Matrix::Identity(3, 3), H).isApprox(H, 1e-15));
}

TEST(BasisUpdate, ZeroDenominatorIsFloored) {
  const Matrix out = update_basis(Matrix::Zero(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 2));
  EXPECT_TRUE(out.allFinite());
}

TEST(Accumulate, StartsAtZeroAndMatchesBatch) {
  std::mt19937_64 rng(3);
  Accumulators acc(2, 3);
  EXPECT_TRUE(acc.U.isZero(0.0));
  EXPECT_TRUE(acc.V.isZero(0.0));
  const Matrix W = oracle::uniform(3, 2, rng);
  const Matrix A = oracle::uniform(3, 3, rng);
  acc.add(W.row(0), A.row(0));
  EXPECT_EQ(acc.U, W.row(0).transpose() * W.row(0));
  acc.add(W.row(1), A.row(1));
  acc.add(W.row(2), A.row(2));
  const auto [U, V] = oracle::batch_sums(W, A, 3);
  EXPECT_TRUE(acc.U.isApprox(U, 1e-15));
  EXPECT_TRUE(acc.V.isApprox(V, 1e-15));
  EXPECT_TRUE(acc.U.isApprox(acc.U.transpose(), 0.0));
}

TEST(Score, ExactAndThreeFourFive) {
  std::mt19937_64 rng(4);
  const Matrix H = oracle::uniform(2, 3, rng);
  const RowVector w = oracle::uniform(1, 2, rng);
  EXPECT_NEAR(online_score(w * H, w, H), 0.0, 1e-15);
  RowVector a(2);
  a << 3, 4;
  EXPECT_EQ(online_score(a, RowVector::Zero(1), Matrix::Zero(1, 2)), 5.0);
}

TEST(Score, MatchesOfflineScores) {
  std::mt19937_64 rng(5);
  const Matrix A = oracle::uniform(4, 3, rng);
  const Matrix W = oracle::uniform(4, 2, rng);
  const Matrix H = oracle::uniform(2, 3, rng);
  const Vector batch = nsnmf::anomaly_scores(A, {W, H});
  for (Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(online_score(A.row(i), W.row(i), H), batch(i));
}

TEST(Stream, DefaultBufferIsTwenty) { EXPECT_EQ(OnlineOptions{}.buffer, 20); }

TEST(Stream, FillingEmitsNothingThenBootstrapBackfills) {
  std::mt19937_64 rng(6);
  const Matrix A = oracle::uniform(12, 4, rng);
  StreamState s(4, small_options());
  for (Index i = 0; i < 7; ++i) {
    EXPECT_TRUE(s.ingest(A.row(i)).empty()) << i;
    EXPECT_EQ(s.phase(), Phase::filling);
  }
  const auto boot = s.ingest(A.row(7));
  EXPECT_EQ(s.phase(), Phase::bootstrap);
  ASSERT_EQ(boot.size(), 8u);
  for (std::size_t i = 0; i < boot.size(); ++i) EXPECT_EQ(boot[i].index, Index(i));
  const auto next = s.ingest(A.row(8));
  EXPECT_EQ(s.phase(), Phase::streaming);
  ASSERT_EQ(next.size(), 1u);
  EXPECT_EQ(next[0].index, 8);
  EXPECT_EQ(s.buffered(), 8);
}

TEST(Stream, RejectsBadRows) {
  StreamState s(3, small_options(4, 2));
  EXPECT_THROW(s.ingest(RowVector::Ones(4)), InvalidInput);
  RowVector neg = RowVector::Ones(3);
  neg(1) = -0.5;
  EXPECT_THROW(s.ingest(neg), InvalidInput);
  EXPECT_EQ(s.seen(), 0);
}

TEST(Stream, RankAboveBufferOrWidthRejected) {
  EXPECT_THROW(StreamState(3, small_options(8, 4)), InvalidInput);
  EXPECT_THROW(StreamState(10, small_options(3, 4)), InvalidInput);
}

TEST(Stream, StateStaysNonNegative) {
  std::mt19937_64 rng(7);
  const Matrix A = oracle::uniform(80, 5, rng);
  StreamState s(5, small_options(10, 3));
  int calls = 0;
  s.set_observer([&](const RowVector& w, const Matrix& H) {
    ++calls;
    EXPECT_TRUE((w.array() >= 0.0).all());
    EXPECT_TRUE((H.array() >= 0.0).all());
  });
  for (Index i = 0; i < A.rows(); ++i) {
    s.ingest(A.row(i));
    if (s.phase() == Phase::filling) continue;
    EXPECT_TRUE((s.basis().array() >= 0.0).all());
    EXPECT_TRUE((s.U().array() >= 0.0).all());
    EXPECT_TRUE((s.V().array() >= 0.0).all());
    EXPECT_TRUE((s.buffer_weights().array() >= 0.0).all());
  }
  EXPECT_GT(calls, 0);
}

TEST(Stream, AccumulatorsMatchBatchSumsOnEveryPrefix) {
  std::mt19937_64 rng(8);
  const Index n = 120;
  const Matrix A = oracle::uniform(n, 5, rng);
  const auto opt = small_options(10, 3);
  StreamState s(5, opt);
  Matrix W(n, 3);
  for (Index i = 0; i < n; ++i) {
    s.ingest(A.row(i));
    if (s.phase() == Phase::filling) continue;
    if (s.phase() == Phase::bootstrap)
      W.topRows(opt.buffer) = s.buffer_weights();
    else
      W.row(i) = s.buffer_weights().bottomRows(1);
    const auto [U, V] = oracle::batch_sums(W, A, i + 1);
    EXPECT_LE((s.U() - U).norm(), 1e-12 * U.norm()) << "prefix " << i + 1;
    EXPECT_LE((s.V() - V).norm(), 1e-12 * V.norm()) << "prefix " << i + 1;
  }
}

TEST(Stream, FootprintIsConstantAndBounded) {
  std::mt19937_64 rng(9);
  const Matrix A = oracle::uniform(400, 10, rng);
  StreamState s(10, small_options(20, 5));
  const auto initial = s.footprint_bytes();
  for (Index i = 0; i < A.rows(); ++i) {
    s.ingest(A.row(i));
    if (s.phase() != Phase::filling) {
      EXPECT_EQ(s.footprint_bytes(), initial);
    }
  }
  EXPECT_LE(s.footprint_bytes(), 2 * s.analytic_bound_bytes());
}

TEST(Stream, SeedIsReproducible) {
  std::mt19937_64 rng(10);
  const Matrix A = oracle::uniform(40, 4, rng);
  const auto a = detect_online(DataMatrix(A), small_options(), 3);
  const auto b = detect_online(DataMatrix(A), small_options(), 3);
  EXPECT_TRUE((a.report.scores.array() == b.report.scores.array()).all());
}

TEST(Stream, ConstantStreamGivesEqualScores) {
  // Neighbour weights left over from the bootstrap are evicted after a few
  // buffer lengths; from then on every row sees an identical state.
  const Matrix A = Matrix::Constant(300, 4, 0.5);
  auto opt = small_options(8, 2);
  opt.inner_tolerance = 0.0;
  opt.inner_max_iterations = 2000;
  StreamState s(4, opt);
  std::vector<double> scores;
  for (Index i = 0; i < A.rows(); ++i)
    for (const auto& r : s.ingest(A.row(i)))
      if (r.index >= 150) scores.push_back(r.score);
  ASSERT_EQ(scores.size(), 150u);
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  EXPECT_LT(*hi - *lo, 1e-9);
}

TEST(Stream, ShortStreamRejected) {
  EXPECT_THROW(detect_online(DataMatrix(Matrix::Ones(5, 3)), small_options(8, 2), 1), InvalidInput);
}

TEST(Stream, PlantedSpikeRanksFirst) {
  std::mt19937_64 rng(11);
  Matrix A = oracle::uniform(150, 4, rng, 0.2, 0.3);
  A.row(100) << 2.5, 0.0, 3.0, 0.1;
  const auto r = detect_online(DataMatrix(A), small_options(20, 2), 1);
  EXPECT_EQ(r.final_phase, Phase::streaming);
  EXPECT_TRUE(r.report.flagged[100]);
}

TEST(LiveThreshold, ConstantScoresNeverFlagged) {
  LiveThreshold t(0.99, 1000, 30);
  for (int i = 0; i < 500; ++i) EXPECT_FALSE(t.observe(1.0));
}

TEST(LiveThreshold, SpikeIsFlagged) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.9, 1.1);
  LiveThreshold t(0.99, 1000, 30);
  for (int i = 0; i < 200; ++i) t.observe(u(rng));
  EXPECT_TRUE(t.observe(100.0));
}

TEST(LiveThreshold, NothingBeforeWarmup) {
  LiveThreshold t(0.5, 10, 5);
  for (int i = 0; i < 5; ++i) EXPECT_FALSE(t.observe(i == 4 ? 1e6 : 1.0));
  EXPECT_TRUE(t.current().has_value());
}

TEST(LiveThreshold, InterpolatedQuantile) {
  LiveThreshold t(0.5, 10, 1);
  for (double v : {4.0, 1.0, 3.0, 2.0}) t.observe(v);
  // sorted 1 2 3 4, position 1.5 -> 2.5
  EXPECT_DOUBLE_EQ(*t.current(), 2.5);
}

TEST(LiveThreshold, InvalidSettingsRejected) {
  EXPECT_THROW(LiveThreshold(1.0), InvalidInput);
  EXPECT_THROW(LiveThreshold(0.9, 10, 20), InvalidInput);
}
