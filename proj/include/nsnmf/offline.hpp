// Offline NS-NMF: block-partitioned projected SGD over interchangeable
// instance sets {S^ij, A^ik, A^jk}.

#pragma once

#include "nsnmf/common.hpp"
#include "nsnmf/graph.hpp"
#include "nsnmf/model.hpp"

#include <functional>
#include <set>
#include <sstream>

namespace nsnmf::offline {

struct BlockRange {
  Index begin = 0;
  Index size = 0;
};

// B x B tiling of S (n x n) and A (n x p). Row ranges tile W and the rows of
// S and A; column ranges tile H and the columns of A. The last range absorbs
// the remainder.
struct BlockPartition {
  int blocks = 1;
  std::vector<BlockRange> rows;
  std::vector<BlockRange> cols;
};

inline std::vector<BlockRange> split_range(Index total, int blocks) {
  std::vector<BlockRange> out;
  const Index base = total / blocks;
  for (int b = 0; b < blocks; ++b) {
    const Index begin = b * base;
    out.push_back({begin, b + 1 == blocks ? total - begin : base});
  }
  return out;
}

inline BlockPartition partition(Index n, Index p, int blocks) {
  if (blocks < 1) throw InvalidInput("block count must be >= 1");
  if (blocks > std::min(n, p))
    throw InvalidInput("block count " + std::to_string(blocks) + " exceeds min(n, p) = " +
                       std::to_string(std::min(n, p)));
  return {blocks, split_range(n, blocks), split_range(p, blocks)};
}

// Block superscripts (0-based): S^{ij}, A^{ik}, A^{jk}; parameters W^i, W^j, H^k.
struct InstanceSet {
  int i = 0;
  int j = 0;
  int k = 0;

  friend bool operator==(const InstanceSet&, const InstanceSet&) = default;
};

// Two sets are interchangeable when they share no superscript value at all.
inline bool interchangeable(const InstanceSet& a, const InstanceSet& b) {
  for (int x : {a.i, a.j, a.k})
    for (int y : {b.i, b.j, b.k})
      if (x == y) return false;
  return true;
}

inline bool pairwise_interchangeable(const std::vector<InstanceSet>& sets) {
  for (std::size_t a = 0; a < sets.size(); ++a)
    for (std::size_t b = a + 1; b < sets.size(); ++b)
      if (!interchangeable(sets[a], sets[b])) return false;
  return true;
}

// The B^2 sets (i, j, (i + j) mod B). Summing the block loss over this cover
// reproduces the full objective: every S^{ij} appears once, every A^{ik}
// twice with weight alpha/2, every W^i 2B times with gamma/2B and every H^k
// B times with gamma/B.
inline std::vector<InstanceSet> block_cover(int blocks) {
  std::vector<InstanceSet> cover;
  cover.reserve(static_cast<std::size_t>(blocks * blocks));
  for (int i = 0; i < blocks; ++i)
    for (int j = 0; j < blocks; ++j) cover.push_back({i, j, (i + j) % blocks});
  return cover;
}

// Shuffles the pool and greedily keeps every set interchangeable with those
// already kept. The result is maximal within the pool.
inline std::vector<InstanceSet> sample_interchangeable(std::vector<InstanceSet> pool, Rng& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<InstanceSet> chosen;
  for (const auto& s : pool) {
    bool ok = true;
    for (const auto& c : chosen)
      if (!interchangeable(s, c)) {
        ok = false;
        break;
      }
    if (ok) chosen.push_back(s);
  }
  return chosen;
}

inline std::vector<InstanceSet> sample_interchangeable(const BlockPartition& part, Rng& rng) {
  return sample_interchangeable(block_cover(part.blocks), rng);
}

// One round: the block cover split into strata of mutually interchangeable
// sets. Strata run one after another; sets inside a stratum may run in
// parallel.
inline std::vector<std::vector<InstanceSet>> plan_round(const BlockPartition& part, Rng& rng) {
  std::vector<InstanceSet> pool = block_cover(part.blocks);
  std::vector<std::vector<InstanceSet>> strata;
  while (!pool.empty()) {
    auto stratum = sample_interchangeable(pool, rng);
    std::erase_if(pool, [&](const InstanceSet& s) {
      return std::find(stratum.begin(), stratum.end(), s) != stratum.end();
    });
    strata.push_back(std::move(stratum));
  }
  return strata;
}

// epsilon_t = epsilon0 / (1 + t / tau), t = round index.
struct SgdSchedule {
  double epsilon0 = 1e-3;
  double tau = 100.0;
  int max_rounds = 500;
  double tolerance = 1e-5;
  std::uint64_t seed = 0;
  int threads = 1; // 0 => worker_count()

  [[nodiscard]] double step(int t) const { return epsilon0 / (1.0 + t / tau); }

  void validate() const {
    if (!(epsilon0 > 0.0)) throw InvalidInput("epsilon0 must be > 0");
    if (!(tau > 0.0)) throw InvalidInput("tau must be > 0");
    if (max_rounds < 0) throw InvalidInput("max rounds must be >= 0");
    if (!(tolerance >= 0.0)) throw InvalidInput("tolerance must be >= 0");
  }
};

// S and A cut into blocks once, up front.
class BlockedProblem {
 public:
  BlockedProblem(const Matrix& A, const graph::SparseSimilarity& S, BlockPartition part)
      : A_(A), part_(std::move(part)) {
    if (S.S.rows() != A.rows() || S.S.cols() != A.rows())
      throw InvalidInput("similarity matrix must be n x n");
    const int B = part_.blocks;
    s_blocks_.reserve(static_cast<std::size_t>(B * B));
    for (int i = 0; i < B; ++i)
      for (int j = 0; j < B; ++j) {
        const auto& r = part_.rows[static_cast<std::size_t>(i)];
        const auto& c = part_.rows[static_cast<std::size_t>(j)];
        s_blocks_.emplace_back(S.S.block(r.begin, c.begin, r.size, c.size));
      }
    s_norm_sq_ = S.S.squaredNorm();
  }

  [[nodiscard]] const BlockPartition& partition() const { return part_; }
  [[nodiscard]] const Matrix& data() const { return A_; }
  [[nodiscard]] double similarity_norm_sq() const { return s_norm_sq_; }

  [[nodiscard]] const graph::SparseMatrix& s_block(int i, int j) const {
    return s_blocks_[static_cast<std::size_t>(i * part_.blocks + j)];
  }
  [[nodiscard]] auto a_block(int i, int k) const {
    const auto& r = part_.rows[static_cast<std::size_t>(i)];
    const auto& c = part_.cols[static_cast<std::size_t>(k)];
    return A_.block(r.begin, c.begin, r.size, c.size);
  }
  [[nodiscard]] const BlockRange& row_range(int i) const {
    return part_.rows[static_cast<std::size_t>(i)];
  }
  [[nodiscard]] const BlockRange& col_range(int k) const {
    return part_.cols[static_cast<std::size_t>(k)];
  }

 private:
  const Matrix& A_;
  BlockPartition part_;
  std::vector<graph::SparseMatrix> s_blocks_;
  double s_norm_sq_ = 0.0;
};

// L_ijk = ||S^ij - W^i W^jT||^2 + g/2B (||W^i||^2 + ||W^j||^2)
//       + a/2 (||A^ik - W^i H^k||^2 + ||A^jk - W^j H^k||^2) + g/B ||H^k||^2
inline double block_loss(const BlockedProblem& prob, const InstanceSet& s, const FactorPair& f,
                         const HyperParams& h) {
  const double B = prob.partition().blocks;
  const auto& ri = prob.row_range(s.i);
  const auto& rj = prob.row_range(s.j);
  const auto& ck = prob.col_range(s.k);
  const auto Wi = f.W.middleRows(ri.begin, ri.size);
  const auto Wj = f.W.middleRows(rj.begin, rj.size);
  const auto Hk = f.H.middleCols(ck.begin, ck.size);
  const Matrix s_res = Matrix(prob.s_block(s.i, s.j)) - Wi * Wj.transpose();
  const Matrix ai_res = prob.a_block(s.i, s.k) - Wi * Hk;
  const Matrix aj_res = prob.a_block(s.j, s.k) - Wj * Hk;
  return frobenius_sq(s_res) + h.gamma / (2.0 * B) * (frobenius_sq(Wi) + frobenius_sq(Wj)) +
         h.alpha / 2.0 * (frobenius_sq(ai_res) + frobenius_sq(aj_res)) +
         h.gamma / B * frobenius_sq(Hk);
}

// Partial derivatives of L_ijk. When i == j, W^i and W^j are the same block
// and `wi` carries the combined derivative (`wj` is left empty).
struct BlockGradient {
  Matrix wi;
  Matrix wj;
  Matrix hk;
};

inline BlockGradient block_gradient(const BlockedProblem& prob, const InstanceSet& s,
                                    const FactorPair& f, const HyperParams& h) {
  const double B = prob.partition().blocks;
  const auto& ri = prob.row_range(s.i);
  const auto& rj = prob.row_range(s.j);
  const auto& ck = prob.col_range(s.k);
  const auto Wi = f.W.middleRows(ri.begin, ri.size);
  const auto Wj = f.W.middleRows(rj.begin, rj.size);
  const auto Hk = f.H.middleCols(ck.begin, ck.size);
  const auto& Sij = prob.s_block(s.i, s.j);

  // (S - Wi Wj^T) Wj and (S - Wi Wj^T)^T Wi without forming the dense residual.
  const Matrix gram_i = Wi.transpose() * Wi;
  const Matrix gram_j = Wj.transpose() * Wj;
  const Matrix s_wj = Sij * Wj - Wi * gram_j;
  const Matrix st_wi = Matrix(Sij.transpose() * Wi) - Wj * gram_i;
  const Matrix ai_res = prob.a_block(s.i, s.k) - Wi * Hk;
  const Matrix aj_res = prob.a_block(s.j, s.k) - Wj * Hk;

  BlockGradient g;
  g.wi = -2.0 * s_wj + (h.gamma / B) * Wi - h.alpha * ai_res * Hk.transpose();
  Matrix wj = -2.0 * st_wi + (h.gamma / B) * Wj - h.alpha * aj_res * Hk.transpose();
  g.hk = -h.alpha * (Wi.transpose() * ai_res + Wj.transpose() * aj_res) + (2.0 * h.gamma / B) * Hk;
  if (s.i == s.j) {
    g.wi += wj;
  } else {
    g.wj = std::move(wj);
  }
  return g;
}

// theta <- max(0, theta - eps * grad L_ijk(theta)). Touches only W^i, W^j, H^k.
inline void sgd_step(const BlockedProblem& prob, const InstanceSet& s, FactorPair& f,
                     const HyperParams& h, double epsilon, int iteration = 0) {
  BlockGradient g = block_gradient(prob, s, f, h);
  if (!g.wi.allFinite() || !g.hk.allFinite() || (s.i != s.j && !g.wj.allFinite())) {
    std::ostringstream msg;
    msg << "non-finite gradient at iteration " << iteration << ", instance set (i=" << s.i
        << ", j=" << s.j << ", k=" << s.k << ")";
    throw NumericalError(msg.str());
  }
  const auto& ri = prob.row_range(s.i);
  const auto& rj = prob.row_range(s.j);
  const auto& ck = prob.col_range(s.k);
  auto Wi = f.W.middleRows(ri.begin, ri.size);
  auto Hk = f.H.middleCols(ck.begin, ck.size);
  Wi = (Wi - epsilon * g.wi).cwiseMax(0.0);
  if (s.i != s.j) {
    auto Wj = f.W.middleRows(rj.begin, rj.size);
    Wj = (Wj - epsilon * g.wj).cwiseMax(0.0);
  }
  Hk = (Hk - epsilon * g.hk).cwiseMax(0.0);
}

// Full objective in O(nnz(S) K + n K^2 + n p K), using
// ||S - W W^T||^2 = ||S||^2 - 2 tr(W^T S W) + ||W^T W||^2.
inline double fast_objective(const BlockedProblem& prob, const graph::SparseMatrix& S,
                             const FactorPair& f, const HyperParams& h) {
  const Matrix sw = S * f.W;
  const double cross = (f.W.array() * sw.array()).sum();
  const double sim = prob.similarity_norm_sq() - 2.0 * cross + (f.W.transpose() * f.W).squaredNorm();
  const double rec = (prob.data() - f.W * f.H).squaredNorm();
  return std::max(0.0, sim) + h.alpha * rec + h.gamma * (f.W.squaredNorm() + f.H.squaredNorm());
}

inline FactorPair initialize(Index n, Index p, int k, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "offline-init"));
  FactorPair f;
  f.W = random_uniform(n, k, rng);
  f.H = random_uniform(k, p, rng);
  return f;
}

// Called after every instance-set update in single-threaded mode and after
// every stratum otherwise.
using StepObserver = std::function<void(const FactorPair&, int round)>;

struct FitResult {
  FactorPair factors;
  int rounds = 0;
  bool converged = false;
  std::vector<double> objective_trace; // initial value, then one per round
};

inline FitResult fit_offline_from(const Matrix& A, const graph::SparseSimilarity& S,
                                  FactorPair init, const HyperParams& h,
                                  const SgdSchedule& schedule, const StepObserver& observer = {}) {
  h.validate();
  schedule.validate();
  require_nonnegative(A, "data matrix");
  init.check_shapes();
  if (init.W.rows() != A.rows() || init.H.cols() != A.cols())
    throw InvalidInput("initial factors do not match the data shape");

  const BlockedProblem prob(A, S, partition(A.rows(), A.cols(), h.blocks));
  const int threads = schedule.threads == 0 ? worker_count() : schedule.threads;
  Rng rng(derive_seed(schedule.seed, "offline-rounds"));

  FitResult out;
  out.factors = std::move(init);
  double previous = fast_objective(prob, S.S, out.factors, h);
  out.objective_trace.push_back(previous);

  for (int round = 0; round < schedule.max_rounds; ++round) {
    const double eps = schedule.step(round);
    for (const auto& stratum : plan_round(prob.partition(), rng)) {
      if (threads <= 1 || stratum.size() == 1) {
        for (const auto& set : stratum) {
          sgd_step(prob, set, out.factors, h, eps, round);
          if (observer) observer(out.factors, round);
        }
      } else {
        parallel_for(stratum.size(), threads,
                     [&](std::size_t s) { sgd_step(prob, stratum[s], out.factors, h, eps, round); });
        if (observer) observer(out.factors, round);
      }
    }
    out.rounds = round + 1;
    const double current = fast_objective(prob, S.S, out.factors, h);
    if (!std::isfinite(current))
      throw NumericalError("objective became non-finite after round " + std::to_string(round));
    out.objective_trace.push_back(current);
    const double change = std::abs(previous - current) / std::max(std::abs(previous), 1e-300);
    previous = current;
    if (change < schedule.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

inline FitResult fit_offline(const Matrix& A, const graph::SparseSimilarity& S,
                             const HyperParams& h, const SgdSchedule& schedule,
                             const StepObserver& observer = {}) {
  h.validate();
  h.validate_rank(A.rows(), A.cols());
  return fit_offline_from(A, S, initialize(A.rows(), A.cols(), h.k, schedule.seed), h, schedule,
                          observer);
}

struct OfflineDetection {
  AnomalyReport report;
  FitResult fit;
  Index capped_edges = 0;
};

// MST similarity -> block SGD -> reconstruction-error scores -> top-N flags.
inline OfflineDetection detect_offline(const DataMatrix& data, const HyperParams& h,
                                       const SgdSchedule& schedule,
                                       const graph::SimilarityOptions& sim_opt = {}) {
  data.validate();
  h.validate();
  h.validate_rank(data.rows(), data.cols());
  if (h.top_n > data.rows()) throw InvalidInput("top-N exceeds the number of observations");
  const auto sim = graph::similarity_from_mst(graph::mst_from_points(data.values), sim_opt);
  OfflineDetection out;
  out.capped_edges = sim.capped_edges;
  out.fit = fit_offline(data.values, sim, h, schedule);
  out.report = flag_top_n(anomaly_scores(data.values, out.fit.factors), h.top_n);
  return out;
}

}  // namespace nsnmf::offline
