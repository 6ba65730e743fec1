// Reconstruction, the NS-NMF objective, reconstruction-error scoring and
// top-N flagging shared by the offline, online and baseline detectors.

#pragma once

#include "nsnmf/common.hpp"
#include "nsnmf/graph.hpp"

#include <iomanip>
#include <numeric>
#include <ostream>

namespace nsnmf {

inline Matrix reconstruct(const FactorPair& f) {
  f.check_shapes();
  return f.W * f.H;
}

namespace detail {

inline void check_objective_shapes(const Matrix& A, const graph::SparseSimilarity& S,
                                   const FactorPair& f) {
  f.check_shapes();
  if (A.rows() != f.W.rows() || A.cols() != f.H.cols())
    throw InvalidInput("data matrix shape does not match factor shapes");
  if (S.S.rows() != A.rows() || S.S.cols() != A.rows())
    throw InvalidInput("similarity matrix must be n x n");
}

}  // namespace detail

// The three terms of the NS-NMF objective, each accumulated row by row with
// pairwise summation; memory is O(n) beyond the inputs.
struct ObjectiveTerms {
  double similarity = 0.0;     // ||S - W W^T||_F^2
  double reconstruction = 0.0; // ||A - W H||_F^2
  double regularization = 0.0; // ||W||_F^2 + ||H||_F^2

  [[nodiscard]] double total(const HyperParams& h) const {
    return similarity + h.alpha * reconstruction + h.gamma * regularization;
  }
};

inline ObjectiveTerms objective_terms(const Matrix& A, const graph::SparseSimilarity& S,
                                      const FactorPair& f) {
  detail::check_objective_shapes(A, S, f);
  const Index n = A.rows();
  std::vector<double> sim_rows(static_cast<std::size_t>(n));
  std::vector<double> rec_rows(static_cast<std::size_t>(n));
  std::vector<double> scratch(static_cast<std::size_t>(n));
  RowVector dense_s(n);
  for (Index i = 0; i < n; ++i) {
    dense_s.setZero();
    for (graph::SparseMatrix::InnerIterator it(S.S, i); it; ++it) dense_s(it.col()) = it.value();
    const RowVector r = dense_s - f.W.row(i) * f.W.transpose();
    for (Index j = 0; j < n; ++j) scratch[static_cast<std::size_t>(j)] = r(j) * r(j);
    sim_rows[static_cast<std::size_t>(i)] = pairwise_sum(scratch);
    rec_rows[static_cast<std::size_t>(i)] = (A.row(i) - f.W.row(i) * f.H).squaredNorm();
  }
  ObjectiveTerms t;
  t.similarity = pairwise_sum(sim_rows);
  t.reconstruction = pairwise_sum(rec_rows);
  t.regularization = frobenius_sq(f.W) + frobenius_sq(f.H);
  return t;
}

// ||S - W W^T||^2 + alpha ||A - W H||^2 + gamma (||W||^2 + ||H||^2)
inline double nsnmf_objective(const Matrix& A, const graph::SparseSimilarity& S,
                              const FactorPair& f, const HyperParams& h) {
  return objective_terms(A, S, f).total(h);
}

// O_i = || a_i - sum_k W_ik h_k ||_2
inline Vector anomaly_scores(const Matrix& A, const FactorPair& f) {
  f.check_shapes();
  if (A.rows() != f.W.rows() || A.cols() != f.H.cols())
    throw InvalidInput("data matrix shape does not match factor shapes");
  Vector scores(A.rows());
  for (Index i = 0; i < A.rows(); ++i) scores(i) = (A.row(i) - f.W.row(i) * f.H).norm();
  return scores;
}

// Ranks scores in descending order (ties: lower row index first) and flags
// the first N.
inline AnomalyReport flag_top_n(const Vector& scores, Index top_n) {
  const Index n = scores.size();
  if (top_n < 0 || top_n > n)
    throw InvalidInput("top-N = " + std::to_string(top_n) + " exceeds the " + std::to_string(n) +
                       " available scores");
  if (!scores.allFinite()) throw InvalidInput("scores contain non-finite values");
  AnomalyReport report;
  report.scores = scores;
  report.order.resize(static_cast<std::size_t>(n));
  std::iota(report.order.begin(), report.order.end(), Index{0});
  std::stable_sort(report.order.begin(), report.order.end(),
                   [&](Index a, Index b) { return scores(a) > scores(b); });
  report.rank.assign(static_cast<std::size_t>(n), 0);
  report.flagged.assign(static_cast<std::size_t>(n), false);
  for (Index r = 0; r < n; ++r) {
    const auto row = static_cast<std::size_t>(report.order[static_cast<std::size_t>(r)]);
    report.rank[row] = r + 1;
    report.flagged[row] = r < top_n;
  }
  return report;
}

// CSV: row_id,score,rank,flagged with scores at 17 significant digits.
inline void write_report_csv(std::ostream& os, const AnomalyReport& report,
                             const std::vector<std::string>& row_ids = {}) {
  const auto old_flags = os.flags();
  const auto old_precision = os.precision();
  os << "row_id,score,rank,flagged\n" << std::setprecision(17);
  for (Index i = 0; i < report.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    os << (row_ids.empty() ? std::to_string(i) : row_ids[k]) << ',' << report.scores(i) << ','
       << report.rank[k] << ',' << (report.flagged[k] ? 1 : 0) << '\n';
  }
  os.flags(old_flags);
  os.precision(old_precision);
}

}  // namespace nsnmf
