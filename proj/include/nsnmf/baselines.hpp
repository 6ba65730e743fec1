// Baseline detectors: vanilla NMF, graph-regularised NMF (GNMF) and
// symmetric NMF (SNMF), plus the normalised-Laplacian equivalence check.

#pragma once

#include "nsnmf/common.hpp"
#include "nsnmf/graph.hpp"
#include "nsnmf/model.hpp"
#include "nsnmf/offline.hpp"

#include <functional>

namespace nsnmf::baselines {

// Stopping rule for the multiplicative-update solvers.
struct MuSchedule {
  int max_iterations = 500;
  double tolerance = 1e-6; // relative objective change
  std::uint64_t seed = 0;

  void validate() const {
    if (max_iterations < 0) throw InvalidInput("max iterations must be >= 0");
    if (!(tolerance >= 0.0)) throw InvalidInput("tolerance must be >= 0");
  }
};

// Called after every W or H update with the current factors.
using UpdateObserver = std::function<void(const Matrix& W, const Matrix& H)>;

struct MuResult {
  FactorPair factors;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace; // initial value, then one per iteration
};

namespace detail {

inline Matrix floored(Matrix m) { return m.cwiseMax(kDenominatorFloor); }

inline FactorPair initialize(Index n, Index p, int k, std::uint64_t seed, std::string_view tag) {
  Rng rng(derive_seed(seed, tag));
  FactorPair f;
  f.W = random_uniform(n, k, rng);
  f.H = random_uniform(k, p, rng);
  return f;
}

inline void check_input(const Matrix& A, int k) {
  require_nonnegative(A, "data matrix");
  if (k < 1 || k > std::min(A.rows(), A.cols()))
    throw InvalidInput("K must lie in [1, min(n, p)]");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Vanilla NMF
// ---------------------------------------------------------------------------

inline double nmf_objective(const Matrix& A, const FactorPair& f) {
  return frobenius_sq(A - f.W * f.H);
}

// Lee-Seung multiplicative updates for ||A - WH||_F^2.
inline MuResult fit_nmf_from(const Matrix& A, FactorPair f, const MuSchedule& schedule,
                             const UpdateObserver& observer = {}) {
  schedule.validate();
  MuResult out;
  double previous = nmf_objective(A, f);
  out.objective_trace.push_back(previous);
  for (int it = 0; it < schedule.max_iterations; ++it) {
    f.H = f.H.cwiseProduct((f.W.transpose() * A).cwiseQuotient(
        detail::floored(f.W.transpose() * f.W * f.H)));
    if (observer) observer(f.W, f.H);
    f.W = f.W.cwiseProduct(
        (A * f.H.transpose()).cwiseQuotient(detail::floored(f.W * (f.H * f.H.transpose()))));
    if (observer) observer(f.W, f.H);
    const double current = nmf_objective(A, f);
    out.objective_trace.push_back(current);
    out.iterations = it + 1;
    if (std::abs(previous - current) <= schedule.tolerance * std::max(previous, 1e-300)) {
      out.converged = true;
      break;
    }
    previous = current;
  }
  out.factors = std::move(f);
  return out;
}

inline MuResult fit_nmf(const Matrix& A, int k, const MuSchedule& schedule,
                        const UpdateObserver& observer = {}) {
  detail::check_input(A, k);
  return fit_nmf_from(A, detail::initialize(A.rows(), A.cols(), k, schedule.seed, "nmf-init"),
                      schedule, observer);
}

// ---------------------------------------------------------------------------
// GNMF
// ---------------------------------------------------------------------------

struct GnmfParams {
  double lambda = 100.0;
  int q = 5; // neighbours; 0-1 weighting

  void validate(Index n) const {
    if (!(lambda >= 0.0)) throw InvalidInput("lambda must be >= 0");
    if (q < 1) throw InvalidInput("q must be >= 1");
    if (q >= n) throw InvalidInput("q must be smaller than the number of observations");
  }
};

// Symmetrised 0-1 q-nearest-neighbour adjacency with degree and Laplacian.
struct LaplacianPair {
  graph::SparseMatrix adjacency;
  Vector degree;
  graph::SparseMatrix laplacian;
};

// Brute-force neighbour search; ties at equal distance go to the lower index.
inline LaplacianPair build_knn_laplacian(const Matrix& A, int q) {
  const Index n = A.rows();
  if (q < 1) throw InvalidInput("q must be >= 1");
  if (q >= n) throw InvalidInput("q must be smaller than the number of observations");
  if (!A.allFinite()) throw InvalidInput("observations contain non-finite entries");

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(2 * n * q));
  std::vector<std::pair<double, Index>> dist(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (Index j = 0; j < n; ++j)
      if (j != i) dist[m++] = {graph::detail::euclidean(A.row(i), A.row(j)), j};
    std::partial_sort(dist.begin(), dist.begin() + q, dist.end());
    for (int r = 0; r < q; ++r) {
      t.emplace_back(i, dist[static_cast<std::size_t>(r)].second, 1.0);
      t.emplace_back(dist[static_cast<std::size_t>(r)].second, i, 1.0);
    }
  }
  LaplacianPair out;
  out.adjacency.resize(n, n);
  // Duplicate triplets (mutual neighbours) collapse to a single 1.
  out.adjacency.setFromTriplets(t.begin(), t.end(), [](double, double) { return 1.0; });
  out.degree = Vector::Zero(n);
  for (Index i = 0; i < n; ++i)
    for (graph::SparseMatrix::InnerIterator it(out.adjacency, i); it; ++it)
      out.degree(i) += it.value();
  graph::SparseMatrix d(n, n);
  d.reserve(Eigen::VectorXi::Constant(n, 1));
  for (Index i = 0; i < n; ++i) d.insert(i, i) = out.degree(i);
  out.laplacian = d - out.adjacency;
  return out;
}

// lambda tr(W^T L W) + ||A - W H||_F^2
inline double gnmf_objective(const Matrix& A, const LaplacianPair& lap, double lambda,
                             const FactorPair& f) {
  const double smooth = (f.W.transpose() * (lap.laplacian * f.W)).trace();
  return lambda * smooth + frobenius_sq(A - f.W * f.H);
}

// H <- H (W^T A) / (W^T W H);  W <- W (A H^T + lambda S W) / (W H H^T + lambda D W)
inline MuResult fit_gnmf_from(const Matrix& A, const LaplacianPair& lap, FactorPair f,
                              const GnmfParams& params, const MuSchedule& schedule,
                              const UpdateObserver& observer = {}) {
  schedule.validate();
  params.validate(A.rows());
  MuResult out;
  double previous = gnmf_objective(A, lap, params.lambda, f);
  out.objective_trace.push_back(previous);
  for (int it = 0; it < schedule.max_iterations; ++it) {
    f.H = f.H.cwiseProduct((f.W.transpose() * A).cwiseQuotient(
        detail::floored(f.W.transpose() * f.W * f.H)));
    if (observer) observer(f.W, f.H);
    const Matrix num = A * f.H.transpose() + params.lambda * (lap.adjacency * f.W);
    const Matrix den = f.W * (f.H * f.H.transpose()) +
                       params.lambda * (lap.degree.asDiagonal() * f.W);
    f.W = f.W.cwiseProduct(num.cwiseQuotient(detail::floored(den)));
    if (observer) observer(f.W, f.H);
    const double current = gnmf_objective(A, lap, params.lambda, f);
    out.objective_trace.push_back(current);
    out.iterations = it + 1;
    if (std::abs(previous - current) <= schedule.tolerance * std::max(std::abs(previous), 1e-300)) {
      out.converged = true;
      break;
    }
    previous = current;
  }
  out.factors = std::move(f);
  return out;
}

inline MuResult fit_gnmf(const Matrix& A, int k, const GnmfParams& params,
                         const MuSchedule& schedule, const UpdateObserver& observer = {}) {
  detail::check_input(A, k);
  params.validate(A.rows());
  const auto lap = build_knn_laplacian(A, params.q);
  return fit_gnmf_from(A, lap,
                       detail::initialize(A.rows(), A.cols(), k, schedule.seed, "gnmf-init"),
                       params, schedule, observer);
}

// ---------------------------------------------------------------------------
// SNMF
// ---------------------------------------------------------------------------

struct SnmfParams {
  double sigma = 0.0; // <= 0 => median pairwise distance

  void validate() const {
    if (!std::isfinite(sigma)) throw InvalidInput("sigma must be finite");
  }
};

inline double median_pairwise_distance(const Matrix& A) {
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(A.rows() * (A.rows() - 1) / 2));
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = i + 1; j < A.rows(); ++j) d.push_back(graph::detail::euclidean(A.row(i), A.row(j)));
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

// S_ij = exp(-||a_i - a_j||^2 / (2 sigma^2)), diagonal included (= 1).
inline Matrix gaussian_similarity(const Matrix& A, double sigma) {
  if (!(sigma > 0.0)) throw InvalidInput("sigma must be > 0");
  if (A.rows() > 20000)
    warn("dense SNMF similarity for " + std::to_string(A.rows()) + " rows needs " +
         std::to_string(static_cast<double>(A.rows()) * A.rows() * 8.0 / 1e9) + " GB");
  const Index n = A.rows();
  Matrix S(n, n);
  for (Index i = 0; i < n; ++i) {
    S(i, i) = 1.0;
    for (Index j = i + 1; j < n; ++j) {
      const double d = graph::detail::euclidean(A.row(i), A.row(j));
      S(i, j) = S(j, i) = std::exp(-d * d / (2.0 * sigma * sigma));
    }
  }
  return S;
}

inline double snmf_objective(const Matrix& S, const Matrix& W) {
  return frobenius_sq(S - W * W.transpose());
}

struct SnmfResult {
  Matrix W;
  Matrix S;
  double sigma = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
};

// Projected gradient on ||S - W W^T||^2. The trial step starts from the
// offline schedule's epsilon_t and is halved until the objective does not
// increase (at most 60 halvings; otherwise the iterate is kept).
inline SnmfResult fit_snmf_from(const Matrix& S, Matrix W, const offline::SgdSchedule& schedule,
                                const std::function<void(const Matrix&)>& observer = {}) {
  schedule.validate();
  SnmfResult out;
  double previous = snmf_objective(S, W);
  out.objective_trace.push_back(previous);
  for (int it = 0; it < schedule.max_rounds; ++it) {
    const Matrix grad = -4.0 * (S * W - W * (W.transpose() * W));
    if (!grad.allFinite())
      throw NumericalError("non-finite SNMF gradient at iteration " + std::to_string(it));
    double step = schedule.step(it);
    Matrix trial;
    double current = previous;
    bool accepted = false;
    for (int halving = 0; halving < 60; ++halving, step *= 0.5) {
      trial = (W - step * grad).cwiseMax(0.0);
      current = snmf_objective(S, trial);
      if (current <= previous) {
        accepted = true;
        break;
      }
    }
    if (accepted) W = std::move(trial);
    else current = previous;
    if (observer) observer(W);
    out.objective_trace.push_back(current);
    out.iterations = it + 1;
    if (!accepted ||
        std::abs(previous - current) <= schedule.tolerance * std::max(previous, 1e-300)) {
      out.converged = true;
      break;
    }
    previous = current;
  }
  out.W = std::move(W);
  out.S = S;
  return out;
}

inline SnmfResult fit_snmf(const Matrix& A, int k, const SnmfParams& params,
                           const offline::SgdSchedule& schedule,
                           const std::function<void(const Matrix&)>& observer = {}) {
  require_nonnegative(A, "data matrix");
  params.validate();
  if (k < 1 || k > A.rows()) throw InvalidInput("K must lie in [1, n]");
  const double sigma = params.sigma > 0.0 ? params.sigma : median_pairwise_distance(A);
  const Matrix S = gaussian_similarity(A, sigma);
  Rng rng(derive_seed(schedule.seed, "snmf-init"));
  auto out = fit_snmf_from(S, random_uniform(A.rows(), k, rng), schedule, observer);
  out.sigma = sigma;
  return out;
}

// SNMF has no basis matrix to reconstruct observations from, so rows are
// scored by the norm of their similarity residual, ||(S - W W^T)_i||_2.
inline Vector snmf_residual_scores(const Matrix& S, const Matrix& W) {
  if (S.rows() != W.rows() || S.cols() != W.rows()) throw InvalidInput("S must be n x n for W n x K");
  return (S - W * W.transpose()).rowwise().norm();
}

inline AnomalyReport snmf_scores(const Matrix& S, const Matrix& W, Index top_n) {
  return flag_top_n(snmf_residual_scores(S, W), top_n);
}

// ---------------------------------------------------------------------------
// Laplacian / similarity equivalence
// ---------------------------------------------------------------------------

// With S = D^-1/2 S~ D^-1/2 and L = I - S, the two sides
//   2 tr(W^T L W) - tr(I_K) + tr(S^T S)   and   ||S - W W^T||_F^2
// coincide whenever W^T W = I; in general they differ by ||W^T W - I||_F^2.
struct EquivalenceCheck {
  double laplacian_side = 0.0;
  double similarity_side = 0.0;
  double orthonormality_deviation = 0.0; // ||W^T W - I||_F^2

  [[nodiscard]] double residual() const { return std::abs(laplacian_side - similarity_side); }
};

inline Matrix normalized_similarity(const Matrix& adjacency) {
  const Vector d = adjacency.rowwise().sum();
  Vector inv_sqrt(d.size());
  for (Index i = 0; i < d.size(); ++i) inv_sqrt(i) = d(i) > 0.0 ? 1.0 / std::sqrt(d(i)) : 0.0;
  return inv_sqrt.asDiagonal() * adjacency * inv_sqrt.asDiagonal();
}

inline EquivalenceCheck laplacian_equivalence_check(const Matrix& adjacency, const Matrix& W) {
  if (adjacency.rows() != adjacency.cols() || adjacency.rows() != W.rows())
    throw InvalidInput("adjacency must be n x n for W n x K");
  const Index n = W.rows();
  const Index k = W.cols();
  const Matrix S = normalized_similarity(adjacency);
  const Matrix L = Matrix::Identity(n, n) - S;
  EquivalenceCheck out;
  out.laplacian_side =
      2.0 * (W.transpose() * L * W).trace() - static_cast<double>(k) + (S.transpose() * S).trace();
  out.similarity_side = (S - W * W.transpose()).squaredNorm();
  out.orthonormality_deviation = (W.transpose() * W - Matrix::Identity(k, k)).squaredNorm();
  return out;
}

}  // namespace nsnmf::baselines
