// Shared value types, error types and small numeric utilities used by every
// module of the library.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace nsnmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;
using Rng = std::mt19937_64;

// Raised for malformed arguments: bad shapes, out-of-range parameters,
// negative or non-finite data. The CLI maps it to exit code 1.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an iterative solver produces non-finite values.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Floor applied to every multiplicative-update denominator.
inline constexpr double kDenominatorFloor = 1e-12;

inline void warn(std::string_view message) {
  std::clog << "nsnmf: warning: " << message << '\n';
}

// Pairwise (cascade) summation; error grows as O(log n) instead of O(n).
inline double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kLeaf = 128;
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

// Squared Frobenius norm with per-row pairwise accumulation.
template <typename Derived>
double frobenius_sq(const Eigen::MatrixBase<Derived>& expr) {
  const auto& m = expr.derived().eval();
  std::vector<double> row_totals(static_cast<std::size_t>(m.rows()));
  std::vector<double> scratch(static_cast<std::size_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      scratch[static_cast<std::size_t>(j)] = v * v;
    }
    row_totals[static_cast<std::size_t>(i)] = pairwise_sum(scratch);
  }
  return pairwise_sum(row_totals);
}

template <typename Derived>
bool all_nonnegative(const Eigen::MatrixBase<Derived>& m) {
  return (m.array() >= 0.0).all();
}

inline void require_nonnegative(const Matrix& m, std::string_view what) {
  if (!m.allFinite()) throw InvalidInput(std::string(what) + " contains non-finite entries");
  if (!all_nonnegative(m)) throw InvalidInput(std::string(what) + " contains negative entries");
}

// n x p observation matrix; rows are observations.
struct DataMatrix {
  Matrix values;
  std::vector<std::string> row_ids;  // empty => ids are 0-based row numbers

  DataMatrix() = default;
  explicit DataMatrix(Matrix v, std::vector<std::string> ids = {})
      : values(std::move(v)), row_ids(std::move(ids)) {
    if (!row_ids.empty() && static_cast<Index>(row_ids.size()) != values.rows())
      throw InvalidInput("row id count does not match row count");
  }

  [[nodiscard]] Index rows() const { return values.rows(); }
  [[nodiscard]] Index cols() const { return values.cols(); }

  [[nodiscard]] std::string id(Index i) const {
    return row_ids.empty() ? std::to_string(i) : row_ids[static_cast<std::size_t>(i)];
  }

  void validate() const { require_nonnegative(values, "data matrix"); }
};

// W (n x K) holds cluster-association weights, H (K x p) the basis rows.
struct FactorPair {
  Matrix W;
  Matrix H;

  [[nodiscard]] Index rank() const { return W.cols(); }

  void check_shapes() const {
    if (W.cols() != H.rows())
      throw InvalidInput("factor shapes disagree: W has " + std::to_string(W.cols()) +
                         " columns, H has " + std::to_string(H.rows()) + " rows");
  }

  [[nodiscard]] bool nonnegative() const { return all_nonnegative(W) && all_nonnegative(H); }
};

struct HyperParams {
  int k = 5;
  double alpha = 0.8;
  double gamma = 0.2;
  int blocks = 1;
  int top_n = 10;
  int buffer = 20;

  void validate() const {
    if (k < 1) throw InvalidInput("K must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInput("alpha must lie in (0, 1]");
    if (!(gamma >= 0.0)) throw InvalidInput("gamma must be >= 0");
    if (blocks < 1) throw InvalidInput("block count must be >= 1");
    if (top_n < 1) throw InvalidInput("top-N must be >= 1");
    if (buffer < 2) throw InvalidInput("buffer size must be >= 2");
  }

  void validate_rank(Index n, Index p) const {
    if (k > std::min(n, p))
      throw InvalidInput("K = " + std::to_string(k) + " exceeds min(n, p) = " +
                         std::to_string(std::min(n, p)));
  }
};

// Scores with descending ranking; `order[r]` is the row at rank r (0-based),
// `rank[i]` the 1-based rank of row i.
struct AnomalyReport {
  Vector scores;
  std::vector<Index> order;
  std::vector<Index> rank;
  std::vector<bool> flagged;

  [[nodiscard]] Index size() const { return scores.size(); }
  [[nodiscard]] Index flagged_count() const {
    return static_cast<Index>(std::count(flagged.begin(), flagged.end(), true));
  }
};

// splitmix64 finalizer over the base seed and an FNV-1a hash of the tag, so
// that each component draws from an independent, reproducible stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (h | 1ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Entries i.i.d. uniform on [0, 1).
inline Matrix random_uniform(Index rows, Index cols, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = unit(rng);
  return m;
}

// Worker cap: NSNMF_THREADS if set and positive, otherwise hardware parallelism.
inline int worker_count() {
  if (const char* env = std::getenv("NSNMF_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(0..count-1) on up to `threads` workers, item i going to worker
// i mod workers. Callers must guarantee the items touch disjoint state.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace nsnmf
