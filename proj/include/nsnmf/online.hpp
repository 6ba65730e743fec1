// Streaming NS-NMF: a buffer of the most recent observations, a local MST per
// arrival, multiplicative updates for the newest weight row and the basis,
// and cumulative sums in place of the full history.

#pragma once

#include "nsnmf/common.hpp"
#include "nsnmf/graph.hpp"
#include "nsnmf/model.hpp"
#include "nsnmf/offline.hpp"

#include <functional>
#include <optional>

namespace nsnmf::online {

enum class Phase { filling, bootstrap, streaming };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::filling: return "filling";
    case Phase::bootstrap: return "bootstrap";
    case Phase::streaming: return "streaming";
  }
  return "?";
}

struct OnlineOptions {
  int k = 5;
  double alpha = 0.8;
  double gamma = 0.2; // only used by the offline bootstrap fit
  int buffer = 20;    // z
  double inner_tolerance = 1e-4;
  int inner_max_iterations = 100;
  std::uint64_t seed = 0;
  offline::SgdSchedule bootstrap{};
  graph::SimilarityOptions similarity{graph::DuplicateCap::nearest_positive, 1e-12, false};

  void validate(Index p) const {
    HyperParams h = bootstrap_params();
    h.validate();
    if (p < 1) throw InvalidInput("observations need at least one attribute");
    if (k > std::min<Index>(buffer, p))
      throw InvalidInput("K = " + std::to_string(k) + " exceeds min(buffer, p) = " +
                         std::to_string(std::min<Index>(buffer, p)));
    if (!(inner_tolerance >= 0.0)) throw InvalidInput("inner tolerance must be >= 0");
    if (inner_max_iterations < 1) throw InvalidInput("inner iteration cap must be >= 1");
    bootstrap.validate();
  }

  [[nodiscard]] HyperParams bootstrap_params() const {
    HyperParams h;
    h.k = k;
    h.alpha = alpha;
    h.gamma = gamma;
    h.blocks = 1;
    h.buffer = buffer;
    return h;
  }
};

// ---------------------------------------------------------------------------
// Update rules
// ---------------------------------------------------------------------------

// One multiplicative step for the newest weight row:
//   w <- w * (alpha a H^T + s^T W_nb) / (alpha w H H^T + D_dd w)
// `neighbours` holds the buffered weight rows aligned with `s`.
inline RowVector update_weight_row(const RowVector& w, const RowVector& a, const Matrix& H,
                                   const Vector& s, const Matrix& neighbours, double degree,
                                   double alpha) {
  if (w.size() != H.rows() || a.size() != H.cols())
    throw InvalidInput("weight row, observation and basis shapes disagree");
  if (s.size() != neighbours.rows() || neighbours.cols() != H.rows())
    throw InvalidInput("similarity row does not match the neighbour weights");
  const RowVector num = alpha * (a * H.transpose()) + s.transpose() * neighbours;
  const RowVector den = alpha * (w * (H * H.transpose())) + degree * w;
  return w.cwiseProduct(num.cwiseQuotient(den.cwiseMax(kDenominatorFloor)));
}

// H <- H * V / (U H)
inline Matrix update_basis(const Matrix& H, const Matrix& U, const Matrix& V) {
  if (U.rows() != H.rows() || U.cols() != H.rows() || V.rows() != H.rows() || V.cols() != H.cols())
    throw InvalidInput("U must be K x K and V must be K x p");
  return H.cwiseProduct(V.cwiseQuotient((U * H).cwiseMax(kDenominatorFloor)));
}

// Running U = sum w_i^T w_i and V = sum w_i^T a_i.
struct Accumulators {
  Matrix U;
  Matrix V;

  Accumulators() = default;
  Accumulators(Index k, Index p) : U(Matrix::Zero(k, k)), V(Matrix::Zero(k, p)) {}

  void add(const RowVector& w, const RowVector& a) {
    U.noalias() += w.transpose() * w;
    V.noalias() += w.transpose() * a;
  }

  [[nodiscard]] Accumulators plus(const RowVector& w, const RowVector& a) const {
    Accumulators next = *this;
    next.add(w, a);
    return next;
  }
};

inline double online_score(const RowVector& a, const RowVector& w, const Matrix& H) {
  return (a - w * H).norm();
}

// ---------------------------------------------------------------------------
// Stream state
// ---------------------------------------------------------------------------

struct ScoredRow {
  Index index = 0; // 0-based arrival index
  double score = 0.0;
};

// Called after each inner weight update and each basis update.
using UpdateObserver = std::function<void(const RowVector& w, const Matrix& H)>;

class StreamState {
 public:
  StreamState(Index p, OnlineOptions opt)
      : opt_(std::move(opt)), p_(p) {
    opt_.validate(p);
    const Index slots = opt_.buffer + 1;
    rows_ = Matrix::Zero(slots, p_);
    weights_ = Matrix::Zero(slots, opt_.k);
    acc_ = Accumulators(opt_.k, p_);
    Rng rng(derive_seed(opt_.seed, "online-basis"));
    H_ = random_uniform(opt_.k, p_, rng);
    rng_.seed(derive_seed(opt_.seed, "online-weights"));
  }

  void set_observer(UpdateObserver fn) { observer_ = std::move(fn); }

  [[nodiscard]] Index seen() const { return seen_; }
  [[nodiscard]] Index attributes() const { return p_; }
  [[nodiscard]] Index buffered() const { return count_; }
  [[nodiscard]] const Matrix& basis() const { return H_; }
  [[nodiscard]] const Matrix& U() const { return acc_.U; }
  [[nodiscard]] const Matrix& V() const { return acc_.V; }
  [[nodiscard]] const OnlineOptions& options() const { return opt_; }
  [[nodiscard]] int last_inner_iterations() const { return last_inner_; }

  [[nodiscard]] Phase phase() const {
    if (seen_ < opt_.buffer) return Phase::filling;
    if (seen_ == opt_.buffer) return Phase::bootstrap;
    return Phase::streaming;
  }

  // Buffered rows and weight rows, oldest first.
  [[nodiscard]] Matrix buffer_rows() const { return ordered(rows_); }
  [[nodiscard]] Matrix buffer_weights() const { return ordered(weights_); }

  // Filling: nothing. Bootstrap: one score per buffered row. Streaming: the
  // newest row's score.
  std::vector<ScoredRow> ingest(const RowVector& a) {
    if (a.size() != p_)
      throw InvalidInput("observation " + std::to_string(seen_) + " has " +
                         std::to_string(a.size()) + " attributes, expected " + std::to_string(p_));
    if (!a.allFinite()) throw InvalidInput("observation " + std::to_string(seen_) + " is not finite");
    if ((a.array() < 0.0).any())
      throw InvalidInput("observation " + std::to_string(seen_) + " has negative entries");

    const Index d = seen_++;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    RowVector w(opt_.k);
    for (Index k = 0; k < opt_.k; ++k) w(k) = unit(rng_);

    if (seen_ < opt_.buffer) {
      push(a, w);
      return {};
    }
    if (seen_ == opt_.buffer) {
      push(a, w);
      return bootstrap(d);
    }
    return stream(a, std::move(w), d);
  }

  // Heap bytes held by the state; constant once constructed.
  [[nodiscard]] std::size_t footprint_bytes() const {
    const auto bytes = [](const Matrix& m) { return static_cast<std::size_t>(m.size()) * sizeof(double); };
    return bytes(rows_) + bytes(weights_) + bytes(H_) + bytes(acc_.U) + bytes(acc_.V);
  }

  // 8 (z p + K p + K^2) bytes.
  [[nodiscard]] std::size_t analytic_bound_bytes() const {
    const auto z = static_cast<std::size_t>(opt_.buffer);
    const auto p = static_cast<std::size_t>(p_);
    const auto k = static_cast<std::size_t>(opt_.k);
    return sizeof(double) * (z * p + k * p + k * k);
  }

 private:
  [[nodiscard]] Matrix ordered(const Matrix& ring) const {
    Matrix out(count_, ring.cols());
    for (Index r = 0; r < count_; ++r) out.row(r) = ring.row(slot(r));
    return out;
  }

  [[nodiscard]] Index slot(Index r) const { return (head_ + r) % rows_.rows(); }

  void push(const RowVector& a, const RowVector& w) {
    const Index s = slot(count_);
    rows_.row(s) = a;
    weights_.row(s) = w;
    ++count_;
  }

  void pop_oldest() {
    head_ = (head_ + 1) % rows_.rows();
    --count_;
  }

  std::vector<ScoredRow> bootstrap(Index d) {
    const Matrix A = buffer_rows();
    const auto sim = graph::similarity_from_mst(graph::mst_from_points(A), opt_.similarity);
    offline::SgdSchedule schedule = opt_.bootstrap;
    schedule.seed = derive_seed(opt_.seed, "online-bootstrap");
    FactorPair init{buffer_weights(), H_};
    const auto fit =
        offline::fit_offline_from(A, sim, std::move(init), opt_.bootstrap_params(), schedule);
    H_ = fit.factors.H;
    for (Index r = 0; r < count_; ++r) {
      weights_.row(slot(r)) = fit.factors.W.row(r);
      acc_.add(fit.factors.W.row(r), A.row(r));
    }
    if (observer_)
      for (Index r = 0; r < count_; ++r) observer_(fit.factors.W.row(r), H_);
    std::vector<ScoredRow> out;
    out.reserve(static_cast<std::size_t>(count_));
    const Index first = d + 1 - count_;
    for (Index r = 0; r < count_; ++r)
      out.push_back({first + r, online_score(A.row(r), fit.factors.W.row(r), H_)});
    return out;
  }

  std::vector<ScoredRow> stream(const RowVector& a, RowVector w, Index d) {
    // The ring now holds the z buffered rows plus the newest one; the local
    // MST is order-independent, so it is built on the ring directly.
    push(a, w);
    const Index newest = slot(count_ - 1);
    const auto local = graph::local_mst_similarity(rows_, newest, opt_.similarity);

    Accumulators next;
    last_inner_ = 0;
    for (int t = 0; t < opt_.inner_max_iterations; ++t) {
      RowVector updated =
          update_weight_row(w, a, H_, local.row, weights_, local.degree, opt_.alpha);
      if (!updated.allFinite())
        throw NumericalError("non-finite weight row for observation " + std::to_string(d) +
                             " at inner iteration " + std::to_string(t));
      if (observer_) observer_(updated, H_);
      next = acc_.plus(updated, a);
      H_ = update_basis(H_, next.U, next.V);
      if (!H_.allFinite())
        throw NumericalError("non-finite basis for observation " + std::to_string(d) +
                             " at inner iteration " + std::to_string(t));
      if (observer_) observer_(updated, H_);
      const double change = (updated - w).norm() / std::max(w.norm(), 1e-300);
      w = std::move(updated);
      last_inner_ = t + 1;
      if (change < opt_.inner_tolerance) break;
    }
    acc_ = std::move(next);
    weights_.row(newest) = w;

    const double score = online_score(a, w, H_);
    pop_oldest();
    return {{d, score}};
  }

  OnlineOptions opt_;
  Index p_;
  Matrix rows_;    // ring of z + 1 observations
  Matrix weights_; // their weight rows
  Index head_ = 0;
  Index count_ = 0;
  Index seen_ = 0;
  Matrix H_;
  Accumulators acc_;
  Rng rng_;
  UpdateObserver observer_;
  int last_inner_ = 0;
};

// ---------------------------------------------------------------------------
// Decisions
// ---------------------------------------------------------------------------

// Flags a score when it exceeds the running Q-quantile (linear interpolation)
// of the preceding window. Nothing is flagged before `warmup` scores.
class LiveThreshold {
 public:
  explicit LiveThreshold(double quantile = 0.99, std::size_t window = 1000, std::size_t warmup = 30)
      : q_(quantile), window_(window), warmup_(warmup) {
    if (!(quantile > 0.0 && quantile < 1.0)) throw InvalidInput("quantile must lie in (0, 1)");
    if (window < 1) throw InvalidInput("threshold window must be >= 1");
    if (warmup > window) throw InvalidInput("warm-up must not exceed the window");
    ring_.reserve(window);
  }

  // Returns the decision for `score`, then adds it to the window.
  bool observe(double score) {
    const auto threshold = current();
    const bool flag = threshold && score > *threshold;
    if (ring_.size() < window_) {
      ring_.push_back(score);
    } else {
      ring_[next_] = score;
      next_ = (next_ + 1) % window_;
    }
    return flag;
  }

  [[nodiscard]] std::optional<double> current() const {
    if (ring_.size() < std::max<std::size_t>(warmup_, 1)) return std::nullopt;
    scratch_ = ring_;
    const double pos = q_ * static_cast<double>(scratch_.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(lo);
    std::nth_element(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(lo), scratch_.end());
    const double a = scratch_[lo];
    if (frac == 0.0 || lo + 1 >= scratch_.size()) return a;
    const double b = *std::min_element(scratch_.begin() + static_cast<std::ptrdiff_t>(lo) + 1, scratch_.end());
    return a + frac * (b - a);
  }

 private:
  double q_;
  std::size_t window_;
  std::size_t warmup_;
  std::vector<double> ring_;
  std::size_t next_ = 0;
  mutable std::vector<double> scratch_;
};

enum class DecisionMode { batch, live };

// Streams every row of `data` in order and flags the top-N scores at the end.
struct OnlineDetection {
  AnomalyReport report;
  Phase final_phase = Phase::filling;
};

inline OnlineDetection detect_online(const DataMatrix& data, const OnlineOptions& opt, Index top_n,
                                     const UpdateObserver& observer = {}) {
  data.validate();
  if (data.rows() < opt.buffer)
    throw InvalidInput("stream of " + std::to_string(data.rows()) +
                       " rows is shorter than the buffer size " + std::to_string(opt.buffer));
  StreamState state(data.cols(), opt);
  if (observer) state.set_observer(observer);
  Vector scores = Vector::Zero(data.rows());
  for (Index i = 0; i < data.rows(); ++i)
    for (const auto& sr : state.ingest(data.values.row(i))) scores(sr.index) = sr.score;
  OnlineDetection out;
  out.report = flag_top_n(scores, top_n);
  out.final_phase = state.phase();
  return out;
}

}  // namespace nsnmf::online
