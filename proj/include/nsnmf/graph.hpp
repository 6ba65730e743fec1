// Euclidean graph construction, minimum spanning trees and the sparse
// MST similarity matrix.

#pragma once

#include "nsnmf/common.hpp"

#include <Eigen/SparseCore>

#include <iomanip>
#include <ostream>
#include <queue>
#include <tuple>

namespace nsnmf::graph {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Undirected weighted edge, stored with u < v.
struct Edge {
  Index u = 0;
  Index v = 0;
  double weight = 0.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

// Strict total order used for every tie-break: weight, then (u, v).
inline bool edge_less(const Edge& a, const Edge& b) {
  return std::tie(a.weight, a.u, a.v) < std::tie(b.weight, b.u, b.v);
}

inline Edge make_edge(Index a, Index b, double w) {
  return a < b ? Edge{a, b, w} : Edge{b, a, w};
}

using EdgeList = std::vector<Edge>;

// The n - 1 tree edges; the dense n x n matrix M is implied (zero off-tree).
struct MstDistance {
  Index nodes = 0;
  std::vector<Edge> edges;

  [[nodiscard]] double total_weight() const {
    std::vector<double> w;
    w.reserve(edges.size());
    for (const auto& e : edges) w.push_back(e.weight);
    std::sort(w.begin(), w.end());
    return pairwise_sum(w);
  }

  [[nodiscard]] SparseMatrix matrix() const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(edges.size() * 2);
    for (const auto& e : edges) {
      t.emplace_back(e.u, e.v, e.weight);
      t.emplace_back(e.v, e.u, e.weight);
    }
    SparseMatrix m(nodes, nodes);
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }
};

// How zero-length tree edges (duplicate observations) are turned into a
// finite similarity.
enum class DuplicateCap {
  // Similarity of the closest non-duplicate tree edge (1 if every edge has
  // zero length). Keeps S on the scale of the rest of the tree.
  nearest_positive,
  // Literal 1 / epsilon.
  reciprocal_epsilon,
};

struct SimilarityOptions {
  DuplicateCap cap = DuplicateCap::nearest_positive;
  double epsilon = 1e-12;
  bool log_warnings = true;
};

struct SparseSimilarity {
  SparseMatrix S;
  Vector degree;          // D_ii = sum_j S_ij
  Index capped_edges = 0; // zero-length tree edges that were capped

  [[nodiscard]] Index nodes() const { return S.rows(); }
};

namespace detail {

template <typename RowA, typename RowB>
double euclidean(const RowA& a, const RowB& b) {
  double s = 0.0;
  for (Index c = 0; c < a.size(); ++c) {
    const double d = a(c) - b(c);
    s += d * d;
  }
  return std::sqrt(s);
}

inline void require_points(const Matrix& A) {
  if (A.rows() < 2) throw InvalidInput("at least 2 observations are required to build a graph");
  if (!A.allFinite()) throw InvalidInput("observations contain non-finite entries");
}

}  // namespace detail

// All n(n-1)/2 pairwise Euclidean edges, ordered by (u, v).
inline EdgeList build_complete_graph(const Matrix& A) {
  detail::require_points(A);
  const Index n = A.rows();
  EdgeList edges;
  edges.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index u = 0; u < n; ++u)
    for (Index v = u + 1; v < n; ++v)
      edges.push_back({u, v, detail::euclidean(A.row(u), A.row(v))});
  return edges;
}

// Prim's algorithm with a binary heap over an explicit edge list.
inline MstDistance minimum_spanning_tree(const EdgeList& g, Index n) {
  if (n < 1) throw InvalidInput("graph must have at least one node");
  std::vector<std::vector<std::size_t>> adjacent(static_cast<std::size_t>(n));
  for (std::size_t e = 0; e < g.size(); ++e) {
    const auto& edge = g[e];
    if (edge.u < 0 || edge.v < 0 || edge.u >= n || edge.v >= n)
      throw InvalidInput("edge endpoint out of range");
    if (edge.u == edge.v) throw InvalidInput("self-loop in edge list");
    if (!(edge.weight >= 0.0) || !std::isfinite(edge.weight))
      throw InvalidInput("edge weights must be finite and non-negative");
    adjacent[static_cast<std::size_t>(edge.u)].push_back(e);
    adjacent[static_cast<std::size_t>(edge.v)].push_back(e);
  }

  struct Candidate {
    Edge edge;
    Index target;
  };
  auto greater = [](const Candidate& a, const Candidate& b) { return edge_less(b.edge, a.edge); };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(greater)> heap(greater);

  std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
  MstDistance tree{n, {}};
  tree.edges.reserve(static_cast<std::size_t>(n - 1));

  auto add_node = [&](Index node) {
    in_tree[static_cast<std::size_t>(node)] = 1;
    for (std::size_t e : adjacent[static_cast<std::size_t>(node)]) {
      const Edge edge = make_edge(g[e].u, g[e].v, g[e].weight);
      const Index other = edge.u == node ? edge.v : edge.u;
      if (!in_tree[static_cast<std::size_t>(other)]) heap.push({edge, other});
    }
  };

  add_node(0);
  while (!heap.empty() && static_cast<Index>(tree.edges.size()) < n - 1) {
    const Candidate c = heap.top();
    heap.pop();
    if (in_tree[static_cast<std::size_t>(c.target)]) continue;
    tree.edges.push_back(c.edge);
    add_node(c.target);
  }

  if (static_cast<Index>(tree.edges.size()) != n - 1) {
    for (Index v = 0; v < n; ++v)
      if (!in_tree[static_cast<std::size_t>(v)])
        throw InvalidInput("graph is disconnected: node " + std::to_string(v) +
                           " is unreachable from node 0");
  }
  return tree;
}

// Dense O(n^2) Prim over the implicit complete Euclidean graph. Produces the
// same tree as minimum_spanning_tree(build_complete_graph(A), n) without
// materialising the n(n-1)/2 edges.
inline MstDistance mst_from_points(const Matrix& A) {
  detail::require_points(A);
  const Index n = A.rows();
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
  std::vector<Edge> best(static_cast<std::size_t>(n), Edge{0, 0, inf});
  MstDistance tree{n, {}};
  tree.edges.reserve(static_cast<std::size_t>(n - 1));

  Index current = 0;
  in_tree[0] = 1;
  for (Index step = 1; step < n; ++step) {
    Index next = -1;
    for (Index v = 0; v < n; ++v) {
      if (in_tree[static_cast<std::size_t>(v)]) continue;
      auto& slot = best[static_cast<std::size_t>(v)];
      const Edge candidate = make_edge(current, v, detail::euclidean(A.row(current), A.row(v)));
      if (edge_less(candidate, slot)) slot = candidate;
      if (next < 0 || edge_less(slot, best[static_cast<std::size_t>(next)])) next = v;
    }
    tree.edges.push_back(best[static_cast<std::size_t>(next)]);
    in_tree[static_cast<std::size_t>(next)] = 1;
    current = next;
  }
  return tree;
}

namespace detail {

inline double duplicate_similarity(const std::vector<Edge>& edges, const SimilarityOptions& opt) {
  if (opt.cap == DuplicateCap::reciprocal_epsilon) return 1.0 / opt.epsilon;
  double shortest = std::numeric_limits<double>::infinity();
  for (const auto& e : edges)
    if (e.weight > 0.0) shortest = std::min(shortest, e.weight);
  if (!std::isfinite(shortest)) return 1.0;
  return 1.0 / std::max(shortest, opt.epsilon);
}

}  // namespace detail

// S_ij = 1 / M_ij on tree edges, 0 elsewhere (including the diagonal).
inline SparseSimilarity similarity_from_mst(const MstDistance& m, const SimilarityOptions& opt = {}) {
  const double cap = detail::duplicate_similarity(m.edges, opt);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(m.edges.size() * 2);
  SparseSimilarity out;
  out.degree = Vector::Zero(m.nodes);
  for (const auto& e : m.edges) {
    if (e.u == e.v) throw InvalidInput("MST contains a self-loop");
    double s;
    if (e.weight > 0.0) {
      s = 1.0 / e.weight;
    } else {
      s = cap;
      ++out.capped_edges;
    }
    t.emplace_back(e.u, e.v, s);
    t.emplace_back(e.v, e.u, s);
    out.degree(e.u) += s;
    out.degree(e.v) += s;
  }
  out.S.resize(m.nodes, m.nodes);
  out.S.setFromTriplets(t.begin(), t.end());
  if (out.capped_edges > 0 && opt.log_warnings)
    warn(std::to_string(out.capped_edges) +
         " zero-length MST edge(s) from duplicate observations; similarity capped at " +
         std::to_string(cap));
  return out;
}

// Similarity row of one observation against the other rows of a buffer,
// from an MST built over the buffer alone.
struct LocalSimilarity {
  Vector row;          // length = buffer rows; row(newest) == 0
  double degree = 0.0; // sum of row
};

inline LocalSimilarity local_mst_similarity(const Matrix& buffer, Index newest,
                                            const SimilarityOptions& opt = {}) {
  if (buffer.rows() < 2)
    throw InvalidInput("local MST needs the newest observation and at least one neighbour");
  if (newest < 0 || newest >= buffer.rows()) throw InvalidInput("newest index out of range");
  const MstDistance tree = mst_from_points(buffer);
  const double cap = detail::duplicate_similarity(tree.edges, opt);
  LocalSimilarity out{Vector::Zero(buffer.rows()), 0.0};
  for (const auto& e : tree.edges) {
    if (e.u != newest && e.v != newest) continue;
    const Index other = e.u == newest ? e.v : e.u;
    out.row(other) = e.weight > 0.0 ? 1.0 / e.weight : cap;
  }
  out.degree = out.row.sum();
  return out;
}

// Debug dump: one "i j weight" line per tree edge, 17 significant digits.
inline void write_edge_list(std::ostream& os, const MstDistance& m) {
  const auto old_flags = os.flags();
  const auto old_precision = os.precision();
  os << std::setprecision(17);
  for (const auto& e : m.edges) os << e.u << ' ' << e.v << ' ' << e.weight << '\n';
  os.flags(old_flags);
  os.precision(old_precision);
}

}  // namespace nsnmf::graph
