#pragma once

#include "cim/diffusion.hpp"
#include "cim/types.hpp"

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace cim {

// ===========================================================================
// Reaction graph
// ===========================================================================

/// Per-node reaction counts: f(i, j) is how often node i reacted to node j.
/// In event terms, an infection with dest = i and source = j is one reaction
/// of i to j. Neighbor sets keep insertion sorted by j.
class ReactionGraph {
 public:
  ReactionGraph() = default;

  explicit ReactionGraph(Index n) : adj_(static_cast<std::size_t>(n)) {}

  Index node_count() const { return static_cast<Index>(adj_.size()); }

  /// Sorted (neighbor, count) pairs for node i; the neighbor set F_i.
  const std::vector<std::pair<Index, long long>>& neighbors(Index i) const {
    return adj_[static_cast<std::size_t>(i)];
  }

  long long reaction_count(Index i, Index j) const {
    const auto& row = adj_[static_cast<std::size_t>(i)];
    auto it = std::lower_bound(
        row.begin(), row.end(), j,
        [](const std::pair<Index, long long>& p, Index key) { return p.first < key; });
    if (it == row.end() || it->first != j) return 0;
    return it->second;
  }

  static ReactionGraph from_log(const DiffusionLog& log) {
    ReactionGraph g(log.dims.nodes);
    std::vector<std::pair<Index, Index>> pairs;  // (reactor, reacted-to)
    pairs.reserve(log.events.size());
    for (std::size_t p = 0; p < log.events.size(); ++p) {
      validate_event(log.dims, log.events[p], p);
      pairs.emplace_back(log.events[p].dest, log.events[p].source);
    }
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t p = 0; p < pairs.size();) {
      std::size_t run = p + 1;
      while (run < pairs.size() && pairs[run] == pairs[p]) ++run;
      g.adj_[static_cast<std::size_t>(pairs[p].first)].emplace_back(
          pairs[p].second, static_cast<long long>(run - p));
      p = run;
    }
    return g;
  }

 private:
  std::vector<std::vector<std::pair<Index, long long>>> adj_;
};

inline ReactionGraph reaction_graph_from_log(const DiffusionLog& log) {
  return ReactionGraph::from_log(log);
}

// ===========================================================================
// Constraint matrix builders
// ===========================================================================

/// Social-distance attenuation, N×N. For j in F_i the entry is the mid-rank
/// fraction of f_ij among all of F_i (v_j ties with itself, contributing
/// 0.5), so a single neighbor scores 0.5 and entries lie in (0, 1]. Rows
/// with empty F_i are zero.
template <typename Scalar = double>
Matrix<Scalar> build_sda(const ReactionGraph& g) {
  const Index n = g.node_count();
  Matrix<Scalar> x = Matrix<Scalar>::Zero(n, n);
  std::vector<long long> counts;
  for (Index i = 0; i < n; ++i) {
    const auto& row = g.neighbors(i);
    if (row.empty()) continue;
    counts.clear();
    counts.reserve(row.size());
    for (const auto& [j, f] : row) counts.push_back(f);
    std::sort(counts.begin(), counts.end());
    const Scalar denom = static_cast<Scalar>(row.size());
    for (const auto& [j, f] : row) {
      const auto lo = std::lower_bound(counts.begin(), counts.end(), f);
      const auto hi = std::upper_bound(counts.begin(), counts.end(), f);
      const Scalar below = static_cast<Scalar>(lo - counts.begin());
      const Scalar ties = static_cast<Scalar>(hi - lo);
      x(i, j) = (below + Scalar(0.5) * ties) / denom;
    }
  }
  return x;
}

/// Node–meme affinity, N×M: row i is the meme distribution of inbound
/// infections at node i, all-zero when the node receives nothing.
template <typename Scalar = double>
Matrix<Scalar> build_nma(const DiffusionLog& log) {
  const Index n = log.dims.nodes;
  const Index m = log.dims.memes;
  Matrix<Scalar> counts = Matrix<Scalar>::Zero(n, m);
  for (std::size_t p = 0; p < log.events.size(); ++p) {
    validate_event(log.dims, log.events[p], p);
    counts(log.events[p].dest, log.events[p].meme) += Scalar(1);
  }
  for (Index i = 0; i < n; ++i) {
    const Scalar total = counts.row(i).sum();
    if (total > Scalar(0)) counts.row(i) /= total;
  }
  return counts;
}

template <typename Scalar>
struct McMatrices {
  Matrix<Scalar> z;          // Jaccard meme-correlation matrix, M×M
  Matrix<Scalar> k;          // diagonal of Z row sums
  Matrix<Scalar> laplacian;  // K − Z, positive semidefinite
};

/// Meme correlation via Jaccard similarity of destination-node sets, plus
/// the Laplacian pieces. Memes with empty destination sets give zero rows.
template <typename Scalar = double>
McMatrices<Scalar> build_mc(const DiffusionLog& log) {
  const Index m = log.dims.memes;
  std::vector<std::vector<Index>> dests(static_cast<std::size_t>(m));
  for (std::size_t p = 0; p < log.events.size(); ++p) {
    validate_event(log.dims, log.events[p], p);
    dests[static_cast<std::size_t>(log.events[p].meme)].push_back(
        log.events[p].dest);
  }
  for (auto& d : dests) {
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
  }

  McMatrices<Scalar> out;
  out.z = Matrix<Scalar>::Zero(m, m);
  for (Index a = 0; a < m; ++a) {
    const auto& na = dests[static_cast<std::size_t>(a)];
    for (Index b = a; b < m; ++b) {
      const auto& nb = dests[static_cast<std::size_t>(b)];
      if (na.empty() && nb.empty()) continue;
      std::vector<Index> common;
      std::set_intersection(na.begin(), na.end(), nb.begin(), nb.end(),
                            std::back_inserter(common));
      const auto inter = static_cast<Scalar>(common.size());
      const Scalar uni = static_cast<Scalar>(na.size() + nb.size()) - inter;
      const Scalar v = uni > Scalar(0) ? inter / uni : Scalar(0);
      out.z(a, b) = v;
      out.z(b, a) = v;
    }
  }
  out.k = Matrix<Scalar>::Zero(m, m);
  for (Index a = 0; a < m; ++a) out.k(a, a) = out.z.row(a).sum();
  out.laplacian = out.k - out.z;
  return out;
}

/// Temporal smoothing matrix: Q×Q with ones on the superdiagonal.
template <typename Scalar = double>
Matrix<Scalar> build_ts_matrix(Index q) {
  if (q < 1) throw std::invalid_argument("time-point count must be >= 1");
  Matrix<Scalar> u = Matrix<Scalar>::Zero(q, q);
  for (Index i = 0; i + 1 < q; ++i) u(i, i + 1) = Scalar(1);
  return u;
}

// ===========================================================================
// Bundled constraint set
// ===========================================================================

template <typename Scalar = double>
struct ConstraintSet {
  Matrix<Scalar> x;          // SDA, N×N
  Matrix<Scalar> y;          // NMA, N×M
  Matrix<Scalar> z;          // MC, M×M
  Matrix<Scalar> k;          // MC row-sum diagonal, M×M
  Matrix<Scalar> laplacian;  // K − Z
  Matrix<Scalar> u;          // TS, Q×Q

  Index nodes() const { return x.rows(); }
  Index memes() const { return z.rows(); }
  Index times() const { return u.rows(); }
};

using ConstraintSetd = ConstraintSet<double>;

/// Builds all four constraint matrices from one auxiliary log. `times`
/// overrides the TS dimension when the target CDT spans a different Q than
/// the auxiliary log (pass 0 to use the log's own Q).
template <typename Scalar = double>
ConstraintSet<Scalar> build_constraints(const DiffusionLog& log,
                                        Index times = 0) {
  ConstraintSet<Scalar> cs;
  cs.x = build_sda<Scalar>(reaction_graph_from_log(log));
  cs.y = build_nma<Scalar>(log);
  McMatrices<Scalar> mc = build_mc<Scalar>(log);
  cs.z = std::move(mc.z);
  cs.k = std::move(mc.k);
  cs.laplacian = std::move(mc.laplacian);
  cs.u = build_ts_matrix<Scalar>(times > 0 ? times : log.dims.times);
  return cs;
}

/// The constraint set a window's fit sees: X, Y, Z pass through; the TS
/// matrix is rebuilt at the window's width.
template <typename Scalar>
ConstraintSet<Scalar> with_time_window(const ConstraintSet<Scalar>& cs,
                                       TimeWindow window) {
  ConstraintSet<Scalar> out = cs;
  out.u = build_ts_matrix<Scalar>(window.width());
  return out;
}

}  // namespace cim
