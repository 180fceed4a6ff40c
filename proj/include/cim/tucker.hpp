#pragma once

#include "cim/random.hpp"
#include "cim/types.hpp"

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cim {

/// Tucker model of a 4th-order tensor: a small R×R×R×R core contracted with
/// one factor matrix per mode. The core is stored flat in row-major order,
/// index ((a·R + b)·R + c)·R + d.
template <typename Scalar>
struct TuckerModel {
  Index rank = 0;
  Vector<Scalar> core;         // R^4 entries
  Matrix<Scalar> src_factor;   // N×R, mode 1
  Matrix<Scalar> dst_factor;   // N×R, mode 2
  Matrix<Scalar> meme_factor;  // M×R, mode 3
  Matrix<Scalar> time_factor;  // Q×R, mode 4

  Dims4 dims() const {
    return {src_factor.rows(), dst_factor.rows(), meme_factor.rows(),
            time_factor.rows()};
  }

  const Matrix<Scalar>& factor(int mode) const {
    switch (mode) {
      case 1: return src_factor;
      case 2: return dst_factor;
      case 3: return meme_factor;
      case 4: return time_factor;
      default: throw std::invalid_argument("mode must be in 1..4");
    }
  }

  Matrix<Scalar>& factor(int mode) {
    return const_cast<Matrix<Scalar>&>(
        static_cast<const TuckerModel&>(*this).factor(mode));
  }

  bool all_finite() const {
    return core.allFinite() && src_factor.allFinite() &&
           dst_factor.allFinite() && meme_factor.allFinite() &&
           time_factor.allFinite();
  }

  friend bool operator==(const TuckerModel& a, const TuckerModel& b) {
    return a.rank == b.rank && a.core == b.core &&
           a.src_factor == b.src_factor && a.dst_factor == b.dst_factor &&
           a.meme_factor == b.meme_factor && a.time_factor == b.time_factor;
  }
};

using TuckerModeld = TuckerModel<double>;

namespace detail {

template <typename Scalar>
void check_cell_in_dims(const TuckerModel<Scalar>& m, const Cell& c) {
  const Dims4 d = m.dims();
  for (int mode = 0; mode < 4; ++mode) {
    if (c[mode] < 0 || c[mode] >= d[mode]) {
      std::ostringstream msg;
      msg << "cell index " << c[mode] << " out of range for mode " << (mode + 1)
          << " (dim " << d[mode] << ")";
      throw std::out_of_range(msg.str());
    }
  }
}

}  // namespace detail

/// Contraction of the core with the fixed factor rows of the three modes
/// other than `mode`: the returned R-vector g satisfies
/// reconstruct_cell = dot(g, factor(mode).row at the cell). It is also the
/// partial derivative of the cell reconstruction w.r.t. that factor row.
template <typename Scalar>
RowVector<Scalar> contracted_row_gradient(const TuckerModel<Scalar>& m,
                                          const Cell& c, int mode) {
  if (mode < 1 || mode > 4) throw std::invalid_argument("mode must be in 1..4");
  detail::check_cell_in_dims(m, c);
  const Index r = m.rank;
  const auto s = m.src_factor.row(c[0]);
  const auto d = m.dst_factor.row(c[1]);
  const auto mm = m.meme_factor.row(c[2]);
  const auto t = m.time_factor.row(c[3]);
  RowVector<Scalar> g = RowVector<Scalar>::Zero(r);
  Index flat = 0;
  for (Index a = 0; a < r; ++a) {
    const Scalar ws = mode == 1 ? Scalar(1) : s[a];
    for (Index b = 0; b < r; ++b) {
      const Scalar wd = mode == 2 ? ws : ws * d[b];
      for (Index cc = 0; cc < r; ++cc) {
        const Scalar wm = mode == 3 ? wd : wd * mm[cc];
        for (Index e = 0; e < r; ++e, ++flat) {
          const Scalar wt = mode == 4 ? wm : wm * t[e];
          const Index out = mode == 1 ? a : mode == 2 ? b : mode == 3 ? cc : e;
          g[out] += m.core[flat] * wt;
        }
      }
    }
  }
  return g;
}

/// One cell of the reconstruction: core contracted with the four factor rows.
template <typename Scalar>
Scalar reconstruct_cell(const TuckerModel<Scalar>& m, const Cell& c) {
  RowVector<Scalar> g = contracted_row_gradient(m, c, 1);
  return g.dot(m.src_factor.row(c[0]));
}

/// Rank-one contribution of a cell to the core gradient:
/// outer(S_i*, D_j*, C_k*, T_l*) flattened in core order.
template <typename Scalar>
Vector<Scalar> core_outer(const TuckerModel<Scalar>& m, const Cell& c) {
  detail::check_cell_in_dims(m, c);
  const Index r = m.rank;
  const auto s = m.src_factor.row(c[0]);
  const auto d = m.dst_factor.row(c[1]);
  const auto mm = m.meme_factor.row(c[2]);
  const auto t = m.time_factor.row(c[3]);
  Vector<Scalar> g(r * r * r * r);
  Index flat = 0;
  for (Index a = 0; a < r; ++a)
    for (Index b = 0; b < r; ++b)
      for (Index cc = 0; cc < r; ++cc)
        for (Index e = 0; e < r; ++e, ++flat)
          g[flat] = s[a] * d[b] * mm[cc] * t[e];
  return g;
}

/// One dense time slice of the reconstruction; layout is meme-major blocks of
/// N×N matrices (see DenseSlice::at).
template <typename Scalar>
struct DenseSlice {
  Index n = 0;
  Index m = 0;
  Vector<Scalar> values;  // size n·n·m, index ((k·n + i)·n + j)

  Scalar at(Index i, Index j, Index k) const {
    return values[(k * n + i) * n + j];
  }
};

using DenseSliced = DenseSlice<double>;

inline constexpr Index kDefaultSliceBudget = Index(1) << 27;  // scalars

/// Dense N×N×M slice at time q. Refuses slices whose element count exceeds
/// `budget`; query cells individually in that case.
template <typename Scalar>
DenseSlice<Scalar> reconstruct_slice(const TuckerModel<Scalar>& m, Index q,
                                     Index budget = kDefaultSliceBudget) {
  const Dims4 dims = m.dims();
  if (q < 0 || q >= dims[3]) {
    std::ostringstream msg;
    msg << "time index " << q << " out of range [0, " << dims[3] << ")";
    throw std::out_of_range(msg.str());
  }
  const Index n = dims[0];
  const Index mm = dims[2];
  if (n * n * mm > budget) {
    std::ostringstream msg;
    msg << "dense slice of " << n << "x" << n << "x" << mm << " = "
        << n * n * mm << " cells exceeds the memory budget of " << budget
        << "; reconstruct cells individually instead";
    throw std::length_error(msg.str());
  }
  const Index r = m.rank;

  // Core contracted with the time row -> w[a,b,c], then with each meme row
  // -> P (R×R), then slice_k = S P Dᵀ.
  Vector<Scalar> w = Vector<Scalar>::Zero(r * r * r);
  const auto t = m.time_factor.row(q);
  for (Index a = 0; a < r; ++a)
    for (Index b = 0; b < r; ++b)
      for (Index cc = 0; cc < r; ++cc) {
        Scalar acc(0);
        for (Index e = 0; e < r; ++e)
          acc += m.core[((a * r + b) * r + cc) * r + e] * t[e];
        w[(a * r + b) * r + cc] = acc;
      }

  DenseSlice<Scalar> out;
  out.n = n;
  out.m = mm;
  out.values.resize(n * n * mm);
  Matrix<Scalar> p(r, r);
  for (Index k = 0; k < mm; ++k) {
    const auto crow = m.meme_factor.row(k);
    for (Index a = 0; a < r; ++a)
      for (Index b = 0; b < r; ++b) {
        Scalar acc(0);
        for (Index cc = 0; cc < r; ++cc) acc += w[(a * r + b) * r + cc] * crow[cc];
        p(a, b) = acc;
      }
    Matrix<Scalar> block = m.src_factor * p * m.dst_factor.transpose();
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) out.values[(k * n + i) * n + j] = block(i, j);
  }
  return out;
}

inline constexpr double kInitScale = 0.1;

/// Random model with entries uniform on [0, kInitScale). Draw order is
/// pinned (core, then source/destination/meme/time factors, each row-major)
/// so a seed fully determines the model.
template <typename Scalar = double>
TuckerModel<Scalar> init_model(Dims4 dims, Index rank, std::uint64_t seed) {
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  for (Index d : dims) {
    if (d <= 0) throw std::invalid_argument("model dims must be positive");
  }
  TuckerModel<Scalar> m;
  m.rank = rank;
  Rng rng(seed);
  const Index r4 = rank * rank * rank * rank;
  m.core.resize(r4);
  for (Index i = 0; i < r4; ++i)
    m.core[i] = static_cast<Scalar>(rng.uniform(0.0, kInitScale));
  auto draw = [&rng, rank](Index rows) {
    Matrix<Scalar> f(rows, rank);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < rank; ++j)
        f(i, j) = static_cast<Scalar>(rng.uniform(0.0, kInitScale));
    return f;
  };
  m.src_factor = draw(dims[0]);
  m.dst_factor = draw(dims[1]);
  m.meme_factor = draw(dims[2]);
  m.time_factor = draw(dims[3]);
  return m;
}

}  // namespace cim
