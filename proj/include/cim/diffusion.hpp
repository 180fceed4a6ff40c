#pragma once

#include "cim/random.hpp"
#include "cim/types.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cim {

// ===========================================================================
// Event-log domain model
// ===========================================================================

/// One observed infection: meme `meme` passed from `source` to `dest` at
/// time point `time`. All indices 0-based. Self-infections (source == dest)
/// are valid data and are kept.
struct InfectionEvent {
  Index source = 0;
  Index dest = 0;
  Index meme = 0;
  Index time = 0;

  friend bool operator==(const InfectionEvent&, const InfectionEvent&) = default;
};

struct LogDims {
  Index nodes = 0;
  Index memes = 0;
  Index times = 0;
};

/// A multiset of infections over fixed dimensions. The same 4-tuple may
/// appear many times; each occurrence counts separately.
struct DiffusionLog {
  LogDims dims;
  std::vector<InfectionEvent> events;
};

inline void validate_event(const LogDims& d, const InfectionEvent& e,
                           std::size_t position) {
  const bool bad = e.source < 0 || e.source >= d.nodes || e.dest < 0 ||
                   e.dest >= d.nodes || e.meme < 0 || e.meme >= d.memes ||
                   e.time < 0 || e.time >= d.times;
  if (bad) {
    std::ostringstream msg;
    msg << "event #" << position << " (" << e.source << ", " << e.dest << ", "
        << e.meme << ", " << e.time << ") is out of range for dims (N="
        << d.nodes << ", M=" << d.memes << ", Q=" << d.times << ")";
    throw std::invalid_argument(msg.str());
  }
}

// ===========================================================================
// Sparse 4th-order tensor, coordinate form
// ===========================================================================

/// Coordinate-form sparse tensor of order 4. Cells are kept sorted
/// lexicographically; duplicate coordinates are summed at construction and
/// exact zeros are dropped, so the stored support is the nonzero set.
template <typename Scalar>
class SparseTensor4 {
 public:
  SparseTensor4() : dims_{0, 0, 0, 0} {}

  explicit SparseTensor4(Dims4 dims) : dims_(dims) {
    for (Index d : dims_) {
      if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
    }
  }

  /// Builds from unsorted coordinates; duplicates are accumulated.
  static SparseTensor4 from_coords(Dims4 dims, std::vector<Cell> cells,
                                   std::vector<Scalar> values) {
    if (cells.size() != values.size()) {
      throw std::invalid_argument("coordinate/value size mismatch");
    }
    SparseTensor4 t(dims);
    std::vector<std::size_t> perm(cells.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
      return cells[a] < cells[b];
    });
    for (std::size_t p : perm) {
      const Cell& c = cells[p];
      for (int mode = 0; mode < 4; ++mode) {
        if (c[mode] < 0 || c[mode] >= dims[mode]) {
          std::ostringstream msg;
          msg << "cell (" << c[0] << ", " << c[1] << ", " << c[2] << ", "
              << c[3] << ") is out of range for dims (" << dims[0] << ", "
              << dims[1] << ", " << dims[2] << ", " << dims[3] << ")";
          throw std::invalid_argument(msg.str());
        }
      }
      if (!t.cells_.empty() && t.cells_.back() == c) {
        t.values_.back() += values[p];
      } else {
        t.cells_.push_back(c);
        t.values_.push_back(values[p]);
      }
    }
    t.drop_zeros();
    return t;
  }

  const Dims4& dims() const { return dims_; }
  Index nnz() const { return static_cast<Index>(cells_.size()); }
  const std::vector<Cell>& cells() const { return cells_; }
  const std::vector<Scalar>& values() const { return values_; }

  /// Value at a cell, zero when the cell is not stored.
  Scalar value_at(const Cell& c) const {
    auto it = std::lower_bound(cells_.begin(), cells_.end(), c);
    if (it == cells_.end() || *it != c) return Scalar(0);
    return values_[static_cast<std::size_t>(it - cells_.begin())];
  }

  bool contains(const Cell& c) const {
    return std::binary_search(cells_.begin(), cells_.end(), c);
  }

  Scalar sum() const {
    Scalar s(0);
    for (const Scalar& v : values_) s += v;
    return s;
  }

  /// Number of stored cells per time index.
  std::vector<Index> slice_nnz() const {
    std::vector<Index> counts(static_cast<std::size_t>(dims_[3]), 0);
    for (const Cell& c : cells_) ++counts[static_cast<std::size_t>(c[3])];
    return counts;
  }

 private:
  void drop_zeros() {
    std::size_t keep = 0;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      if (values_[i] != Scalar(0)) {
        cells_[keep] = cells_[i];
        values_[keep] = values_[i];
        ++keep;
      }
    }
    cells_.resize(keep);
    values_.resize(keep);
  }

  Dims4 dims_;
  std::vector<Cell> cells_;
  std::vector<Scalar> values_;
};

using SparseTensor4d = SparseTensor4<double>;

// ===========================================================================
// CDT assembly and slicing
// ===========================================================================

/// Builds the coexisting-diffusions tensor: cell (i, j, m, q) holds the
/// number of log events equal to that 4-tuple.
template <typename Scalar = double>
SparseTensor4<Scalar> assemble_cdt(const DiffusionLog& log) {
  const LogDims& d = log.dims;
  if (d.nodes <= 0 || d.memes <= 0 || d.times <= 0) {
    throw std::invalid_argument("log dims must be positive");
  }
  std::vector<Cell> cells;
  cells.reserve(log.events.size());
  for (std::size_t p = 0; p < log.events.size(); ++p) {
    const InfectionEvent& e = log.events[p];
    validate_event(d, e, p);
    cells.push_back({e.source, e.dest, e.meme, e.time});
  }
  std::vector<Scalar> ones(cells.size(), Scalar(1));
  return SparseTensor4<Scalar>::from_coords({d.nodes, d.nodes, d.memes, d.times},
                                            std::move(cells), std::move(ones));
}

/// The slice at time index q (0-based), reindexed to time 0; dims (N, N, M, 1).
template <typename Scalar>
SparseTensor4<Scalar> time_slice(const SparseTensor4<Scalar>& t, Index q) {
  if (q < 0 || q >= t.dims()[3]) {
    std::ostringstream msg;
    msg << "time index " << q << " out of range [0, " << t.dims()[3] << ")";
    throw std::invalid_argument(msg.str());
  }
  std::vector<Cell> cells;
  std::vector<Scalar> values;
  for (Index e = 0; e < t.nnz(); ++e) {
    const Cell& c = t.cells()[static_cast<std::size_t>(e)];
    if (c[3] == q) {
      cells.push_back({c[0], c[1], c[2], 0});
      values.push_back(t.values()[static_cast<std::size_t>(e)]);
    }
  }
  return SparseTensor4<Scalar>::from_coords(
      {t.dims()[0], t.dims()[1], t.dims()[2], 1}, std::move(cells),
      std::move(values));
}

/// Sliding time window [start, end], both 1-based and inclusive.
struct TimeWindow {
  Index start = 1;
  Index end = 1;

  Index width() const { return end - start + 1; }
  bool contains(Index time_point) const {  // 1-based time point
    return start <= time_point && time_point <= end;
  }
  friend bool operator==(const TimeWindow&, const TimeWindow&) = default;
};

/// Sub-tensor of the slices inside `window`, time reindexed to start at 0;
/// dims (N, N, M, window.width()).
template <typename Scalar>
SparseTensor4<Scalar> extract_subtensor(const SparseTensor4<Scalar>& t,
                                        TimeWindow window) {
  if (window.start < 1 || window.start > window.end ||
      window.end > t.dims()[3]) {
    std::ostringstream msg;
    msg << "window [" << window.start << ", " << window.end
        << "] invalid for Q = " << t.dims()[3];
    throw std::invalid_argument(msg.str());
  }
  const Index lo = window.start - 1;  // 0-based inclusive
  const Index hi = window.end - 1;
  std::vector<Cell> cells;
  std::vector<Scalar> values;
  for (Index e = 0; e < t.nnz(); ++e) {
    const Cell& c = t.cells()[static_cast<std::size_t>(e)];
    if (c[3] >= lo && c[3] <= hi) {
      cells.push_back({c[0], c[1], c[2], c[3] - lo});
      values.push_back(t.values()[static_cast<std::size_t>(e)]);
    }
  }
  return SparseTensor4<Scalar>::from_coords(
      {t.dims()[0], t.dims()[1], t.dims()[2], window.width()},
      std::move(cells), std::move(values));
}

// ===========================================================================
// Synthetic data
// ===========================================================================

enum class SyntheticMode {
  /// Cell values from |standard normal| mapped to counts; for timing runs.
  kGaussianMagnitude,
  /// Values from a random nonnegative Tucker model, top cells kept; gives a
  /// recoverable low-rank ground truth for accuracy experiments.
  kPlantedTucker,
};

namespace detail {

/// Draws `count` distinct linear cell indices out of `total`, sorted.
inline std::vector<std::uint64_t> sample_cells(std::uint64_t total,
                                               std::uint64_t count, Rng& rng) {
  std::vector<std::uint64_t> picked;
  picked.reserve(count);
  if (total <= (1u << 22)) {
    std::vector<std::uint64_t> all(total);
    std::iota(all.begin(), all.end(), std::uint64_t{0});
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t j = i + rng.below(total - i);
      std::swap(all[i], all[j]);
      picked.push_back(all[i]);
    }
  } else {
    // Rejection against a sorted-insert set; densities are tiny at this size.
    std::vector<std::uint64_t> seen;
    seen.reserve(count);
    while (picked.size() < count) {
      const std::uint64_t x = rng.below(total);
      auto it = std::lower_bound(seen.begin(), seen.end(), x);
      if (it != seen.end() && *it == x) continue;
      seen.insert(it, x);
      picked.push_back(x);
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

inline Cell unflatten(std::uint64_t linear, const Dims4& dims) {
  Cell c;
  c[3] = static_cast<Index>(linear % static_cast<std::uint64_t>(dims[3]));
  linear /= static_cast<std::uint64_t>(dims[3]);
  c[2] = static_cast<Index>(linear % static_cast<std::uint64_t>(dims[2]));
  linear /= static_cast<std::uint64_t>(dims[2]);
  c[1] = static_cast<Index>(linear % static_cast<std::uint64_t>(dims[1]));
  linear /= static_cast<std::uint64_t>(dims[1]);
  c[0] = static_cast<Index>(linear);
  return c;
}

inline void validate_synth_args(Index n, Index m, Index q, double density) {
  if (n <= 0 || m <= 0 || q <= 0) {
    throw std::invalid_argument("synthetic dims must be positive");
  }
  if (!(density > 0.0) || density > 1.0) {
    throw std::invalid_argument("density must lie in (0, 1]");
  }
}

}  // namespace detail

/// Magnitude scale used to turn |normal| draws into occurrence counts.
inline constexpr double kGaussianCountScale = 3.0;

/// Deterministic synthetic event log. Density is the fraction of the N*N*M*Q
/// cells that receive at least one event.
inline DiffusionLog generate_synthetic(Index n, Index m, Index q,
                                       double density, SyntheticMode mode,
                                       std::uint64_t seed,
                                       Index planted_rank = 3) {
  detail::validate_synth_args(n, m, q, density);
  const Dims4 dims{n, n, m, q};
  const std::uint64_t total = static_cast<std::uint64_t>(n) *
                              static_cast<std::uint64_t>(n) *
                              static_cast<std::uint64_t>(m) *
                              static_cast<std::uint64_t>(q);
  const std::uint64_t target =
      static_cast<std::uint64_t>(std::llround(density * static_cast<double>(total)));

  DiffusionLog log;
  log.dims = {n, m, q};

  Rng rng(seed);
  auto append = [&log](const Cell& c, long long count) {
    for (long long r = 0; r < count; ++r) {
      log.events.push_back({c[0], c[1], c[2], c[3]});
    }
  };

  if (mode == SyntheticMode::kGaussianMagnitude) {
    if (target == 0) return log;
    const auto picked = detail::sample_cells(total, target, rng);
    for (std::uint64_t linear : picked) {
      const double x = rng.normal();
      const long long count = std::max(
          1ll, std::llround(std::abs(x) * kGaussianCountScale));
      append(detail::unflatten(linear, dims), count);
    }
    return log;
  }

  // Planted Tucker ground truth: dense evaluation, so bound the size.
  constexpr std::uint64_t kPlantedBudget = 1ull << 26;  // cells
  if (total > kPlantedBudget) {
    throw std::invalid_argument(
        "planted-tucker generation needs a dense pass; N*N*M*Q exceeds the "
        "supported budget");
  }
  if (planted_rank < 1) throw std::invalid_argument("planted rank must be >= 1");
  if (target == 0) return log;

  const Index r = planted_rank;
  const Index r4 = r * r * r * r;
  Vectord core(r4);
  for (Index i = 0; i < r4; ++i) core[i] = rng.uniform();
  auto draw_factor = [&rng](Index rows, Index cols) {
    Matrixd f(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) f(i, j) = rng.uniform();
    return f;
  };
  const Matrixd src = draw_factor(n, r);
  const Matrixd dst = draw_factor(n, r);
  const Matrixd meme = draw_factor(m, r);
  const Matrixd time = draw_factor(q, r);

  std::vector<double> value(static_cast<std::size_t>(total));
  std::size_t pos = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      for (Index k = 0; k < m; ++k) {
        for (Index l = 0; l < q; ++l) {
          double v = 0.0;
          for (Index a = 0; a < r; ++a)
            for (Index b = 0; b < r; ++b)
              for (Index c = 0; c < r; ++c)
                for (Index d = 0; d < r; ++d)
                  v += core[((a * r + b) * r + c) * r + d] * src(i, a) *
                       dst(j, b) * meme(k, c) * time(l, d);
          value[pos++] = v;
        }
      }
    }
  }

  // Keep the `target` largest cells; threshold ties admitted in coordinate
  // order until the target is reached.
  std::vector<double> sorted(value);
  std::nth_element(sorted.begin(),
                   sorted.begin() + static_cast<std::ptrdiff_t>(target - 1),
                   sorted.end(), std::greater<double>());
  const double threshold = sorted[static_cast<std::size_t>(target - 1)];
  const double vmax = *std::max_element(value.begin(), value.end());
  constexpr double kMaxCount = 5.0;

  std::uint64_t kept = 0;
  for (std::uint64_t linear = 0; linear < total && kept < target; ++linear) {
    const double v = value[static_cast<std::size_t>(linear)];
    if (v < threshold) continue;
    const long long count =
        std::max(1ll, std::llround(v / vmax * kMaxCount));
    append(detail::unflatten(linear, dims), count);
    ++kept;
  }
  return log;
}

/// Raw-normal synthetic tensor: cells get standard-normal values directly
/// (no count mapping). Matches the count-mode support for the same seed.
inline SparseTensor4d generate_synthetic_raw(Index n, Index m, Index q,
                                             double density,
                                             std::uint64_t seed) {
  detail::validate_synth_args(n, m, q, density);
  const Dims4 dims{n, n, m, q};
  const std::uint64_t total = static_cast<std::uint64_t>(n) *
                              static_cast<std::uint64_t>(n) *
                              static_cast<std::uint64_t>(m) *
                              static_cast<std::uint64_t>(q);
  const std::uint64_t target =
      static_cast<std::uint64_t>(std::llround(density * static_cast<double>(total)));
  std::vector<Cell> cells;
  std::vector<double> values;
  if (target > 0) {
    Rng rng(seed);
    const auto picked = detail::sample_cells(total, target, rng);
    cells.reserve(picked.size());
    values.reserve(picked.size());
    for (std::uint64_t linear : picked) {
      cells.push_back(detail::unflatten(linear, dims));
      values.push_back(rng.normal());
    }
  }
  return SparseTensor4d::from_coords(dims, std::move(cells), std::move(values));
}

}  // namespace cim
