#pragma once

#include "cim/constraints.hpp"
#include "cim/diffusion.hpp"
#include "cim/nda.hpp"
#include "cim/tucker.hpp"
#include "cim/types.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

namespace cim {

// ===========================================================================
// Window planning
// ===========================================================================

struct WindowPlan {
  std::vector<TimeWindow> windows;
  Index alpha1 = 1;
  Index beta = 0;
  std::vector<Index> window_nnz;  // stored cells inside each window
};

/// Adaptive window widths: window i starts at t_i and tries the previous
/// window's width first; if the trial width would reach past t_Q it clamps
/// to end exactly at t_Q and planning stops, otherwise the width grows until
/// the window holds at least `beta` stored cells.
template <typename Scalar>
WindowPlan plan_windows(const SparseTensor4<Scalar>& t, Index alpha1,
                        Index beta) {
  const Index q = t.dims()[3];
  if (alpha1 < 1 || alpha1 > q) {
    std::ostringstream msg;
    msg << "alpha1 = " << alpha1 << " outside [1, " << q << "]";
    throw std::invalid_argument(msg.str());
  }
  if (beta < 0) throw std::invalid_argument("beta must be >= 0");

  const std::vector<Index> per_slice = t.slice_nnz();
  std::vector<Index> prefix(static_cast<std::size_t>(q) + 1, 0);
  for (Index s = 0; s < q; ++s) {
    prefix[static_cast<std::size_t>(s) + 1] =
        prefix[static_cast<std::size_t>(s)] + per_slice[static_cast<std::size_t>(s)];
  }
  // nnz of the 1-based window [s, e]
  auto window_nnz = [&prefix](Index s, Index e) {
    return prefix[static_cast<std::size_t>(e)] -
           prefix[static_cast<std::size_t>(s) - 1];
  };

  WindowPlan plan;
  plan.alpha1 = alpha1;
  plan.beta = beta;
  Index alpha = alpha1;
  for (Index start = 1; start <= q; ++start) {
    Index width = 0;
    bool last = false;
    for (Index trial = alpha;; ++trial) {
      if (trial >= q - start + 1) {
        width = q - start + 1;
        last = true;
        break;
      }
      if (window_nnz(start, start + trial - 1) >= beta) {
        width = trial;
        break;
      }
    }
    plan.windows.push_back({start, start + width - 1});
    plan.window_nnz.push_back(window_nnz(start, start + width - 1));
    if (last) break;
    alpha = width;
  }
  return plan;
}

/// Sensible default for the nnz threshold when none is configured.
template <typename Scalar>
Index default_beta(const SparseTensor4<Scalar>& t) {
  return std::max<Index>(32, t.nnz() / std::max<Index>(1, t.dims()[3]));
}

// ===========================================================================
// Per-window fits and the weighted merge
// ===========================================================================

/// Fits the sub-tensor of one window: the TS matrix shrinks to the window
/// width, the other constraints pass through, and the seed comes from hp.
template <typename Scalar>
NdaFit<Scalar> fit_window(const SparseTensor4<Scalar>& t,
                          const ConstraintSet<Scalar>& cs,
                          const HyperParams& hp, TimeWindow window) {
  const SparseTensor4<Scalar> sub = extract_subtensor(t, window);
  const ConstraintSet<Scalar> wcs = with_time_window(cs, window);
  return fit_nda(sub, wcs, hp);
}

/// Merge weight of a window: 2^(-width).
inline double merge_weight(TimeWindow window) {
  return std::ldexp(1.0, -static_cast<int>(window.width()));
}

template <typename Scalar>
struct TwpdaFit {
  Dims4 dims{0, 0, 0, 0};
  WindowPlan plan;
  std::vector<TuckerModel<Scalar>> models;   // one per window, plan order
  std::vector<FitReport> window_reports;
  bool converged = false;  // all windows converged
  double wall_time_seconds = 0;

  /// Weighted merge of one global time slice (0-based): the weight-normalized
  /// sum of the reconstructions of every window covering it, accumulated in
  /// window order.
  DenseSlice<Scalar> merged_slice(Index q,
                                  Index budget = kDefaultSliceBudget) const {
    if (q < 0 || q >= dims[3]) {
      std::ostringstream msg;
      msg << "time index " << q << " out of range [0, " << dims[3] << ")";
      throw std::out_of_range(msg.str());
    }
    const Index t1 = q + 1;  // 1-based time point
    DenseSlice<Scalar> acc;
    double total_weight = 0;
    bool first = true;
    for (std::size_t w = 0; w < plan.windows.size(); ++w) {
      const TimeWindow& win = plan.windows[w];
      if (!win.contains(t1)) continue;
      const Scalar weight = static_cast<Scalar>(merge_weight(win));
      DenseSlice<Scalar> part =
          reconstruct_slice(models[w], t1 - win.start, budget);
      if (first) {
        acc.n = part.n;
        acc.m = part.m;
        acc.values = weight * part.values;
        first = false;
      } else {
        acc.values += weight * part.values;
      }
      total_weight += static_cast<double>(weight);
    }
    if (first) {
      std::ostringstream msg;
      msg << "no window covers time point " << t1 << "; invalid plan";
      throw std::logic_error(msg.str());
    }
    acc.values /= static_cast<Scalar>(total_weight);
    return acc;
  }

  /// Merged estimate of a single cell (for evaluation without materializing
  /// slices).
  Scalar merged_cell(const Cell& c) const {
    const Index t1 = c[3] + 1;
    Scalar acc(0);
    double total_weight = 0;
    bool covered = false;
    for (std::size_t w = 0; w < plan.windows.size(); ++w) {
      const TimeWindow& win = plan.windows[w];
      if (!win.contains(t1)) continue;
      const Scalar weight = static_cast<Scalar>(merge_weight(win));
      const Cell local{c[0], c[1], c[2], t1 - win.start};
      if (covered) {
        acc += weight * reconstruct_cell(models[w], local);
      } else {
        acc = weight * reconstruct_cell(models[w], local);
        covered = true;
      }
      total_weight += static_cast<double>(weight);
    }
    if (!covered) {
      std::ostringstream msg;
      msg << "no window covers time point " << t1 << "; invalid plan";
      throw std::logic_error(msg.str());
    }
    return acc / static_cast<Scalar>(total_weight);
  }
};

using TwpdaFitd = TwpdaFit<double>;

/// Plans windows, fits them with up to `parallelism` concurrent solver runs
/// (window w seeded with hp.seed + w), and returns the fits ready for
/// merging. Results do not depend on scheduling: each window's fit is a
/// deterministic function of its inputs and seed, and merging follows plan
/// order.
template <typename Scalar>
TwpdaFit<Scalar> fit_twpda(const SparseTensor4<Scalar>& t,
                           const ConstraintSet<Scalar>& cs,
                           const HyperParams& hp, Index alpha1, Index beta,
                           Index parallelism = 1) {
  if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
  const auto start = std::chrono::steady_clock::now();

  TwpdaFit<Scalar> fit;
  fit.dims = t.dims();
  fit.plan = plan_windows(t, alpha1, beta);
  const std::size_t count = fit.plan.windows.size();
  fit.models.resize(count);
  fit.window_reports.resize(count);

  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto worker = [&]() {
    while (!stop.load(std::memory_order_relaxed)) {
      const std::size_t w = next.fetch_add(1, std::memory_order_relaxed);
      if (w >= count) return;
      HyperParams whp = hp;
      whp.seed = hp.seed + static_cast<std::uint64_t>(w);
      try {
        NdaFit<Scalar> result = fit_window(t, cs, whp, fit.plan.windows[w]);
        fit.models[w] = std::move(result.model);
        fit.window_reports[w] = std::move(result.report);
      } catch (...) {
        errors[w] = std::current_exception();
        stop.store(true, std::memory_order_relaxed);
      }
    }
  };

  const std::size_t threads =
      std::min<std::size_t>(static_cast<std::size_t>(parallelism), count);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  for (std::size_t w = 0; w < count; ++w) {
    if (!errors[w]) continue;
    const TimeWindow& win = fit.plan.windows[w];
    try {
      std::rethrow_exception(errors[w]);
    } catch (const DivergenceError& e) {
      std::ostringstream msg;
      msg << "window " << (w + 1) << " [" << win.start << ", " << win.end
          << "]";
      throw DivergenceError(e.cell(), e.epoch(), msg.str());
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "window " << (w + 1) << " [" << win.start << ", " << win.end
          << "]: " << e.what();
      throw std::runtime_error(msg.str());
    }
  }

  fit.converged = true;
  for (const FitReport& r : fit.window_reports) {
    fit.converged = fit.converged && r.converged;
  }
  fit.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return fit;
}

}  // namespace cim
