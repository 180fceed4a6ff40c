#pragma once

#include "cim/constraints.hpp"
#include "cim/diffusion.hpp"
#include "cim/nda.hpp"
#include "cim/twpda.hpp"
#include "cim/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cim {

// ===========================================================================
// Holdout splits and metrics
// ===========================================================================

struct HoldoutSplit {
  SparseTensor4d train;
  std::vector<Cell> test_cells;     // sorted
  std::vector<double> test_values;  // ground truth, aligned with test_cells
  double removal_fraction = 0;
  std::uint64_t seed = 0;

  Index test_count() const { return static_cast<Index>(test_cells.size()); }
};

/// Removes round(fraction · nnz) cells uniformly at random; their original
/// values become the ground truth.
HoldoutSplit make_holdout(const SparseTensor4d& t, double fraction,
                          std::uint64_t seed);

/// Fraction of held-out cells whose truth × estimate is strictly positive.
double recovery_accuracy(const HoldoutSplit& split,
                         const std::vector<double>& estimates);

/// Root mean squared error over the held-out cells only.
double rmse(const HoldoutSplit& split, const std::vector<double>& estimates);

std::vector<double> estimates_from_model(const TuckerModeld& m,
                                         const std::vector<Cell>& cells);

std::vector<double> estimates_from_twpda(const TwpdaFitd& fit,
                                         const std::vector<Cell>& cells);

// ===========================================================================
// Ablation ladder
// ===========================================================================

enum class Method {
  kTd,        // plain decomposition, all constraints off
  kTdX,       // + SDA
  kTdXY,      // + NMA
  kTdXYZ,     // + MC
  kCimNda,    // all four constraints
  kCimTwpda,  // all four constraints, windowed parallel solver
};

std::string method_label(Method m);

/// Constraint toggles for one rung of the ladder, applied to a base config.
HyperParams apply_method(Method m, HyperParams hp);

struct EvalReport {
  std::string method;
  double removal_fraction = 0;
  std::uint64_t seed = 0;
  double ra = 0;
  double rmse = 0;
  double wall_time_seconds = 0;
};

struct AblationOptions {
  std::vector<double> fractions{0.2, 0.3, 0.4, 0.5};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  bool include_twpda = false;
  Index alpha1 = 2;
  Index beta = -1;  // negative: default_beta of each train tensor
  Index parallelism = 1;
};

/// Runs every ladder method on shared holdout splits (one split per
/// fraction × seed) and reports RA/RMSE per (method, fraction, seed).
std::vector<EvalReport> run_ablation(const SparseTensor4d& cdt,
                                     const ConstraintSetd& cs,
                                     const HyperParams& hp,
                                     const AblationOptions& opts);

// ===========================================================================
// Scalability benchmarks
// ===========================================================================

struct BenchSize {
  Index nodes = 0;
  Index memes = 2;
  Index times = 35;
  double density = 1e-4;
};

struct BenchRow {
  Index nodes = 0;
  Index memes = 0;
  Index times = 0;
  Index nnz = 0;
  std::string solver;  // "nda" or "twpda"
  Index threads = 1;
  double wall_time_seconds = 0;
  double speedup = 0;  // vs single-thread twpda of the same size; 0 for nda
};

struct BenchOptions {
  std::vector<Index> thread_counts{1, 2, 4};
  Index alpha1 = 2;
  Index beta = -1;
  std::uint64_t seed = 7;
};

/// Times NDA and TWPDA per size and thread count on synthetic data.
std::vector<BenchRow> run_benchmark(const std::vector<BenchSize>& sizes,
                                    const HyperParams& hp,
                                    const BenchOptions& opts);

}  // namespace cim
