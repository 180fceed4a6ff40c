#include "cim/evaluation.hpp"

#include "cim/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cim {

HoldoutSplit make_holdout(const SparseTensor4d& t, double fraction,
                          std::uint64_t seed) {
  if (!(fraction > 0.0) || !(fraction < 1.0)) {
    throw std::invalid_argument("removal fraction must lie in (0, 1)");
  }
  const Index nnz = t.nnz();
  if (nnz < 1) throw std::invalid_argument("tensor has no cells to remove");
  const auto removed = static_cast<Index>(
      std::llround(fraction * static_cast<double>(nnz)));
  if (removed < 1) {
    std::ostringstream msg;
    msg << "fraction " << fraction << " of " << nnz
        << " cells rounds to an empty test set";
    throw std::invalid_argument(msg.str());
  }

  std::vector<Index> perm(static_cast<std::size_t>(nnz));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  for (Index i = 0; i < removed; ++i) {
    const auto j =
        i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(nnz - i)));
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(j)]);
  }
  std::vector<bool> is_test(static_cast<std::size_t>(nnz), false);
  for (Index i = 0; i < removed; ++i) {
    is_test[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = true;
  }

  HoldoutSplit split;
  split.removal_fraction = fraction;
  split.seed = seed;
  std::vector<Cell> train_cells;
  std::vector<double> train_values;
  train_cells.reserve(static_cast<std::size_t>(nnz - removed));
  train_values.reserve(static_cast<std::size_t>(nnz - removed));
  for (Index e = 0; e < nnz; ++e) {
    const Cell& c = t.cells()[static_cast<std::size_t>(e)];
    const double v = t.values()[static_cast<std::size_t>(e)];
    if (is_test[static_cast<std::size_t>(e)]) {
      split.test_cells.push_back(c);
      split.test_values.push_back(v);
    } else {
      train_cells.push_back(c);
      train_values.push_back(v);
    }
  }
  split.train = SparseTensor4d::from_coords(t.dims(), std::move(train_cells),
                                            std::move(train_values));
  return split;
}

namespace {

void check_estimates(const HoldoutSplit& split,
                     const std::vector<double>& estimates) {
  if (estimates.size() != split.test_cells.size()) {
    std::ostringstream msg;
    msg << "got " << estimates.size() << " estimates for "
        << split.test_cells.size() << " held-out cells";
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

double recovery_accuracy(const HoldoutSplit& split,
                         const std::vector<double>& estimates) {
  check_estimates(split, estimates);
  if (estimates.empty()) return 0.0;
  Index hits = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (split.test_values[i] * estimates[i] > 0.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(estimates.size());
}

double rmse(const HoldoutSplit& split, const std::vector<double>& estimates) {
  check_estimates(split, estimates);
  if (estimates.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double d = split.test_values[i] - estimates[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(estimates.size()));
}

std::vector<double> estimates_from_model(const TuckerModeld& m,
                                         const std::vector<Cell>& cells) {
  std::vector<double> out;
  out.reserve(cells.size());
  for (const Cell& c : cells) out.push_back(reconstruct_cell(m, c));
  return out;
}

std::vector<double> estimates_from_twpda(const TwpdaFitd& fit,
                                         const std::vector<Cell>& cells) {
  std::vector<double> out;
  out.reserve(cells.size());
  for (const Cell& c : cells) out.push_back(fit.merged_cell(c));
  return out;
}

std::string method_label(Method m) {
  switch (m) {
    case Method::kTd: return "TD";
    case Method::kTdX: return "TD+X";
    case Method::kTdXY: return "TD+X+Y";
    case Method::kTdXYZ: return "TD+X+Y+Z";
    case Method::kCimNda: return "CIM-NDA";
    case Method::kCimTwpda: return "CIM-TWPDA";
  }
  throw std::invalid_argument("unknown method");
}

HyperParams apply_method(Method m, HyperParams hp) {
  hp.use_sda = false;
  hp.use_nma = false;
  hp.use_mc = false;
  hp.use_ts = false;
  switch (m) {
    case Method::kTd:
      break;
    case Method::kTdX:
      hp.use_sda = true;
      break;
    case Method::kTdXY:
      hp.use_sda = hp.use_nma = true;
      break;
    case Method::kTdXYZ:
      hp.use_sda = hp.use_nma = hp.use_mc = true;
      break;
    case Method::kCimNda:
    case Method::kCimTwpda:
      hp.use_sda = hp.use_nma = hp.use_mc = hp.use_ts = true;
      break;
  }
  return hp;
}

std::vector<EvalReport> run_ablation(const SparseTensor4d& cdt,
                                     const ConstraintSetd& cs,
                                     const HyperParams& hp,
                                     const AblationOptions& opts) {
  std::vector<Method> methods{Method::kTd, Method::kTdX, Method::kTdXY,
                              Method::kTdXYZ, Method::kCimNda};
  if (opts.include_twpda) methods.push_back(Method::kCimTwpda);

  std::vector<EvalReport> reports;
  for (double fraction : opts.fractions) {
    for (std::uint64_t seed : opts.seeds) {
      const HoldoutSplit split = make_holdout(cdt, fraction, seed);
      for (Method m : methods) {
        HyperParams mhp = apply_method(m, hp);
        mhp.seed = seed;
        EvalReport report;
        report.method = method_label(m);
        report.removal_fraction = fraction;
        report.seed = seed;
        std::vector<double> estimates;
        if (m == Method::kCimTwpda) {
          const Index beta =
              opts.beta >= 0 ? opts.beta : default_beta(split.train);
          const Index alpha1 =
              std::min<Index>(opts.alpha1, split.train.dims()[3]);
          TwpdaFitd fit = fit_twpda(split.train, cs, mhp, alpha1, beta,
                                    opts.parallelism);
          report.wall_time_seconds = fit.wall_time_seconds;
          estimates = estimates_from_twpda(fit, split.test_cells);
        } else {
          NdaFit<double> fit = fit_nda(split.train, cs, mhp);
          report.wall_time_seconds = fit.report.wall_time_seconds;
          estimates = estimates_from_model(fit.model, split.test_cells);
        }
        report.ra = recovery_accuracy(split, estimates);
        report.rmse = cim::rmse(split, estimates);
        reports.push_back(std::move(report));
      }
    }
  }
  return reports;
}

std::vector<BenchRow> run_benchmark(const std::vector<BenchSize>& sizes,
                                    const HyperParams& hp,
                                    const BenchOptions& opts) {
  std::vector<BenchRow> rows;
  for (const BenchSize& size : sizes) {
    const DiffusionLog log =
        generate_synthetic(size.nodes, size.memes, size.times, size.density,
                           SyntheticMode::kGaussianMagnitude, opts.seed);
    const SparseTensor4d cdt = assemble_cdt(log);
    const ConstraintSetd cs = build_constraints(log);
    const Index beta = opts.beta >= 0 ? opts.beta : default_beta(cdt);
    const Index alpha1 = std::min<Index>(opts.alpha1, cdt.dims()[3]);

    BenchRow nda_row;
    nda_row.nodes = size.nodes;
    nda_row.memes = size.memes;
    nda_row.times = size.times;
    nda_row.nnz = cdt.nnz();
    nda_row.solver = "nda";
    nda_row.threads = 1;
    {
      const NdaFit<double> fit = fit_nda(cdt, cs, hp);
      nda_row.wall_time_seconds = fit.report.wall_time_seconds;
    }
    rows.push_back(nda_row);

    double single_thread_time = 0;
    for (Index threads : opts.thread_counts) {
      BenchRow row = nda_row;
      row.solver = "twpda";
      row.threads = threads;
      const TwpdaFitd fit = fit_twpda(cdt, cs, hp, alpha1, beta, threads);
      row.wall_time_seconds = fit.wall_time_seconds;
      if (threads == 1) single_thread_time = row.wall_time_seconds;
      row.speedup = single_thread_time > 0 && row.wall_time_seconds > 0
                        ? single_thread_time / row.wall_time_seconds
                        : 0;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace cim
