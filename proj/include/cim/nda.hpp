#pragma once

#include "cim/constraints.hpp"
#include "cim/diffusion.hpp"
#include "cim/random.hpp"
#include "cim/tucker.hpp"
#include "cim/types.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cim {

// ===========================================================================
// Hyperparameters and reports
// ===========================================================================

/// Solver settings. The lambda names follow the roles of the constraint
/// terms rather than numeric subscripts; defaults are the experiment
/// settings (rank 3, epsilon 0.01, sda/nma 1, mc 0.3, ts/reg 0.05,
/// eta 0.001).
struct HyperParams {
  double lambda_sda = 1.0;
  double lambda_nma = 1.0;
  double lambda_mc = 0.3;
  double lambda_ts = 0.05;
  double lambda_reg = 0.05;
  double eta = 1e-3;
  double epsilon = 1e-2;
  Index max_epochs = 200;
  Index rank = 3;
  std::uint64_t seed = 1;

  // Constraint toggles; all-off with regularization kept is the plain-TD
  // baseline of the ablation ladder.
  bool use_sda = true;
  bool use_nma = true;
  bool use_mc = true;
  bool use_ts = true;

  // Reshuffle the cell order each epoch (default: sorted index order).
  bool shuffle = false;
  // Divide constraint gradients by nnz so their effective weight does not
  // scale with the number of observed cells. Off by default: the per-cell
  // loop applies them at full strength at every cell.
  bool normalize_constraint_gradients = false;
};

/// Raw (unweighted) objective terms and the weighted total.
template <typename Scalar>
struct ObjectiveTermsT {
  Scalar recon = 0;  // squared residual over observed cells
  Scalar reg = 0;    // squared norms of core and factors
  Scalar sda = 0;    // ||X - S D^T||_F^2
  Scalar nma = 0;    // ||Y - D C^T||_F^2
  Scalar mc = 0;     // tr(C^T (K - Z) C)
  Scalar ts = 0;     // ||T - U T||_F^2
  Scalar total = 0;
};

using ObjectiveTerms = ObjectiveTermsT<double>;

struct FitReport {
  std::vector<ObjectiveTerms> loss_trace;  // one entry per completed epoch
  double initial_loss = 0;
  Index epochs_run = 0;
  bool converged = false;
  double wall_time_seconds = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(Cell cell, Index epoch, const std::string& context)
      : std::runtime_error(format(cell, epoch, context)),
        cell_(cell),
        epoch_(epoch) {}

  const Cell& cell() const { return cell_; }
  Index epoch() const { return epoch_; }

 private:
  static std::string format(const Cell& c, Index epoch,
                            const std::string& context) {
    std::ostringstream msg;
    msg << "non-finite value at cell (" << c[0] << ", " << c[1] << ", " << c[2]
        << ", " << c[3] << ") in epoch " << epoch;
    if (!context.empty()) msg << " (" << context << ")";
    return msg.str();
  }

  Cell cell_;
  Index epoch_;
};

// ===========================================================================
// Dimension checks
// ===========================================================================

template <typename Scalar>
void validate_dims(const TuckerModel<Scalar>& m, const SparseTensor4<Scalar>& t,
                   const ConstraintSet<Scalar>& cs) {
  const Dims4 md = m.dims();
  const Dims4& td = t.dims();
  auto fail = [](const std::string& what) {
    throw std::invalid_argument("dimension mismatch: " + what);
  };
  if (md != td) fail("model factors do not match tensor dims");
  const Index n = td[0], mm = td[2], q = td[3];
  if (cs.x.rows() != n || cs.x.cols() != n) fail("X is not N x N");
  if (cs.y.rows() != n || cs.y.cols() != mm) fail("Y is not N x M");
  if (cs.z.rows() != mm || cs.z.cols() != mm) fail("Z is not M x M");
  if (cs.laplacian.rows() != mm || cs.laplacian.cols() != mm)
    fail("Laplacian is not M x M");
  if (cs.u.rows() != q || cs.u.cols() != q) fail("U is not Q x Q");
}

// ===========================================================================
// Objective
// ===========================================================================

/// All six terms of the objective; disabled terms are reported as zero. The
/// SDA term is evaluated row-blocked so no N×N temporary is formed.
template <typename Scalar>
ObjectiveTermsT<Scalar> objective(const TuckerModel<Scalar>& m,
                                  const SparseTensor4<Scalar>& t,
                                  const ConstraintSet<Scalar>& cs,
                                  const HyperParams& hp) {
  validate_dims(m, t, cs);
  ObjectiveTermsT<Scalar> out;

  for (Index e = 0; e < t.nnz(); ++e) {
    const Cell& c = t.cells()[static_cast<std::size_t>(e)];
    const Scalar r =
        reconstruct_cell(m, c) - t.values()[static_cast<std::size_t>(e)];
    out.recon += r * r;
  }

  out.reg = m.core.squaredNorm() + m.src_factor.squaredNorm() +
            m.dst_factor.squaredNorm() + m.meme_factor.squaredNorm() +
            m.time_factor.squaredNorm();

  if (hp.use_sda) {
    const Index n = m.src_factor.rows();
    RowVector<Scalar> row(n);
    for (Index i = 0; i < n; ++i) {
      row.noalias() = m.src_factor.row(i) * m.dst_factor.transpose();
      row -= cs.x.row(i);
      out.sda += row.squaredNorm();
    }
  }
  if (hp.use_nma) {
    out.nma =
        (m.dst_factor * m.meme_factor.transpose() - cs.y).squaredNorm();
  }
  if (hp.use_mc) {
    out.mc = (cs.laplacian * m.meme_factor).cwiseProduct(m.meme_factor).sum();
  }
  if (hp.use_ts) {
    out.ts = (m.time_factor - cs.u * m.time_factor).squaredNorm();
  }

  out.total = Scalar(0.5) * (out.recon + hp.lambda_reg * out.reg +
                             hp.lambda_sda * out.sda + hp.lambda_nma * out.nma +
                             hp.lambda_mc * out.mc + hp.lambda_ts * out.ts);
  return out;
}

// ===========================================================================
// Per-cell update gradients
// ===========================================================================

/// (I − U)ᵀ(I − U), the quadratic form behind the temporal-smoothness term.
template <typename Scalar>
Matrix<Scalar> ts_gram(const Matrix<Scalar>& u) {
  Matrix<Scalar> iu = Matrix<Scalar>::Identity(u.rows(), u.cols()) - u;
  return iu.transpose() * iu;
}

/// The update direction for the factor row touched by cell `c` in the given
/// mode, with the reconstruction residual supplied by the caller:
/// regularization + enabled constraint gradients (scaled by
/// `constraint_scale`) + resid · ∂reconstruction/∂row.
template <typename Scalar>
RowVector<Scalar> row_update_gradient(const TuckerModel<Scalar>& m,
                                      const ConstraintSet<Scalar>& cs,
                                      const Matrix<Scalar>& tsg,
                                      const HyperParams& hp, const Cell& c,
                                      Scalar resid, int mode,
                                      Scalar constraint_scale = 1) {
  RowVector<Scalar> g =
      resid * contracted_row_gradient(m, c, mode) +
      Scalar(hp.lambda_reg) * m.factor(mode).row(c[mode - 1]);
  const Scalar cscale = constraint_scale;
  switch (mode) {
    case 1: {
      if (hp.use_sda) {
        const Index i = c[0];
        RowVector<Scalar> r =
            (m.src_factor.row(i) * m.dst_factor.transpose() - cs.x.row(i));
        g += Scalar(hp.lambda_sda) * cscale * (r * m.dst_factor);
      }
      break;
    }
    case 2: {
      const Index j = c[1];
      if (hp.use_sda) {
        RowVector<Scalar> r =
            (m.dst_factor.row(j) * m.src_factor.transpose() -
             cs.x.col(j).transpose());
        g += Scalar(hp.lambda_sda) * cscale * (r * m.src_factor);
      }
      if (hp.use_nma) {
        RowVector<Scalar> r =
            (m.dst_factor.row(j) * m.meme_factor.transpose() - cs.y.row(j));
        g += Scalar(hp.lambda_nma) * cscale * (r * m.meme_factor);
      }
      break;
    }
    case 3: {
      const Index k = c[2];
      if (hp.use_nma) {
        RowVector<Scalar> r =
            (m.meme_factor.row(k) * m.dst_factor.transpose() -
             cs.y.col(k).transpose());
        g += Scalar(hp.lambda_nma) * cscale * (r * m.dst_factor);
      }
      if (hp.use_mc) {
        g += Scalar(hp.lambda_mc) * cscale * (cs.laplacian.row(k) * m.meme_factor);
      }
      break;
    }
    case 4: {
      if (hp.use_ts) {
        g += Scalar(hp.lambda_ts) * cscale * (tsg.row(c[3]) * m.time_factor);
      }
      break;
    }
    default:
      throw std::invalid_argument("mode must be in 1..4");
  }
  return g;
}

/// Update direction for the core at cell `c` with the residual supplied:
/// λ_reg · core + resid · outer(S_i*, D_j*, C_k*, T_l*).
template <typename Scalar>
Vector<Scalar> core_update_gradient(const TuckerModel<Scalar>& m,
                                    const HyperParams& hp, const Cell& c,
                                    Scalar resid) {
  return Scalar(hp.lambda_reg) * m.core + resid * core_outer(m, c);
}

/// Standalone per-line gradient at the current state: the residual is
/// computed fresh, so at an untouched model this is exactly the update
/// direction the epoch loop applies. `mode` 0 addresses the core.
template <typename Scalar>
Vector<Scalar> cell_update_gradient(const TuckerModel<Scalar>& m,
                                    const ConstraintSet<Scalar>& cs,
                                    const HyperParams& hp, Scalar observed,
                                    const Cell& c, int mode) {
  const Scalar resid = reconstruct_cell(m, c) - observed;
  if (mode == 0) return core_update_gradient(m, hp, c, resid);
  const Matrix<Scalar> tsg = ts_gram(cs.u);
  return row_update_gradient(m, cs, tsg, hp, c, resid, mode).transpose();
}

// ===========================================================================
// SGD epoch and fit loop
// ===========================================================================

/// One pass of the per-nonzero-cell updates, visiting cells in the given
/// order (positions into the tensor's cell list). For each cell the residual
/// is computed once; the five updates then apply in sequence, each reading
/// the factor values current at that moment.
template <typename Scalar>
void sgd_epoch(TuckerModel<Scalar>& m, const SparseTensor4<Scalar>& t,
               const ConstraintSet<Scalar>& cs, const HyperParams& hp,
               std::span<const Index> order, Index epoch = 0) {
  validate_dims(m, t, cs);
  const Matrix<Scalar> tsg = ts_gram(cs.u);
  const Scalar eta = static_cast<Scalar>(hp.eta);
  const Scalar cscale =
      hp.normalize_constraint_gradients && t.nnz() > 0
          ? Scalar(1) / static_cast<Scalar>(t.nnz())
          : Scalar(1);

  for (Index pos : order) {
    const Cell& c = t.cells()[static_cast<std::size_t>(pos)];
    const Scalar a = t.values()[static_cast<std::size_t>(pos)];
    const Scalar resid = reconstruct_cell(m, c) - a;
    if (!std::isfinite(static_cast<double>(resid))) {
      throw DivergenceError(c, epoch, "reconstruction residual");
    }
    for (int mode = 1; mode <= 4; ++mode) {
      const RowVector<Scalar> g =
          row_update_gradient(m, cs, tsg, hp, c, resid, mode, cscale);
      m.factor(mode).row(c[mode - 1]) -= eta * g;
    }
    m.core -= eta * core_update_gradient(m, hp, c, resid);

    bool finite = m.core.allFinite();
    for (int mode = 1; mode <= 4 && finite; ++mode) {
      finite = m.factor(mode).row(c[mode - 1]).allFinite();
    }
    if (!finite) throw DivergenceError(c, epoch, "factor update");
  }
}

template <typename Scalar>
struct NdaFit {
  TuckerModel<Scalar> model;
  FitReport report;
};

/// Full solver: random init, epoch loop, convergence on the absolute change
/// of the objective between successive epoch boundaries.
template <typename Scalar>
NdaFit<Scalar> fit_nda(const SparseTensor4<Scalar>& t,
                       const ConstraintSet<Scalar>& cs, const HyperParams& hp) {
  if (!(hp.eta > 0)) throw std::invalid_argument("eta must be positive");
  if (!(hp.epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  if (hp.max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");

  const auto start = std::chrono::steady_clock::now();
  NdaFit<Scalar> fit;
  fit.model = init_model<Scalar>(t.dims(), hp.rank, hp.seed);
  validate_dims(fit.model, t, cs);

  std::vector<Index> order(static_cast<std::size_t>(t.nnz()));
  for (Index i = 0; i < t.nnz(); ++i) order[static_cast<std::size_t>(i)] = i;
  Rng order_rng(hp.seed ^ 0x53687566666c65ULL);  // independent shuffle stream

  double prev = static_cast<double>(objective(fit.model, t, cs, hp).total);
  fit.report.initial_loss = prev;

  for (Index epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    if (hp.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[order_rng.below(i)]);
      }
    }
    sgd_epoch(fit.model, t, cs, hp, order, epoch);
    const ObjectiveTermsT<Scalar> terms = objective(fit.model, t, cs, hp);
    ObjectiveTerms rec;
    rec.recon = static_cast<double>(terms.recon);
    rec.reg = static_cast<double>(terms.reg);
    rec.sda = static_cast<double>(terms.sda);
    rec.nma = static_cast<double>(terms.nma);
    rec.mc = static_cast<double>(terms.mc);
    rec.ts = static_cast<double>(terms.ts);
    rec.total = static_cast<double>(terms.total);
    fit.report.loss_trace.push_back(rec);
    fit.report.epochs_run = epoch;
    if (!std::isfinite(rec.total)) {
      throw DivergenceError({-1, -1, -1, -1}, epoch, "objective evaluation");
    }
    if (std::abs(prev - rec.total) < hp.epsilon) {
      fit.report.converged = true;
      break;
    }
    prev = rec.total;
  }

  fit.report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return fit;
}

}  // namespace cim
