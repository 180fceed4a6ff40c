#include "cim/nda.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

using namespace cim;

namespace {

HyperParams lambdas_zero() {
  HyperParams hp;
  hp.lambda_sda = hp.lambda_nma = hp.lambda_mc = hp.lambda_ts = hp.lambda_reg = 0;
  return hp;
}

std::vector<Index> identity_order(const SparseTensor4d& t) {
  std::vector<Index> order((std::size_t)t.nnz());
  std::iota(order.begin(), order.end(), Index{0});
  return order;
}

}  // namespace

TEST_SUITE("nda") {

TEST_CASE("objective is zero for a zero model on an empty tensor") {
  TuckerModeld m;
  m.rank = 2;
  m.core = Vectord::Zero(16);
  m.src_factor = Matrixd::Zero(4, 2);
  m.dst_factor = Matrixd::Zero(4, 2);
  m.meme_factor = Matrixd::Zero(3, 2);
  m.time_factor = Matrixd::Zero(5, 2);
  SparseTensor4d t({4, 4, 3, 5});
  ConstraintSetd cs;
  cs.x = Matrixd::Zero(4, 4);
  cs.y = Matrixd::Zero(4, 3);
  cs.z = Matrixd::Zero(3, 3);
  cs.k = Matrixd::Zero(3, 3);
  cs.laplacian = Matrixd::Zero(3, 3);
  cs.u = build_ts_matrix(5);
  const auto terms = objective(m, t, cs, HyperParams{});
  CHECK(terms.total == 0.0);
  CHECK(terms.recon == 0.0);
  CHECK(terms.ts == 0.0);
}

TEST_CASE("objective vanishes when the model reproduces the observations") {
  Rng rng(51);
  const auto m = oracle::random_model({5, 5, 3, 4}, 2, rng);
  auto t = oracle::random_tensor({5, 5, 3, 4}, 25, rng);
  std::vector<Cell> cells = t.cells();
  std::vector<double> values;
  for (const Cell& c : cells) values.push_back(reconstruct_cell(m, c));
  t = SparseTensor4d::from_coords(t.dims(), std::move(cells), std::move(values));
  const auto cs = oracle::random_constraints(5, 3, 4, rng);
  const auto terms = objective(m, t, cs, lambdas_zero());
  CHECK(terms.recon == 0.0);
  CHECK(terms.total == 0.0);
}

TEST_CASE("objective terms match the naive oracle") {
  Rng rng(52);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 3 + (Index)rng.below(6);
    const Index mm = 2 + (Index)rng.below(3);
    const Index q = 2 + (Index)rng.below(4);
    const auto m = oracle::random_model({n, n, mm, q}, 3, rng);
    const auto t = oracle::random_tensor({n, n, mm, q}, 2 * n, rng);
    const auto cs = oracle::random_constraints(n, mm, q, rng);
    HyperParams hp;
    const auto terms = objective(m, t, cs, hp);
    CHECK(terms.recon ==
          doctest::Approx(oracle::recon_term(m, t)).epsilon(1e-10));
    CHECK(terms.reg == doctest::Approx(oracle::reg_term(m)).epsilon(1e-10));
    CHECK(terms.sda == doctest::Approx(oracle::sda_term(m, cs.x)).epsilon(1e-10));
    CHECK(terms.nma == doctest::Approx(oracle::nma_term(m, cs.y)).epsilon(1e-10));
    CHECK(terms.mc ==
          doctest::Approx(oracle::mc_term(m, cs.laplacian)).epsilon(1e-10));
    CHECK(terms.ts == doctest::Approx(oracle::ts_term(m, cs.u)).epsilon(1e-10));
    CHECK(terms.total ==
          doctest::Approx(oracle::total_objective(m, t, cs, hp)).epsilon(1e-10));
  }
}

TEST_CASE("disabled terms report zero and leave the total") {
  Rng rng(53);
  const auto m = oracle::random_model({4, 4, 2, 3}, 2, rng);
  const auto t = oracle::random_tensor({4, 4, 2, 3}, 10, rng);
  const auto cs = oracle::random_constraints(4, 2, 3, rng);
  HyperParams hp;
  hp.use_sda = hp.use_nma = hp.use_mc = hp.use_ts = false;
  const auto terms = objective(m, t, cs, hp);
  CHECK(terms.sda == 0.0);
  CHECK(terms.nma == 0.0);
  CHECK(terms.mc == 0.0);
  CHECK(terms.ts == 0.0);
  CHECK(terms.total ==
        doctest::Approx(0.5 * (terms.recon + hp.lambda_reg * terms.reg))
            .epsilon(1e-14));
}

TEST_CASE("ts term with all time rows equal keeps only the last row") {
  Rng rng(54);
  auto m = oracle::random_model({3, 3, 2, 4}, 2, rng);
  RowVectord v(2);
  v << 0.3, -0.7;
  for (Index l = 0; l < 4; ++l) m.time_factor.row(l) = v;
  const auto t = SparseTensor4d({3, 3, 2, 4});
  const auto cs = oracle::random_constraints(3, 2, 4, rng);
  const auto terms = objective(m, t, cs, HyperParams{});
  CHECK(terms.ts == doctest::Approx(v.squaredNorm()).epsilon(1e-14));
}

TEST_CASE("objective rejects mismatched constraint dims") {
  Rng rng(55);
  const auto m = oracle::random_model({4, 4, 2, 3}, 2, rng);
  const auto t = oracle::random_tensor({4, 4, 2, 3}, 6, rng);
  auto cs = oracle::random_constraints(4, 2, 3, rng);
  cs.u = build_ts_matrix(5);
  CHECK_THROWS_AS(objective(m, t, cs, HyperParams{}), std::invalid_argument);
}

TEST_CASE("sgd_epoch with zero step leaves the model untouched") {
  Rng rng(56);
  const auto t = oracle::random_tensor({4, 4, 2, 3}, 12, rng);
  const auto cs = oracle::random_constraints(4, 2, 3, rng);
  auto m = oracle::random_model({4, 4, 2, 3}, 2, rng);
  const auto before = m;
  HyperParams hp;
  hp.eta = 0.0;
  sgd_epoch(m, t, cs, hp, identity_order(t));
  CHECK(m == before);
}

TEST_CASE("single-cell rank-1 epoch matches the hand-derived updates") {
  const double a = 2.0;
  const double eta = 0.01;
  TuckerModeld m;
  m.rank = 1;
  m.core = Vectord::Constant(1, 0.8);
  m.src_factor = Matrixd::Constant(1, 1, 0.5);
  m.dst_factor = Matrixd::Constant(1, 1, 0.6);
  m.meme_factor = Matrixd::Constant(1, 1, 0.7);
  m.time_factor = Matrixd::Constant(1, 1, 0.9);
  const auto t = SparseTensor4d::from_coords({1, 1, 1, 1}, {{0, 0, 0, 0}}, {a});
  ConstraintSetd cs;
  cs.x = Matrixd::Zero(1, 1);
  cs.y = Matrixd::Zero(1, 1);
  cs.z = Matrixd::Zero(1, 1);
  cs.k = Matrixd::Zero(1, 1);
  cs.laplacian = Matrixd::Zero(1, 1);
  cs.u = build_ts_matrix(1);
  auto hp = lambdas_zero();
  hp.eta = eta;

  double g = 0.8, s = 0.5, d = 0.6, c = 0.7, tt = 0.9;
  const double resid = g * s * d * c * tt - a;
  s -= eta * (resid * (g * d * c * tt));  // in-place sequence: each line
  d -= eta * (resid * (g * s * c * tt));  // reads the rows updated before it
  c -= eta * (resid * (g * s * d * tt));
  tt -= eta * (resid * (g * s * d * c));
  g -= eta * (resid * (s * d * c * tt));

  sgd_epoch(m, t, cs, hp, identity_order(t));
  CHECK(m.src_factor(0, 0) == doctest::Approx(s).epsilon(1e-14));
  CHECK(m.dst_factor(0, 0) == doctest::Approx(d).epsilon(1e-14));
  CHECK(m.meme_factor(0, 0) == doctest::Approx(c).epsilon(1e-14));
  CHECK(m.time_factor(0, 0) == doctest::Approx(tt).epsilon(1e-14));
  CHECK(m.core[0] == doctest::Approx(g).epsilon(1e-14));
}

TEST_CASE("per-line updates match finite differences of the cell loss") {
  Rng rng(57);
  const double h = 1e-6;
  HyperParams hp;  // all constraints on, default weights
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = oracle::random_model({5, 5, 3, 4}, 2, rng, 0.05, 0.6);
    const auto cs = oracle::random_constraints(5, 3, 4, rng);
    const Cell cell{(Index)rng.below(5), (Index)rng.below(5),
                    (Index)rng.below(3), (Index)rng.below(4)};
    const double a = rng.uniform(0.5, 3.0);
    const auto single =
        SparseTensor4d::from_coords({5, 5, 3, 4}, {cell}, {a});

    for (int mode = 0; mode <= 4; ++mode) {
      const Vectord g = cell_update_gradient(m, cs, hp, a, cell, mode);
      std::vector<double> flat((std::size_t)g.size());
      if (mode == 0) {
        for (Index i = 0; i < m.core.size(); ++i) flat[(std::size_t)i] = m.core[i];
      } else {
        for (Index i = 0; i < g.size(); ++i)
          flat[(std::size_t)i] = m.factor(mode)(cell[mode - 1], i);
      }
      const auto fd = oracle::central_fd(
          [&](const std::vector<double>& v) {
            auto probe = m;
            if (mode == 0) {
              for (Index i = 0; i < probe.core.size(); ++i)
                probe.core[i] = v[(std::size_t)i];
            } else {
              for (Index i = 0; i < g.size(); ++i)
                probe.factor(mode)(cell[mode - 1], i) = v[(std::size_t)i];
            }
            return oracle::total_objective(probe, single, cs, hp);
          },
          flat, h);
      double num = 0, den = 0;
      for (Index i = 0; i < g.size(); ++i) {
        num += (g[i] - fd[(std::size_t)i]) * (g[i] - fd[(std::size_t)i]);
        den += fd[(std::size_t)i] * fd[(std::size_t)i];
      }
      CHECK(std::sqrt(num) / std::max(std::sqrt(den), 1e-9) < 1e-3);
    }
  }
}

TEST_CASE("fit converges immediately on an empty tensor with zero weights") {
  SparseTensor4d t({3, 3, 2, 2});
  Rng rng(58);
  const auto cs = oracle::random_constraints(3, 2, 2, rng);
  auto hp = lambdas_zero();
  hp.max_epochs = 10;
  const auto fit = fit_nda(t, cs, hp);
  CHECK(fit.report.converged);
  CHECK(fit.report.epochs_run == 1);
  CHECK(fit.report.initial_loss == 0.0);
  CHECK(fit.report.loss_trace.size() == 1);
  CHECK(fit.report.loss_trace[0].total == 0.0);
}

TEST_CASE("fit is bit-deterministic per seed") {
  Rng rng(59);
  const auto t = oracle::random_tensor({6, 6, 2, 4}, 30, rng);
  const auto cs = oracle::random_constraints(6, 2, 4, rng);
  HyperParams hp;
  hp.max_epochs = 5;
  hp.seed = 123;
  const auto a = fit_nda(t, cs, hp);
  const auto b = fit_nda(t, cs, hp);
  CHECK(a.model == b.model);
  CHECK(a.report.epochs_run == b.report.epochs_run);
  REQUIRE(a.report.loss_trace.size() == b.report.loss_trace.size());
  for (std::size_t e = 0; e < a.report.loss_trace.size(); ++e) {
    CHECK(a.report.loss_trace[e].total == b.report.loss_trace[e].total);
  }
  hp.seed = 124;
  const auto c = fit_nda(t, cs, hp);
  CHECK_FALSE(a.model == c.model);
}

TEST_CASE("shuffled order is deterministic per seed and changes the path") {
  Rng rng(60);
  const auto t = oracle::random_tensor({6, 6, 2, 4}, 40, rng);
  const auto cs = oracle::random_constraints(6, 2, 4, rng);
  HyperParams hp;
  hp.max_epochs = 3;
  hp.shuffle = true;
  const auto a = fit_nda(t, cs, hp);
  const auto b = fit_nda(t, cs, hp);
  CHECK(a.model == b.model);
  hp.shuffle = false;
  const auto plain = fit_nda(t, cs, hp);
  CHECK_FALSE(a.model == plain.model);
}

TEST_CASE("oversized step size raises a divergence error naming the cell") {
  Rng rng(61);
  const auto t = oracle::random_tensor({5, 5, 2, 3}, 20, rng, 3.0, 9.0);
  const auto cs = oracle::random_constraints(5, 2, 3, rng);
  HyperParams hp;
  hp.eta = 1e12;
  hp.max_epochs = 50;
  CHECK_THROWS_AS((void)fit_nda(t, cs, hp), DivergenceError);
  try {
    (void)fit_nda(t, cs, hp);
  } catch (const DivergenceError& e) {
    CHECK(e.epoch() >= 1);
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("epoch-cap stop reports non-convergence without error") {
  Rng rng(62);
  const auto t = oracle::random_tensor({6, 6, 2, 4}, 30, rng);
  const auto cs = oracle::random_constraints(6, 2, 4, rng);
  HyperParams hp;
  hp.max_epochs = 2;
  hp.epsilon = 1e-12;
  const auto fit = fit_nda(t, cs, hp);
  CHECK_FALSE(fit.report.converged);
  CHECK(fit.report.epochs_run == 2);
  CHECK(fit.report.loss_trace.size() == 2);
}

TEST_CASE("unconstrained loss is non-increasing over early epochs") {
  Rng rng(63);
  const auto log =
      generate_synthetic(20, 2, 6, 0.02, SyntheticMode::kPlantedTucker, 7);
  const auto t = assemble_cdt(log);
  const auto cs = build_constraints(log);
  HyperParams hp;
  hp.use_sda = hp.use_nma = hp.use_mc = hp.use_ts = false;
  hp.max_epochs = 10;
  hp.epsilon = 1e-12;
  const auto fit = fit_nda(t, cs, hp);
  double prev = fit.report.initial_loss;
  for (const auto& terms : fit.report.loss_trace) {
    CHECK(terms.total <= prev * 1.01);
    prev = terms.total;
  }
}

TEST_CASE("trace losses equal the oracle objective at epoch boundaries") {
  Rng rng(64);
  const auto t = oracle::random_tensor({5, 5, 2, 3}, 20, rng);
  const auto cs = oracle::random_constraints(5, 2, 3, rng);
  HyperParams hp;
  hp.max_epochs = 3;
  hp.epsilon = 1e-15;

  auto m = init_model(t.dims(), hp.rank, hp.seed);
  const auto order = identity_order(t);
  std::vector<double> expected;
  for (int epoch = 1; epoch <= 3; ++epoch) {
    sgd_epoch(m, t, cs, hp, order, epoch);
    expected.push_back(oracle::total_objective(m, t, cs, hp));
  }

  const auto fit = fit_nda(t, cs, hp);
  REQUIRE(fit.report.loss_trace.size() == 3);
  for (int e = 0; e < 3; ++e) {
    CHECK(fit.report.loss_trace[(std::size_t)e].total ==
          doctest::Approx(expected[(std::size_t)e]).epsilon(1e-10));
  }
  CHECK(fit.model == m);
}

TEST_CASE("constraint normalization leaves single-cell tensors unchanged") {
  Rng rng(65);
  const auto t = oracle::random_tensor({4, 4, 2, 3}, 1, rng);
  const auto cs = oracle::random_constraints(4, 2, 3, rng);
  HyperParams hp;
  auto a = oracle::random_model({4, 4, 2, 3}, 2, rng);
  auto b = a;
  sgd_epoch(a, t, cs, hp, identity_order(t));
  hp.normalize_constraint_gradients = true;
  sgd_epoch(b, t, cs, hp, identity_order(t));
  CHECK(a == b);
}

TEST_CASE("fit validates hyperparameters") {
  SparseTensor4d t({2, 2, 2, 2});
  Rng rng(66);
  const auto cs = oracle::random_constraints(2, 2, 2, rng);
  HyperParams hp;
  hp.eta = 0.0;
  CHECK_THROWS_AS((void)fit_nda(t, cs, hp), std::invalid_argument);
  hp = HyperParams{};
  hp.epsilon = 0.0;
  CHECK_THROWS_AS((void)fit_nda(t, cs, hp), std::invalid_argument);
  hp = HyperParams{};
  hp.max_epochs = 0;
  CHECK_THROWS_AS((void)fit_nda(t, cs, hp), std::invalid_argument);
}

}  // TEST_SUITE
