#include <catch2/catch_amalgamated.hpp>

#include "support/oracles.hpp"
#include "tgv/bilevel_dual.hpp"
#include "tgv/bilevel_primal_dual.hpp"
#include "tgv/metrics.hpp"

using namespace tgv;
using oracle::randomVector;

namespace {

BilevelDualConfig dualConfig() {
  BilevelDualConfig cfg;
  cfg.corridor = CorridorSpec(0.01, 7);
  return cfg;
}

BilevelPDConfig pdConfig() {
  BilevelPDConfig cfg;
  cfg.corridor = CorridorSpec(0.01, 7);
  return cfg;
}

CorridorSpec wideCorridor() {
  CorridorSpec spec;
  spec.sigma2 = 0.5;
  spec.sigma2_lo = -1.0;
  spec.sigma2_hi = 1.0;
  return spec;
}

ScalarField noisyPhantom(const GridSpec& g, std::uint64_t seed) {
  return add_gaussian_noise(make_phantom(PhantomKind::PiecewiseAffine, g), 0.01, seed);
}

}  // namespace

TEST_CASE("bilevel config validation") {
  CHECK_THROWS_AS(BilevelDualConfig{}.validate(), std::invalid_argument);  // no corridor
  CHECK_NOTHROW(dualConfig().validate());
  CHECK_THROWS_AS(BilevelPDConfig{}.validate(), std::invalid_argument);
  CHECK_NOTHROW(pdConfig().validate());
  BilevelPDConfig bad = pdConfig();
  bad.lambda1 = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("dual adjoint vanishes when the corridor is slack") {
  const GridSpec g(10, 10, GridMode::Dual);
  BilevelDualConfig cfg = dualConfig();
  cfg.corridor = wideCorridor();
  const ScalarField f = noisyPhantom(g, 11);
  const DualSolveResult lower =
      solve_lower_dual(f, cfg.alpha0_init, ScalarField(g, cfg.alpha1_init), cfg.lower);
  REQUIRE(lower.converged);
  const SymTensorField q =
      solve_adjoint_dual(lower.p, cfg.alpha0_init, ScalarField(g, cfg.alpha1_init), f, cfg);
  CHECK(q.values.norm() == 0.0);
}

TEST_CASE("dual reduced derivatives with a zero adjoint reduce to the penalty") {
  const GridSpec g(10, 10, GridMode::Dual);
  const BilevelDualConfig cfg = dualConfig();
  const ScalarField alpha1(g, Vector(9e-4 + 1e-4 * randomVector(g.size(), 21).array()));
  const SymTensorField p(g, Vector::Zero(3 * g.size()), false);
  const SymTensorField q_adj(g, Vector::Zero(3 * g.size()), false);
  const auto [d0, d1] = reduced_derivatives_dual(p, q_adj, cfg.alpha0_init, alpha1, cfg);
  // x = 0 and Dx = 0 are interior to both boxes, so the penalty cross terms
  // vanish against the zero adjoint and only the H^1 regularization is left
  CHECK(d0 == 0.0);
  const auto op = ops(g);
  const double h2 = g.h * g.h;
  const Vector ref = cfg.lambda * h2 *
                     Vector(alpha1.values - op->neumann_laplacian * alpha1.values);
  CHECK((d1.values - ref).norm() <= 1e-14 * ref.norm());
}

TEST_CASE("dual riesz gradient round trip") {
  const GridSpec g(8, 8, GridMode::Dual);
  const RieszMap riesz(g, 1.0);
  const ScalarField d1(g, randomVector(g.size(), 30));
  const auto [g0, g1] = reduced_gradients_dual(3.5, d1, riesz);
  CHECK(g0 == 3.5);
  CHECK((riesz.apply(g1.values) - d1.values).norm() <= 1e-10 * d1.values.norm());
}

TEST_CASE("dual reduced derivatives match finite differences") {
  const GridSpec g(12, 12, GridMode::Dual);
  BilevelDualConfig cfg = dualConfig();
  cfg.lower.eps0_final = cfg.lower.eps1_final = 1e-7;
  cfg.lower.newton_tol = 1e-10;
  const double alpha0 = 1e-3;  // large enough that both box penalties engage
  const ScalarField alpha1(g, 9e-4);
  const ScalarField f = noisyPhantom(g, 41);

  const DualSolveResult base = solve_lower_dual(f, alpha0, alpha1, cfg.lower);
  REQUIRE(base.converged);
  const RieszMap riesz(g, 1.0);
  const SymTensorField q_adj = solve_adjoint_dual(base.p, alpha0, alpha1, f, cfg);
  const auto [d0, d1] = reduced_derivatives_dual(base.p, q_adj, alpha0, alpha1, cfg);

  const double dir0 = 0.3 * alpha0;
  const Vector dir1 = 0.3 * alpha1.values[0] * randomVector(g.size(), 42);
  const double predicted = d0 * dir0 + d1.values.dot(dir1);

  auto evalJ = [&](double s) {
    const double a0 = alpha0 + s * dir0;
    const ScalarField a1(g, Vector(alpha1.values + s * dir1));
    DualSolverConfig lcfg = cfg.lower;
    const DualSolveResult res = solve_lower_dual(f, a0, a1, lcfg, &base.p);
    REQUIRE(res.converged);
    return upper_value_dual(res.p, f, a1, cfg.lambda, cfg.corridor, riesz);
  };
  const double s = 1e-3;
  const double fd = (evalJ(s) - evalJ(-s)) / (2.0 * s);
  CHECK(std::abs(fd - predicted) <= 1e-2 * std::abs(fd));
}

TEST_CASE("bilevel dual driver improves the corridor objective") {
  const GridSpec g(12, 12, GridMode::Dual);
  BilevelDualConfig cfg = dualConfig();
  cfg.lower.eps0_final = cfg.lower.eps1_final = 1e-6;
  cfg.max_outer = 5;
  const ScalarField u_true = make_phantom(PhantomKind::PiecewiseAffine, g);
  const ScalarField f = add_gaussian_noise(u_true, 0.01, 43);
  const BilevelDualResult res = run_bilevel_dual(f, cfg, &u_true);
  REQUIRE(res.history.rows.size() >= 1);
  for (size_t i = 1; i < res.history.rows.size(); ++i)
    CHECK(res.history.rows[i].objective <= res.history.rows[i - 1].objective + 1e-15);
  CHECK(res.objective == res.history.rows.back().objective);
  CHECK(res.alpha0 >= cfg.alpha0_lo);
  CHECK(res.alpha0 <= cfg.alpha0_hi);
  CHECK(res.alpha1.values.minCoeff() >= cfg.alpha1_lo - 1e-6);
  CHECK(res.alpha1.values.maxCoeff() <= cfg.alpha1_hi + 1e-6);
  CHECK(res.total_lower_solves >= int(res.history.rows.size()));
}

TEST_CASE("pd adjoint satisfies the transposed kkt linearization") {
  const GridSpec g(12, 12, GridMode::PrimalDual);
  const int nm = g.size();
  const BilevelPDConfig cfg = pdConfig();
  const ScalarField f = noisyPhantom(g, 51);
  const Vector alpha0 = Vector::Constant(nm, cfg.alpha0_init);
  const ScalarField alpha1(g, cfg.alpha1_init);
  const PDSolveResult lower = pd_newton_solve(f, alpha0, alpha1, cfg.lower);
  REQUIRE(lower.converged);
  const PDAdjointState adj = solve_adjoint_pd(lower.x, f, alpha0, alpha1, cfg);

  const BoxFilter filt(g, cfg.corridor.n_w, cfg.corridor.zero_pad);
  const Vector err = lower.x.u.values - f.values;
  const ScalarField r(g, filt.apply(Vector(err.array().square())));
  const ScalarField fp = objective_F_prime(r, cfg.corridor);
  Vector b1 = Vector::Zero(3 * nm);
  b1.segment(0, nm) = -2.0 * err.cwiseProduct(filt.applyAdjoint(fp.values));
  REQUIRE(b1.norm() > 0.0);

  const KKTBlocks blk = assemble_kkt_blocks(lower.x, f, alpha0, alpha1, cfg.lower);
  Vector x1(3 * nm), x2(5 * nm);
  x1 << adj.u_adj, adj.w_adj;
  x2 << adj.q_adj, adj.p_adj;
  const Vector res1 = SpMat(blk.A.transpose()) * x1 + SpMat(blk.C.transpose()) * x2 - b1;
  const Vector res2 = SpMat(blk.B.transpose()) * x1 + blk.D.cwiseProduct(x2);
  const double scale = std::max(1.0, x1.norm());
  CHECK(res1.norm() <= 1e-8 * scale);
  CHECK(res2.norm() <= 1e-8 * scale);
}

TEST_CASE("pd scalar derivative aggregates the spatial field") {
  const GridSpec g(12, 12, GridMode::PrimalDual);
  const int nm = g.size();
  const ScalarField f = noisyPhantom(g, 53);
  const Vector alpha0 = Vector::Constant(nm, 0.2);
  const ScalarField alpha1(g, 0.25);
  BilevelPDConfig scalar_cfg = pdConfig();
  BilevelPDConfig spatial_cfg = pdConfig();
  spatial_cfg.alpha0_mode = Alpha0Mode::Spatial;
  spatial_cfg.lambda0 = 0.0;
  const RieszMap riesz(g, scalar_cfg.laplacian_weight);
  const PDSolveResult lower = pd_newton_solve(f, alpha0, alpha1, scalar_cfg.lower);
  REQUIRE(lower.converged);
  const PDAdjointState adj = solve_adjoint_pd(lower.x, f, alpha0, alpha1, scalar_cfg);
  const auto [ds, d1s] =
      reduced_derivatives_pd(lower.x, adj, alpha0, alpha1, scalar_cfg, riesz);
  const auto [df, d1f] =
      reduced_derivatives_pd(lower.x, adj, alpha0, alpha1, spatial_cfg, riesz);
  REQUIRE(ds.size() == 1);
  REQUIRE(df.size() == nm);
  CHECK(std::abs(ds[0] - df.sum()) <= 1e-10 * std::max(1.0, std::abs(ds[0])));
  CHECK((d1s.values - d1f.values).norm() == 0.0);
}

TEST_CASE("pd reduced derivatives match finite differences") {
  const GridSpec g(12, 12, GridMode::PrimalDual);
  const int nm = g.size();
  BilevelPDConfig cfg = pdConfig();
  cfg.lower.kkt_tol = 1e-9;
  const ScalarField f = noisyPhantom(g, 55);
  const double a0_base = 0.2;
  const ScalarField alpha1(g, 0.25);
  const Vector alpha0 = Vector::Constant(nm, a0_base);
  const RieszMap riesz(g, cfg.laplacian_weight);

  const PDSolveResult base = pd_newton_solve(f, alpha0, alpha1, cfg.lower);
  REQUIRE(base.converged);
  const PDAdjointState adj = solve_adjoint_pd(base.x, f, alpha0, alpha1, cfg);
  const auto [d0, d1] = reduced_derivatives_pd(base.x, adj, alpha0, alpha1, cfg, riesz);

  auto evalJ = [&](double a0, const ScalarField& a1) {
    const Vector a0v = Vector::Constant(nm, a0);
    const PDSolveResult res = pd_newton_solve(f, a0v, a1, cfg.lower, &base.x);
    REQUIRE(res.converged);
    return upper_value_pd(res.x.u, f, a0v, a1, 0.0, cfg.lambda1, cfg.corridor, riesz);
  };
  SECTION("alpha0 direction") {
    const double s = 1e-4 * a0_base;
    const double fd = (evalJ(a0_base + s, alpha1) - evalJ(a0_base - s, alpha1)) / (2.0 * s);
    CHECK(std::abs(fd - d0[0]) <= 1e-2 * std::abs(fd));
  }
  SECTION("alpha1 direction") {
    const Vector dir = 0.3 * 0.25 * randomVector(nm, 56);
    const double s = 1e-4;
    const ScalarField a1p(g, Vector(alpha1.values + s * dir));
    const ScalarField a1m(g, Vector(alpha1.values - s * dir));
    const double fd = (evalJ(a0_base, a1p) - evalJ(a0_base, a1m)) / (2.0 * s);
    CHECK(std::abs(fd - d1.values.dot(dir)) <= 1e-2 * std::abs(fd));
  }
}

TEST_CASE("bilevel pd driver improves the corridor objective") {
  const GridSpec g(16, 16, GridMode::PrimalDual);
  BilevelPDConfig cfg = pdConfig();
  cfg.max_outer = 10;
  const ScalarField u_true = make_phantom(PhantomKind::PiecewiseAffine, g);
  const ScalarField f = add_gaussian_noise(u_true, 0.01, 57);
  const BilevelPDResult res = run_bilevel_pd(f, cfg, &u_true);
  REQUIRE(res.history.rows.size() >= 2);
  for (size_t i = 1; i < res.history.rows.size(); ++i)
    CHECK(res.history.rows[i].objective <= res.history.rows[i - 1].objective + 1e-15);
  CHECK(res.objective < res.history.rows.front().objective);
  REQUIRE(res.alpha0.size() == 1);
  CHECK(res.alpha0[0] >= cfg.alpha0_lo);
  CHECK(res.alpha0[0] <= cfg.alpha0_hi);
  CHECK(res.alpha1.values.minCoeff() >= cfg.alpha1_lo - 1e-4);
  CHECK(res.alpha1.values.maxCoeff() <= cfg.alpha1_hi + 1e-4);
  CHECK(res.total_lower_solves >= int(res.history.rows.size()));
}

TEST_CASE("bilevel pd spatial protocol holds alpha1 and adapts a weight field") {
  const GridSpec g(16, 16, GridMode::PrimalDual);
  BilevelPDConfig cfg = pdConfig();
  cfg.alpha0_mode = Alpha0Mode::Spatial;
  cfg.fix_alpha1 = true;
  cfg.alpha0_init = 5.0;
  cfg.lambda0 = 1e-11;
  cfg.max_outer = 5;
  const ScalarField u_true = make_phantom(PhantomKind::PiecewiseConstant, g);
  const ScalarField f = add_gaussian_noise(u_true, 0.01, 59);
  const ScalarField a1_fixed(g, 0.25);
  const BilevelPDResult res = run_bilevel_pd(f, cfg, &u_true, &a1_fixed);
  CHECK(res.alpha1.values == a1_fixed.values);
  REQUIRE(res.alpha0.size() == g.size());
  CHECK(res.alpha0.minCoeff() >= cfg.alpha0_lo - 1e-4);
  CHECK(res.alpha0.maxCoeff() <= cfg.alpha0_hi + 1e-4);
  for (size_t i = 1; i < res.history.rows.size(); ++i)
    CHECK(res.history.rows[i].objective <= res.history.rows[i - 1].objective + 1e-15);
}
