#ifndef TGV_BILEVEL_PRIMAL_DUAL_HPP
#define TGV_BILEVEL_PRIMAL_DUAL_HPP

#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>
#include <utility>

#include "tgv/grid.hpp"
#include "tgv/h1_projection.hpp"
#include "tgv/io.hpp"
#include "tgv/lower_primal_dual.hpp"
#include "tgv/metrics.hpp"
#include "tgv/norms.hpp"
#include "tgv/upper_objective.hpp"

namespace tgv {

enum class Alpha0Mode { Scalar, Spatial };

struct BilevelPDConfig {
  PDSolverConfig lower;
  CorridorSpec corridor;
  double lambda0 = 0.0;        // alpha0 H^1 penalty (spatial mode only)
  double lambda1 = 1e-11;      // alpha1 H^1 penalty
  double alpha0_lo = 1e-2, alpha0_hi = 10.0;
  double alpha1_lo = 1e-4, alpha1_hi = 10.0;
  double tau0_init = 0.05, tau1_init = 100.0;
  double c = 1e-9;
  double theta_minus = 0.25, theta_plus = 2.0;
  int max_outer = 40;
  int max_line_search = 40;
  double eps_alpha = 1e-6;
  double laplacian_weight = 6e4;  // scaling of Lap_N in H^1 norms/projections
  Alpha0Mode alpha0_mode = Alpha0Mode::Scalar;
  double alpha0_init = 0.2;
  double alpha1_init = 0.25;
  bool fix_alpha1 = false;  // optimize alpha0 only, alpha1 held fixed

  void validate() const {
    lower.validate();
    if (!(corridor.sigma2 > 0.0))
      throw std::invalid_argument("BilevelPDConfig: corridor not configured");
    if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("BilevelPDConfig: c in (0,1)");
    if (!(theta_minus > 0.0 && theta_minus < 1.0 && theta_plus >= 1.0))
      throw std::invalid_argument("BilevelPDConfig: bad theta factors");
    if (!(alpha0_lo > 0.0 && alpha0_lo < alpha0_hi) ||
        !(alpha1_lo > 0.0 && alpha1_lo < alpha1_hi))
      throw std::invalid_argument("BilevelPDConfig: bad weight bounds");
    if (!(tau0_init > 0.0 && tau1_init > 0.0))
      throw std::invalid_argument("BilevelPDConfig: bad step sizes");
    if (max_outer < 1 || max_line_search < 1)
      throw std::invalid_argument("BilevelPDConfig: bad iteration caps");
    if (!(eps_alpha > 0.0 && laplacian_weight > 0.0))
      throw std::invalid_argument("BilevelPDConfig: bad eps_alpha/laplacian_weight");
    if (lambda0 < 0.0 || lambda1 < 0.0)
      throw std::invalid_argument("BilevelPDConfig: negative lambda");
  }
};

struct PDAdjointState {
  Vector u_adj;  // nm
  Vector w_adj;  // 2nm
  Vector q_adj;  // 2nm
  Vector p_adj;  // 3nm
};

// Transposed KKT linearization at the solution:
//   [A^T C^T; B^T D^T](x1*, x2*) = (b1*, 0)
// with b1* = (-2(u-f) K^T F'(R(u)), 0). Eliminating x2* = -D^{-1} B^T x1*
// leaves the transposed Schur system S^T x1* = b1*.
inline PDAdjointState solve_adjoint_pd(const KKTState& x, const ScalarField& f,
                                       const Vector& alpha0, const ScalarField& alpha1,
                                       const BilevelPDConfig& cfg) {
  cfg.validate();
  const int nm = x.u.grid.size();
  const BoxFilter filt(x.u.grid, cfg.corridor.n_w, cfg.corridor.zero_pad);
  const Vector err = x.u.values - f.values;
  const ScalarField r(x.u.grid, filt.apply(Vector(err.array().square())));
  const ScalarField fp = objective_F_prime(r, cfg.corridor);

  Vector b1 = Vector::Zero(3 * nm);
  b1.segment(0, nm) = -2.0 * err.cwiseProduct(filt.applyAdjoint(fp.values));

  const KKTBlocks blk = assemble_kkt_blocks(x, f, alpha0, alpha1, cfg.lower);
  const Vector dinv = blk.D.cwiseInverse();
  SpMat dinvC(5 * nm, 3 * nm);
  dinvC = SpMat(dinv.asDiagonal()) * blk.C;
  SpMat St = SpMat(SpMat(blk.A - SpMat(blk.B * dinvC)).transpose());
  St.makeCompressed();
  Eigen::SparseLU<SpMat> solver(St);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("solve_adjoint_pd: Schur factorization failed");
  const Vector x1 = solver.solve(b1);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("solve_adjoint_pd: Schur solve failed");
  const Vector x2 = -dinv.cwiseProduct(SpMat(blk.B.transpose()) * x1);

  PDAdjointState adj;
  adj.u_adj = x1.segment(0, nm);
  adj.w_adj = x1.segment(nm, 2 * nm);
  adj.q_adj = x2.segment(0, 2 * nm);
  adj.p_adj = x2.segment(2 * nm, 3 * nm);
  return adj;
}

// Reduced derivatives dJ/dalpha = (dg/dalpha)^T x* + regularization:
//   dJ/da1 = -sum_c (grad u - w)_c q*_c + l1 (I - w Lap_N) a1
//   dJ/da0 = -sum_c (Ew)_c p*_c + l0 (I - w Lap_N) a0   (spatial mode)
// with the scalar mode summing the spatial expression over pixels.
inline std::pair<Vector, ScalarField> reduced_derivatives_pd(
    const KKTState& x, const PDAdjointState& adj, const Vector& alpha0,
    const ScalarField& alpha1, const BilevelPDConfig& cfg, const RieszMap& riesz) {
  cfg.validate();
  const auto op = ops(x.u.grid);
  const int nm = x.u.grid.size();
  const Vector g = op->grad_neumann * x.u.values - x.w.values;
  const Vector e = op->sym_gradient * x.w.values;

  ScalarField d1(alpha1.grid);
  for (int k = 0; k < nm; ++k)
    d1.values[k] = -(g[k] * adj.q_adj[k] + g[nm + k] * adj.q_adj[nm + k]);
  if (cfg.lambda1 != 0.0)
    d1.values += cfg.lambda1 * (riesz.matrix() * alpha1.values);

  Vector d0_field(nm);
  for (int k = 0; k < nm; ++k)
    d0_field[k] = -(e[k] * adj.p_adj[k] + e[nm + k] * adj.p_adj[nm + k] +
                    e[2 * nm + k] * adj.p_adj[2 * nm + k]);
  if (cfg.alpha0_mode == Alpha0Mode::Scalar)
    return {Vector::Constant(1, d0_field.sum()), d1};
  if (cfg.lambda0 != 0.0) d0_field += cfg.lambda0 * (riesz.matrix() * alpha0);
  return {d0_field, d1};
}

struct BilevelPDResult {
  Vector alpha0;  // size 1 in scalar mode, nm in spatial mode
  ScalarField alpha1;
  KKTState x;
  RunHistory history;
  int total_lower_solves = 0;
  double objective = 0.0;
};

inline BilevelPDResult run_bilevel_pd(const ScalarField& f,
                                      const BilevelPDConfig& cfg,
                                      const ScalarField* u_true = nullptr,
                                      const ScalarField* alpha1_fixed = nullptr) {
  cfg.validate();
  const int nm = f.grid.size();
  const bool spatial = cfg.alpha0_mode == Alpha0Mode::Spatial;
  const RieszMap riesz(f.grid, cfg.laplacian_weight);
  const ProjectionSpec proj1(cfg.alpha1_lo, cfg.alpha1_hi, nm, cfg.eps_alpha,
                             cfg.laplacian_weight);
  const ProjectionSpec proj0(cfg.alpha0_lo, cfg.alpha0_hi, nm, cfg.eps_alpha,
                             cfg.laplacian_weight);

  BilevelPDResult out;
  out.alpha0 = spatial ? Vector(Vector::Constant(nm, cfg.alpha0_init))
                       : Vector(Vector::Constant(1, cfg.alpha0_init));
  out.alpha1 = alpha1_fixed != nullptr ? *alpha1_fixed
                                       : ScalarField(f.grid, cfg.alpha1_init);

  auto alpha0_field = [&](const Vector& a0) {
    return spatial ? a0 : Vector(Vector::Constant(nm, a0[0]));
  };
  const double lambda0 = spatial ? cfg.lambda0 : 0.0;

  PDSolveResult lower =
      pd_newton_solve(f, alpha0_field(out.alpha0), out.alpha1, cfg.lower);
  ++out.total_lower_solves;
  if (!lower.converged)
    throw std::runtime_error("run_bilevel_pd: initial lower solve failed");
  out.x = lower.x;

  double tau0 = cfg.tau0_init, tau1 = cfg.tau1_init;
  double J = upper_value_pd(out.x.u, f, alpha0_field(out.alpha0), out.alpha1,
                            lambda0, cfg.lambda1, cfg.corridor, riesz);
  out.objective = J;

  auto record = [&](int it, int ls, int lower_its) {
    RunHistoryRow row;
    row.iteration = it;
    row.objective = J;
    row.f_part =
        objective_F(localized_residual(out.x.u, f, cfg.corridor), cfg.corridor);
    row.reg_part = J - row.f_part;
    row.tau0 = tau0;
    row.tau1 = tau1;
    row.line_search_count = ls;
    row.lower_iterations = lower_its;
    if (u_true != nullptr) {
      row.psnr_db = psnr(out.x.u, *u_true);
      row.ssim_val = ssim(out.x.u, *u_true);
    }
    out.history.append(row);
  };
  record(0, 0, lower.newton_iterations);

  for (int it = 1; it <= cfg.max_outer; ++it) {
    const PDAdjointState adj =
        solve_adjoint_pd(out.x, f, alpha0_field(out.alpha0), out.alpha1, cfg);
    const auto [d0, d1] = reduced_derivatives_pd(out.x, adj, alpha0_field(out.alpha0),
                                                 out.alpha1, cfg, riesz);
    // Riesz gradients: inverse weighted-Laplacian map for fields, identity
    // for the scalar weight.
    const Vector g0 = spatial ? riesz.solve(d0) : d0;
    const ScalarField g1(f.grid, riesz.solve(d1.values));

    bool accepted = false;
    int ls = 0;
    Vector prev_a0, prev_a1;
    for (; ls < cfg.max_line_search; ++ls) {
      Vector a0_trial;
      if (spatial) {
        a0_trial = project_h1(ScalarField(f.grid, Vector(out.alpha0 - tau0 * g0)),
                              proj0, riesz)
                       .values;
      } else {
        a0_trial = Vector::Constant(
            1, clamp_scalar(out.alpha0[0] - tau0 * g0[0], cfg.alpha0_lo,
                            cfg.alpha0_hi));
      }
      ScalarField a1_trial = out.alpha1;
      if (!cfg.fix_alpha1)
        a1_trial = project_h1(
            ScalarField(f.grid, Vector(out.alpha1.values - tau1 * g1.values)),
            proj1, riesz);

      const Vector da0 = a0_trial - out.alpha0;
      const Vector da1 = a1_trial.values - out.alpha1.values;
      if (da0.norm() == 0.0 && da1.norm() == 0.0) break;
      if (ls > 0 && a0_trial == prev_a0 && a1_trial.values == prev_a1) {
        tau0 *= cfg.theta_minus;
        tau1 *= cfg.theta_minus;
        continue;
      }
      prev_a0 = a0_trial;
      prev_a1 = a1_trial.values;

      PDSolveResult trial = pd_newton_solve(f, alpha0_field(a0_trial), a1_trial,
                                            cfg.lower, &out.x);
      ++out.total_lower_solves;
      if (trial.converged) {
        const double J_trial =
            upper_value_pd(trial.x.u, f, alpha0_field(a0_trial), a1_trial, lambda0,
                           cfg.lambda1, cfg.corridor, riesz);
        const double decrease = d0.dot(da0) + d1.values.dot(da1);
        if (J_trial <= J + cfg.c * decrease) {
          out.alpha0 = a0_trial;
          out.alpha1 = a1_trial;
          out.x = trial.x;
          J = J_trial;
          tau0 *= cfg.theta_plus;
          tau1 *= cfg.theta_plus;
          accepted = true;
          record(it, ls, trial.newton_iterations);
          break;
        }
      }
      tau0 *= cfg.theta_minus;
      tau1 *= cfg.theta_minus;
    }
    if (!accepted) break;
  }
  out.objective = J;
  return out;
}

}  // namespace tgv

#endif
