#ifndef TGV_BILEVEL_DUAL_HPP
#define TGV_BILEVEL_DUAL_HPP

#include <Eigen/SparseCholesky>

#include <cmath>
#include <stdexcept>
#include <utility>

#include "tgv/grid.hpp"
#include "tgv/h1_projection.hpp"
#include "tgv/io.hpp"
#include "tgv/lower_dual.hpp"
#include "tgv/metrics.hpp"
#include "tgv/norms.hpp"
#include "tgv/upper_objective.hpp"

namespace tgv {

struct BilevelDualConfig {
  DualSolverConfig lower;
  CorridorSpec corridor;
  double lambda = 1e-11;       // H^1 penalty on alpha1
  double alpha0_lo = 1e-7, alpha0_hi = 1e-2;
  double alpha1_lo = 1e-7, alpha1_hi = 1e-2;
  double tau0_init = 1.0, tau1_init = 1e-12;
  double c = 1e-8;             // Armijo constant
  double theta_minus = 0.25, theta_plus = 2.0;
  int max_outer = 30;
  int max_line_search = 40;
  double eps_alpha = 1e-10;    // projection penalty
  double alpha0_init = 3.125e-6;
  double alpha1_init = 9e-4;

  void validate() const {
    lower.validate();
    if (!(corridor.sigma2 > 0.0))
      throw std::invalid_argument("BilevelDualConfig: corridor not configured");
    if (!(c > 0.0 && c < 1.0)) throw std::invalid_argument("BilevelDualConfig: c in (0,1)");
    if (!(theta_minus > 0.0 && theta_minus < 1.0 && theta_plus >= 1.0))
      throw std::invalid_argument("BilevelDualConfig: bad theta factors");
    if (!(alpha0_lo > 0.0 && alpha0_lo < alpha0_hi) ||
        !(alpha1_lo > 0.0 && alpha1_lo < alpha1_hi))
      throw std::invalid_argument("BilevelDualConfig: bad weight bounds");
    if (!(tau0_init > 0.0 && tau1_init > 0.0))
      throw std::invalid_argument("BilevelDualConfig: bad step sizes");
    if (max_outer < 1 || max_line_search < 1)
      throw std::invalid_argument("BilevelDualConfig: bad iteration caps");
    if (!(eps_alpha > 0.0))
      throw std::invalid_argument("BilevelDualConfig: eps_alpha must be > 0");
  }
};

// Adjoint state q*: H q* = dJ0/dx where H is the (symmetric) Hessian of
// the lower-level energy at the solution and J0(x) = F(R(u(x))),
// u = f - div^2 p. By symmetry this is the transposed linearization.
inline SymTensorField solve_adjoint_dual(const SymTensorField& p, double alpha0,
                                         const ScalarField& alpha1,
                                         const ScalarField& f,
                                         const BilevelDualConfig& cfg) {
  cfg.validate();
  const auto op = ops(p.grid);
  const Vector x = p.toUnscaled().values;
  const Vector s = op->second_divergence * x;  // f - u
  const BoxFilter filt(p.grid, cfg.corridor.n_w, cfg.corridor.zero_pad);
  const ScalarField r(p.grid, filt.apply(Vector(s.array().square())));
  const ScalarField fp = objective_F_prime(r, cfg.corridor);
  const Vector rhs = SpMat(op->second_divergence.transpose()) *
                     Vector(2.0 * s.cwiseProduct(filt.applyAdjoint(fp.values)));

  const SymTensorField pu = p.toUnscaled();
  const SpMat H = dual_hessian(pu, alpha0, alpha1, cfg.lower);
  Eigen::SimplicialLDLT<SpMat> solver(H);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("solve_adjoint_dual: factorization failed");
  Vector q = solver.solve(rhs);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("solve_adjoint_dual: solve failed");
  return SymTensorField(p.grid, std::move(q), false);
}

// Reduced derivatives: dJ/da = -(dg/da)^T q* + regularization. The penalty
// blocks of g are the only alpha-dependent parts.
inline std::pair<double, ScalarField> reduced_derivatives_dual(
    const SymTensorField& p, const SymTensorField& q_adj, double alpha0,
    const ScalarField& alpha1, const BilevelDualConfig& cfg) {
  cfg.validate();
  const auto op = ops(p.grid);
  const int nm = p.grid.size();
  const double h2 = p.grid.h * p.grid.h;
  const Vector x = p.toUnscaled().values;
  const Vector qa = q_adj.toUnscaled().values;
  const Vector dv = op->divergence * x;
  const Vector dq = op->divergence * qa;
  const double delta = cfg.lower.delta;

  double d0 = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < nm; ++k)
      d0 += box_penalty_dva(x[c * nm + k], alpha0, delta) * qa[c * nm + k];
  d0 *= -h2 / cfg.lower.eps0_final;

  ScalarField d1(alpha1.grid);
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < nm; ++k)
      d1.values[k] +=
          box_penalty_dva(dv[c * nm + k], alpha1.values[k], delta) * dq[c * nm + k];
  d1.values *= -h2 / cfg.lower.eps1_final;
  d1.values += cfg.lambda * h2 *
               Vector(alpha1.values - op->neumann_laplacian * alpha1.values);
  return {d0, d1};
}

inline std::pair<double, ScalarField> reduced_gradients_dual(
    double d0, const ScalarField& d1, const RieszMap& riesz) {
  return {d0, ScalarField(d1.grid, riesz.solve(d1.values))};
}

struct BilevelDualResult {
  double alpha0 = 0.0;
  ScalarField alpha1;
  SymTensorField p;
  RunHistory history;
  int total_lower_solves = 0;
  double objective = 0.0;
};

// Projected gradient descent over (scalar alpha0, field alpha1) with
// Armijo backtracking; each objective evaluation requires a lower solve.
inline BilevelDualResult run_bilevel_dual(const ScalarField& f,
                                          const BilevelDualConfig& cfg,
                                          const ScalarField* u_true = nullptr) {
  cfg.validate();
  const RieszMap riesz(f.grid, 1.0);
  const ProjectionSpec proj(cfg.alpha1_lo, cfg.alpha1_hi, f.grid.size(),
                            cfg.eps_alpha, 1.0);

  BilevelDualResult out;
  out.alpha0 = cfg.alpha0_init;
  out.alpha1 = ScalarField(f.grid, cfg.alpha1_init);

  DualSolveResult lower = solve_lower_dual(f, out.alpha0, out.alpha1, cfg.lower);
  ++out.total_lower_solves;
  if (!lower.converged)
    throw std::runtime_error("run_bilevel_dual: initial lower solve failed");
  out.p = lower.p;

  double tau0 = cfg.tau0_init, tau1 = cfg.tau1_init;
  double J = upper_value_dual(out.p, f, out.alpha1, cfg.lambda, cfg.corridor, riesz);
  out.objective = J;

  auto record = [&](int it, double fpart, double reg, int ls, int lower_its) {
    RunHistoryRow row;
    row.iteration = it;
    row.objective = J;
    row.f_part = fpart;
    row.reg_part = reg;
    row.tau0 = tau0;
    row.tau1 = tau1;
    row.line_search_count = ls;
    row.lower_iterations = lower_its;
    if (u_true != nullptr) {
      const ScalarField u = recover_image(out.p, f);
      row.psnr_db = psnr(u, *u_true);
      row.ssim_val = ssim(u, *u_true);
    }
    out.history.append(row);
  };

  {
    const ScalarField u0 = recover_image(out.p, f);
    const double fp = objective_F(localized_residual(u0, f, cfg.corridor), cfg.corridor);
    record(0, fp, J - fp, 0, lower.newton_iterations);
  }

  for (int it = 1; it <= cfg.max_outer; ++it) {
    const SymTensorField q_adj =
        solve_adjoint_dual(out.p, out.alpha0, out.alpha1, f, cfg);
    const auto [d0, d1] =
        reduced_derivatives_dual(out.p, q_adj, out.alpha0, out.alpha1, cfg);
    const auto [g0, g1] = reduced_gradients_dual(d0, d1, riesz);

    bool accepted = false;
    int ls = 0;
    // Clamping can map successive shrunk steps to the same trial point;
    // remember the last one so it is not solved twice.
    double prev_a0 = out.alpha0;
    Vector prev_a1;
    for (; ls < cfg.max_line_search; ++ls) {
      const double a0_trial =
          clamp_scalar(out.alpha0 - tau0 * g0, cfg.alpha0_lo, cfg.alpha0_hi);
      const ScalarField a1_trial = project_h1(
          ScalarField(f.grid, Vector(out.alpha1.values - tau1 * g1.values)), proj,
          riesz);
      const double da0 = a0_trial - out.alpha0;
      const Vector da1 = a1_trial.values - out.alpha1.values;
      if (std::abs(da0) == 0.0 && da1.norm() == 0.0) break;
      if (ls > 0 && a0_trial == prev_a0 && a1_trial.values == prev_a1) {
        tau0 *= cfg.theta_minus;
        tau1 *= cfg.theta_minus;
        continue;
      }
      prev_a0 = a0_trial;
      prev_a1 = a1_trial.values;

      DualSolveResult trial =
          solve_lower_dual(f, a0_trial, a1_trial, cfg.lower, &out.p);
      ++out.total_lower_solves;
      if (trial.converged) {
        const double J_trial = upper_value_dual(trial.p, f, a1_trial, cfg.lambda,
                                                cfg.corridor, riesz);
        const double decrease = d0 * da0 + d1.values.dot(da1);
        if (J_trial <= J + cfg.c * decrease) {
          out.alpha0 = a0_trial;
          out.alpha1 = a1_trial;
          out.p = trial.p;
          J = J_trial;
          tau0 *= cfg.theta_plus;
          tau1 *= cfg.theta_plus;
          accepted = true;
          const ScalarField u = recover_image(out.p, f);
          const double fp =
              objective_F(localized_residual(u, f, cfg.corridor), cfg.corridor);
          record(it, fp, J - fp, ls, trial.newton_iterations);
          break;
        }
      }
      tau0 *= cfg.theta_minus;
      tau1 *= cfg.theta_minus;
    }
    if (!accepted) break;  // line search exhausted: keep the best iterate
  }
  out.objective = J;
  return out;
}

}  // namespace tgv

#endif
