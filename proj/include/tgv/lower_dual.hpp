#ifndef TGV_LOWER_DUAL_HPP
#define TGV_LOWER_DUAL_HPP

#include <Eigen/SparseCholesky>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tgv/grid.hpp"
#include "tgv/operators.hpp"
#include "tgv/smoothing.hpp"

namespace tgv {

struct DualSolverConfig {
  double beta = 1e-3;    // H_0^2 regularization
  double gamma = 0.0;    // L^2 regularization (beta > 0 keeps things definite)
  double delta = 1e-6;   // penalty smoothing width
  double eps0_init = 1e3;
  double eps1_init = 1e3;
  double eps0_final = 1e-12;
  double eps1_final = 1e-12;
  double theta_eps = 0.05;
  double newton_tol = 1e-8;
  int max_newton = 500;
  bool line_search = true;

  void validate() const {
    if (!(beta > 0.0)) throw std::invalid_argument("DualSolverConfig: beta must be > 0");
    if (gamma < 0.0) throw std::invalid_argument("DualSolverConfig: gamma must be >= 0");
    if (!(delta > 0.0)) throw std::invalid_argument("DualSolverConfig: delta must be > 0");
    if (!(theta_eps > 0.0 && theta_eps < 1.0))
      throw std::invalid_argument("DualSolverConfig: theta_eps must lie in (0,1)");
    if (eps0_final > eps0_init || eps1_final > eps1_init)
      throw std::invalid_argument("DualSolverConfig: final eps must not exceed initial");
    if (!(eps0_final > 0.0 && eps1_final > 0.0))
      throw std::invalid_argument("DualSolverConfig: eps must be > 0");
    if (!(newton_tol > 0.0) || max_newton < 1)
      throw std::invalid_argument("DualSolverConfig: bad newton_tol/max_newton");
  }
};

inline ScalarField recover_image(const SymTensorField& p, const ScalarField& f) {
  requireSameGrid(p.grid, f.grid, "recover_image");
  const SymTensorField pu = p.toUnscaled();
  const auto op = ops(p.grid);
  return ScalarField(f.grid, f.values - op->second_divergence * pu.values);
}

namespace detail {

// Frobenius weights (1, 2, 1) over the stacked tensor components.
inline Vector tensorWeights(int nm) {
  Vector w(3 * nm);
  w.segment(0, nm).setOnes();
  w.segment(nm, nm).setConstant(2.0);
  w.segment(2 * nm, nm).setOnes();
  return w;
}

inline Vector broadcast3(const Vector& a, int nm) {
  Vector out(3 * nm);
  out.segment(0, nm) = a;
  out.segment(nm, nm) = a;
  out.segment(2 * nm, nm) = a;
  return out;
}

}  // namespace detail

// Regularized predual energy in plain coordinates x = (p11, p12, p22):
//   E(x) = h^2 [ beta/2 |Lap p|_F^2 + gamma/2 |p|_F^2 + 1/2 |f - div^2 p|^2
//                + (1/eps0) sum_c G(p_c - a0) + G(-p_c - a0)
//                + (1/eps1) sum_c G((div p)_c - a1) + G(-(div p)_c - a1) ]
// The box penalties act componentwise (the anisotropic feasible set).
inline double dual_energy(const SymTensorField& p, const ScalarField& f,
                          double alpha0, const ScalarField& alpha1,
                          const DualSolverConfig& cfg, double eps0 = -1.0,
                          double eps1 = -1.0) {
  cfg.validate();
  requireSameGrid(p.grid, f.grid, "dual_energy");
  requireSameGrid(p.grid, alpha1.grid, "dual_energy");
  if (eps0 <= 0.0) eps0 = cfg.eps0_final;
  if (eps1 <= 0.0) eps1 = cfg.eps1_final;
  const auto op = ops(p.grid);
  const int nm = p.grid.size();
  const Vector x = p.toUnscaled().values;
  const Vector w = detail::tensorWeights(nm);

  Vector lap_each(3 * nm);
  for (int c = 0; c < 3; ++c)
    lap_each.segment(c * nm, nm) = op->lap_dirichlet * x.segment(c * nm, nm);

  const Vector resid = f.values - op->second_divergence * x;
  const Vector dv = op->divergence * x;

  double pen0 = 0.0, pen1 = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < nm; ++k)
      pen0 += box_penalty(x[c * nm + k], alpha0, cfg.delta);
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < nm; ++k)
      pen1 += box_penalty(dv[c * nm + k], alpha1.values[k], cfg.delta);

  const double quad = 0.5 * cfg.beta * lap_each.dot(w.cwiseProduct(lap_each)) +
                      0.5 * cfg.gamma * x.dot(w.cwiseProduct(x)) +
                      0.5 * resid.squaredNorm();
  return p.grid.h * p.grid.h * (quad + pen0 / eps0 + pen1 / eps1);
}

// Exact gradient of dual_energy with respect to x.
inline SymTensorField dual_residual(const SymTensorField& p, const ScalarField& f,
                                    double alpha0, const ScalarField& alpha1,
                                    const DualSolverConfig& cfg, double eps0 = -1.0,
                                    double eps1 = -1.0) {
  cfg.validate();
  requireSameGrid(p.grid, f.grid, "dual_residual");
  requireSameGrid(p.grid, alpha1.grid, "dual_residual");
  if (eps0 <= 0.0) eps0 = cfg.eps0_final;
  if (eps1 <= 0.0) eps1 = cfg.eps1_final;
  const auto op = ops(p.grid);
  const int nm = p.grid.size();
  const Vector x = p.toUnscaled().values;
  const Vector w = detail::tensorWeights(nm);

  Vector biharm(3 * nm);
  for (int c = 0; c < 3; ++c)
    biharm.segment(c * nm, nm) =
        op->lap_dirichlet * Vector(op->lap_dirichlet * x.segment(c * nm, nm));

  const Vector dv = op->divergence * x;
  const Vector a0vec = Vector::Constant(nm, alpha0);

  Vector g = cfg.beta * w.cwiseProduct(biharm) + cfg.gamma * w.cwiseProduct(x);
  g += SpMat(op->second_divergence.transpose()) *
       Vector(op->second_divergence * x - f.values);
  g += penalty_deriv(x, a0vec, cfg.delta) / eps0;
  g += SpMat(op->divergence.transpose()) *
       Vector(penalty_deriv(dv, alpha1.values, cfg.delta) / eps1);
  g *= p.grid.h * p.grid.h;
  return SymTensorField(p.grid, std::move(g), false);
}

// Hessian of dual_energy: symmetric positive definite for beta > 0.
inline SpMat dual_hessian(const SymTensorField& p, double alpha0,
                          const ScalarField& alpha1, const DualSolverConfig& cfg,
                          double eps0 = -1.0, double eps1 = -1.0) {
  cfg.validate();
  if (eps0 <= 0.0) eps0 = cfg.eps0_final;
  if (eps1 <= 0.0) eps1 = cfg.eps1_final;
  const auto op = ops(p.grid);
  const int nm = p.grid.size();
  const Vector x = p.toUnscaled().values;
  const Vector w = detail::tensorWeights(nm);
  const Vector dv = op->divergence * x;
  const Vector a0vec = Vector::Constant(nm, alpha0);

  SpMat wdiag(3 * nm, 3 * nm);
  wdiag = w.asDiagonal();
  SpMat bilap_w = (wdiag * op->bilaplacian).pruned();

  SpMat H = SpMat(cfg.beta * bilap_w);
  H += SpMat(cfg.gamma * wdiag);
  H += SpMat(SpMat(op->second_divergence.transpose()) * op->second_divergence);
  {
    Vector d0 = penalty_second(x, a0vec, cfg.delta) / eps0;
    SpMat D0(3 * nm, 3 * nm);
    D0 = d0.asDiagonal();
    H += D0;
  }
  {
    Vector d1 = penalty_second(dv, alpha1.values, cfg.delta) / eps1;
    SpMat D1(2 * nm, 2 * nm);
    D1 = d1.asDiagonal();
    H += SpMat(SpMat(op->divergence.transpose()) * SpMat(D1 * op->divergence));
  }
  return SpMat((p.grid.h * p.grid.h) * H);
}

// One Newton step at the given eps: solves H dx = -g.
inline SymTensorField dual_newton_step(const SymTensorField& p, const ScalarField& f,
                                       double alpha0, const ScalarField& alpha1,
                                       const DualSolverConfig& cfg,
                                       double eps0 = -1.0, double eps1 = -1.0) {
  const SymTensorField g = dual_residual(p, f, alpha0, alpha1, cfg, eps0, eps1);
  const SpMat H = dual_hessian(p, alpha0, alpha1, cfg, eps0, eps1);
  Eigen::SimplicialLDLT<SpMat> solver(H);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("dual_newton_step: Hessian factorization failed");
  Vector dx = solver.solve(Vector(-g.values));
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("dual_newton_step: linear solve failed");
  return SymTensorField(p.grid, std::move(dx), false);
}

struct DualSolveResult {
  SymTensorField p;
  int newton_iterations = 0;
  std::vector<double> residual_history;
  bool converged = false;
};

namespace detail {

// Inner Newton loop at fixed eps; returns false if the iteration budget or
// the damping guard runs out.
inline bool dualNewtonInner(SymTensorField& p, const ScalarField& f, double alpha0,
                            const ScalarField& alpha1, const DualSolverConfig& cfg,
                            double eps0, double eps1, double tol,
                            DualSolveResult& out, int iter_budget) {
  int used = 0;
  for (;;) {
    SymTensorField g = dual_residual(p, f, alpha0, alpha1, cfg, eps0, eps1);
    const double gnorm = g.values.norm();
    out.residual_history.push_back(gnorm);
    if (gnorm <= tol) return true;
    if (out.newton_iterations >= cfg.max_newton || used >= iter_budget) return false;
    ++out.newton_iterations;
    ++used;

    const SpMat H = dual_hessian(p, alpha0, alpha1, cfg, eps0, eps1);
    Eigen::SimplicialLDLT<SpMat> solver(H);
    if (solver.info() != Eigen::Success) return false;
    const Vector dx = solver.solve(Vector(-g.values));
    if (solver.info() != Eigen::Success) return false;

    if (!cfg.line_search) {
      p.values += dx;
      continue;
    }
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 30; ++ls) {
      SymTensorField trial(p.grid, Vector(p.values + t * dx), false);
      const double tn =
          dual_residual(trial, f, alpha0, alpha1, cfg, eps0, eps1).values.norm();
      if (tn < gnorm || !std::isfinite(gnorm)) {
        p = std::move(trial);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) return false;
  }
}

}  // namespace detail

// Path-following solve: eps decays geometrically from the initial values,
// clamped at the finals; each stage warm-starts from the previous one with
// a loosened inner tolerance.
inline DualSolveResult solve_lower_dual(const ScalarField& f, double alpha0,
                                        const ScalarField& alpha1,
                                        const DualSolverConfig& cfg,
                                        const SymTensorField* warm_start = nullptr) {
  cfg.validate();
  requireSameGrid(f.grid, alpha1.grid, "solve_lower_dual");
  if (!(alpha0 > 0.0) || (alpha1.values.array() <= 0.0).any())
    throw std::invalid_argument("solve_lower_dual: weights must be positive");

  DualSolveResult out;
  out.p = SymTensorField(f.grid);

  if (warm_start != nullptr) {
    requireSameGrid(warm_start->grid, f.grid, "solve_lower_dual warm start");
    out.p = warm_start->toUnscaled();
    // direct attempt at the final eps with a small budget
    if (detail::dualNewtonInner(out.p, f, alpha0, alpha1, cfg, cfg.eps0_final,
                                cfg.eps1_final, cfg.newton_tol, out, 25)) {
      out.converged = true;
      return out;
    }
    // direct attempt failed: re-run the path, but keep the warm state
  }

  // count stages to schedule the inner tolerances
  int stages = 1;
  {
    double e0 = cfg.eps0_init, e1 = cfg.eps1_init;
    while (e0 > cfg.eps0_final || e1 > cfg.eps1_final) {
      e0 = std::max(cfg.theta_eps * e0, cfg.eps0_final);
      e1 = std::max(cfg.theta_eps * e1, cfg.eps1_final);
      ++stages;
    }
  }
  const double tol0 = std::max(1e-2, cfg.newton_tol);
  double e0 = cfg.eps0_init, e1 = cfg.eps1_init;
  for (int s = 0; s < stages; ++s) {
    const double frac = stages > 1 ? double(s) / double(stages - 1) : 1.0;
    const double tol = tol0 * std::pow(cfg.newton_tol / tol0, frac);
    if (!detail::dualNewtonInner(out.p, f, alpha0, alpha1, cfg, e0, e1, tol, out,
                                 cfg.max_newton))
      return out;  // converged stays false; history carries the residuals
    e0 = std::max(cfg.theta_eps * e0, cfg.eps0_final);
    e1 = std::max(cfg.theta_eps * e1, cfg.eps1_final);
  }
  out.converged = true;
  return out;
}

}  // namespace tgv

#endif
