#ifndef TGV_LOWER_PRIMAL_DUAL_HPP
#define TGV_LOWER_PRIMAL_DUAL_HPP

#include <Eigen/SparseLU>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "tgv/grid.hpp"
#include "tgv/operators.hpp"
#include "tgv/smoothing.hpp"

namespace tgv {

struct PDSolverConfig {
  double mu = 0.1;         // H^1 weight on u
  double alpha_reg = 1.0;  // H^1 weight on w
  double gamma0 = 1e-3;    // Huber radius, tensor term
  double gamma1 = 1e-3;    // Huber radius, vector term
  double delta = 1e-5;     // smoothed-max width
  double kkt_tol = 1e-4;   // per-equation residual tolerance
  int max_newton = 40;

  void validate() const {
    if (!(mu > 0.0 && alpha_reg > 0.0))
      throw std::invalid_argument("PDSolverConfig: mu, alpha_reg must be > 0");
    if (!(gamma0 > 0.5 * delta && gamma1 > 0.5 * delta))
      throw std::invalid_argument("PDSolverConfig: need gamma > delta/2");
    if (!(delta > 0.0)) throw std::invalid_argument("PDSolverConfig: delta must be > 0");
    if (!(kkt_tol > 0.0) || max_newton < 1)
      throw std::invalid_argument("PDSolverConfig: bad kkt_tol/max_newton");
  }
};

struct KKTState {
  ScalarField u;
  VectorField w;
  VectorField q;
  SymTensorField p;  // unscaled components
  bool feasible = false;

  KKTState() = default;
  explicit KKTState(const GridSpec& g) : u(g), w(g), q(g), p(g) {}
};

struct KKTResidual {
  Vector r1, r2, r3, r4;
  double n1 = 0.0, n2 = 0.0, n3 = 0.0, n4 = 0.0;
  double maxNorm() const { return std::max(std::max(n1, n2), std::max(n3, n4)); }
};

namespace detail {

inline Vector broadcast(const Vector& per_pixel, int ncomp) {
  const auto nm = per_pixel.size();
  Vector out(ncomp * nm);
  for (int c = 0; c < ncomp; ++c) out.segment(c * nm, nm) = per_pixel;
  return out;
}

// Per-pixel Euclidean magnitude of a stacked 2-component vector.
inline Vector magnitude2(const Vector& v, int nm) {
  return (v.segment(0, nm).array().square() + v.segment(nm, nm).array().square())
      .sqrt();
}

// Per-pixel Frobenius magnitude of a stacked 3-component tensor.
inline Vector magnitudeFrob(const Vector& e, int nm) {
  return (e.segment(0, nm).array().square() +
          2.0 * e.segment(nm, nm).array().square() +
          e.segment(2 * nm, nm).array().square())
      .sqrt();
}

inline Vector smoothMaxField(const Vector& mag, double gamma, double delta) {
  Vector out(mag.size());
  for (Eigen::Index k = 0; k < mag.size(); ++k)
    out[k] = smooth_max(mag[k], gamma, delta);
  return out;
}

inline Vector smoothMaxDerivField(const Vector& mag, double gamma, double delta) {
  Vector out(mag.size());
  for (Eigen::Index k = 0; k < mag.size(); ++k)
    out[k] = smooth_max_deriv(mag[k], gamma, delta);
  return out;
}

}  // namespace detail

// The four optimality residuals:
//   r1 = u - mu*Lap u + grad^T q - f
//   r2 = alpha (I - Lap) w - q + E^* p
//   r3 = max_d(|grad u - w|, g1) q - alpha1 (grad u - w)
//   r4 = max_d(|Ew|_F, g0) p - alpha0 Ew
inline KKTResidual kkt_residual(const KKTState& x, const ScalarField& f,
                                const Vector& alpha0, const ScalarField& alpha1,
                                const PDSolverConfig& cfg) {
  cfg.validate();
  requireSameGrid(x.u.grid, f.grid, "kkt_residual");
  requireSameGrid(x.u.grid, alpha1.grid, "kkt_residual");
  const auto op = ops(x.u.grid);
  const int nm = x.u.grid.size();
  if (alpha0.size() != nm) throw std::invalid_argument("kkt_residual: alpha0 size");
  if (x.p.scaled) throw std::invalid_argument("kkt_residual: p must be unscaled");

  const Vector g = op->grad_neumann * x.u.values - x.w.values;
  const Vector e = op->sym_gradient * x.w.values;
  const Vector m1 = detail::smoothMaxField(detail::magnitude2(g, nm), cfg.gamma1, cfg.delta);
  const Vector m0 =
      detail::smoothMaxField(detail::magnitudeFrob(e, nm), cfg.gamma0, cfg.delta);

  KKTResidual r;
  r.r1 = x.u.values - cfg.mu * (op->neumann_laplacian * x.u.values) +
         SpMat(op->grad_neumann.transpose()) * x.q.values - f.values;
  r.r2 = cfg.alpha_reg * (x.w.values - op->neumann_laplacian_w * x.w.values) -
         x.q.values + op->sym_gradient_adjoint * x.p.values;
  r.r3 = detail::broadcast(m1, 2).cwiseProduct(x.q.values) -
         detail::broadcast(alpha1.values, 2).cwiseProduct(g);
  r.r4 = detail::broadcast(m0, 3).cwiseProduct(x.p.values) -
         detail::broadcast(alpha0, 3).cwiseProduct(e);
  r.n1 = r.r1.norm();
  r.n2 = r.r2.norm();
  r.n3 = r.r3.norm();
  r.n4 = r.r4.norm();
  return r;
}

struct KKTBlocks {
  SpMat A;   // 3nm x 3nm, SPD
  SpMat B;   // 3nm x 5nm
  SpMat C;   // 5nm x 3nm (depends on the iterate)
  Vector D;  // 5nm diagonal, entries >= min(gamma0, gamma1)
  Vector b1; // 3nm
  Vector b2; // 5nm
};

inline KKTBlocks assemble_kkt_blocks(const KKTState& x, const ScalarField& f,
                                     const Vector& alpha0, const ScalarField& alpha1,
                                     const PDSolverConfig& cfg) {
  cfg.validate();
  const auto op = ops(x.u.grid);
  const int nm = x.u.grid.size();
  const Vector g = op->grad_neumann * x.u.values - x.w.values;
  const Vector e = op->sym_gradient * x.w.values;
  const Vector gmag = detail::magnitude2(g, nm);
  const Vector emag = detail::magnitudeFrob(e, nm);
  const Vector m1 = detail::smoothMaxField(gmag, cfg.gamma1, cfg.delta);
  const Vector m0 = detail::smoothMaxField(emag, cfg.gamma0, cfg.delta);
  const Vector x1 = detail::smoothMaxDerivField(gmag, cfg.gamma1, cfg.delta);
  const Vector x0 = detail::smoothMaxDerivField(emag, cfg.gamma0, cfg.delta);

  KKTBlocks out;
  {
    SpMat id_u(nm, nm), id_w(2 * nm, 2 * nm);
    id_u.setIdentity();
    id_w.setIdentity();
    SpMat a_u = SpMat(id_u - cfg.mu * op->neumann_laplacian);
    SpMat a_w = SpMat(cfg.alpha_reg * SpMat(id_w - op->neumann_laplacian_w));
    out.A = detail::blockDiag({&a_u, &a_w});
  }
  {
    SpMat gt = SpMat(op->grad_neumann.transpose());
    SpMat z(nm, 3 * nm);
    SpMat id_w(2 * nm, 2 * nm);
    id_w.setIdentity();
    SpMat top = detail::hcat(gt, z);
    SpMat bottom = detail::hcat(SpMat(-id_w), op->sym_gradient_adjoint);
    out.B = detail::vcat(top, bottom);
  }
  {
    // dr3/dg = Qhat - diag(alpha1), with Qhat the per-pixel rank-one
    // q (X1 * g/|g|)^T; the quotient is zeroed wherever X1 vanishes.
    std::vector<Triplet> t3;
    t3.reserve(size_t(nm) * 4);
    for (int k = 0; k < nm; ++k) {
      double gh[2] = {0.0, 0.0};
      if (x1[k] != 0.0) {
        const double mg = std::max(gmag[k], 1e-300);
        gh[0] = x1[k] * g[k] / mg;
        gh[1] = x1[k] * g[nm + k] / mg;
      }
      const double qv[2] = {x.q.values[k], x.q.values[nm + k]};
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          double v = qv[r] * gh[c];
          if (r == c) v -= alpha1.values[k];
          if (v != 0.0) t3.emplace_back(r * nm + k, c * nm + k, v);
        }
    }
    SpMat dr3dg(2 * nm, 2 * nm);
    dr3dg.setFromTriplets(t3.begin(), t3.end());

    // dr4/de = Phat - diag(alpha0) with the Frobenius-weighted quotient.
    std::vector<Triplet> t4;
    t4.reserve(size_t(nm) * 9);
    const double fw[3] = {1.0, 2.0, 1.0};
    for (int k = 0; k < nm; ++k) {
      double eh[3] = {0.0, 0.0, 0.0};
      if (x0[k] != 0.0) {
        const double me = std::max(emag[k], 1e-300);
        for (int c = 0; c < 3; ++c) eh[c] = x0[k] * fw[c] * e[c * nm + k] / me;
      }
      const double pv[3] = {x.p.values[k], x.p.values[nm + k], x.p.values[2 * nm + k]};
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          double v = pv[r] * eh[c];
          if (r == c) v -= alpha0[k];
          if (v != 0.0) t4.emplace_back(r * nm + k, c * nm + k, v);
        }
    }
    SpMat dr4de(3 * nm, 3 * nm);
    dr4de.setFromTriplets(t4.begin(), t4.end());

    SpMat c3 = detail::hcat(SpMat(dr3dg * op->grad_neumann), SpMat(-dr3dg));
    SpMat zc(3 * nm, nm);
    SpMat c4 = detail::hcat(zc, SpMat(dr4de * op->sym_gradient));
    out.C = detail::vcat(c3, c4);
  }
  out.D = Vector(5 * nm);
  out.D.segment(0, 2 * nm) = detail::broadcast(m1, 2);
  out.D.segment(2 * nm, 3 * nm) = detail::broadcast(m0, 3);

  out.b1 = Vector::Zero(3 * nm);
  out.b1.segment(0, nm) = f.values;
  out.b2 = Vector(5 * nm);
  out.b2.segment(0, 2 * nm) =
      x.q.values.cwiseProduct(detail::broadcast(Vector(x1.cwiseProduct(gmag)), 2));
  out.b2.segment(2 * nm, 3 * nm) =
      x.p.values.cwiseProduct(detail::broadcast(Vector(x0.cwiseProduct(emag)), 3));
  return out;
}

struct PDSolveResult {
  KKTState x;
  int newton_iterations = 0;
  std::vector<double> residual_history;  // max of the four norms per iterate
  bool converged = false;
};

// Semismooth Newton with Schur elimination: solve
//   (A - B D^{-1} C) x1 = b1 - B D^{-1} b2
// for (u, w), back-substitute (q~, p~) = D^{-1}(b2 - C x1), then project
// (q~, p~) onto the feasible set so the next linearization stays definite.
inline PDSolveResult pd_newton_solve(const ScalarField& f, const Vector& alpha0,
                                     const ScalarField& alpha1,
                                     const PDSolverConfig& cfg,
                                     const KKTState* x_init = nullptr) {
  cfg.validate();
  requireSameGrid(f.grid, alpha1.grid, "pd_newton_solve");
  const int nm = f.grid.size();
  if (alpha0.size() != nm) throw std::invalid_argument("pd_newton_solve: alpha0 size");
  if ((alpha0.array() <= 0.0).any() || (alpha1.values.array() <= 0.0).any())
    throw std::invalid_argument("pd_newton_solve: weights must be positive");

  PDSolveResult out;
  if (x_init != nullptr) {
    out.x = *x_init;
    out.x.p = out.x.p.toUnscaled();
    std::tie(out.x.q, out.x.p) =
        project_feasible(out.x.q, out.x.p, alpha0, alpha1.values);
  } else {
    out.x = KKTState(f.grid);
    out.x.u.values = f.values;
  }
  out.x.feasible = true;

  for (;;) {
    const KKTResidual res = kkt_residual(out.x, f, alpha0, alpha1, cfg);
    out.residual_history.push_back(res.maxNorm());
    if (res.maxNorm() <= cfg.kkt_tol) {
      out.converged = true;
      return out;
    }
    if (out.newton_iterations >= cfg.max_newton) return out;
    ++out.newton_iterations;

    const KKTBlocks blk = assemble_kkt_blocks(out.x, f, alpha0, alpha1, cfg);
    const Vector dinv = blk.D.cwiseInverse();
    SpMat dinvC(5 * nm, 3 * nm);
    dinvC = SpMat(dinv.asDiagonal()) * blk.C;
    SpMat S = SpMat(blk.A - SpMat(blk.B * dinvC));
    S.makeCompressed();
    Eigen::SparseLU<SpMat> solver(S);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("pd_newton_solve: Schur factorization failed");
    const Vector rhs = blk.b1 - blk.B * Vector(dinv.cwiseProduct(blk.b2));
    const Vector x1 = solver.solve(rhs);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("pd_newton_solve: Schur solve failed");
    const Vector x2 = dinv.cwiseProduct(blk.b2 - blk.C * x1);

    out.x.u.values = x1.segment(0, nm);
    out.x.w.values = x1.segment(nm, 2 * nm);
    VectorField qt(f.grid, x2.segment(0, 2 * nm));
    SymTensorField pt(f.grid, x2.segment(2 * nm, 3 * nm), false);
    std::tie(out.x.q, out.x.p) = project_feasible(qt, pt, alpha0, alpha1.values);
  }
}

inline PDSolveResult pd_newton_solve(const ScalarField& f, double alpha0,
                                     const ScalarField& alpha1,
                                     const PDSolverConfig& cfg,
                                     const KKTState* x_init = nullptr) {
  return pd_newton_solve(f, Vector(Vector::Constant(f.grid.size(), alpha0)), alpha1,
                         cfg, x_init);
}

// Doubly regularized primal energy:
//   1/2|u-f|^2 + sum a1 huber(|grad u - w|) + sum a0 huber(|Ew|_F)
//   + mu/2 |grad u|^2 + alpha/2 (|w|^2 + |grad w|^2), h^2-weighted.
inline double primal_energy(const ScalarField& u, const VectorField& w,
                            const ScalarField& f, const Vector& alpha0,
                            const ScalarField& alpha1, const PDSolverConfig& cfg) {
  cfg.validate();
  const auto op = ops(u.grid);
  const int nm = u.grid.size();
  const Vector gu = op->grad_neumann * u.values;
  const Vector g = gu - w.values;
  const Vector e = op->sym_gradient * w.values;
  const Vector gmag = detail::magnitude2(g, nm);
  const Vector emag = detail::magnitudeFrob(e, nm);

  double val = 0.5 * (u.values - f.values).squaredNorm();
  for (int k = 0; k < nm; ++k) {
    val += alpha1.values[k] * huber(gmag[k], cfg.gamma1);
    val += alpha0[k] * huber(emag[k], cfg.gamma0);
  }
  val += 0.5 * cfg.mu * gu.squaredNorm();
  val += 0.5 * cfg.alpha_reg *
         (w.values.squaredNorm() + (op->grad_neumann * Vector(w.comp(0))).squaredNorm() +
          (op->grad_neumann * Vector(w.comp(1))).squaredNorm());
  return u.grid.h * u.grid.h * val;
}

// Gradient of primal_energy with respect to (u, w); used by consistency
// tests against the KKT residuals.
inline std::pair<Vector, Vector> primal_energy_grad(
    const ScalarField& u, const VectorField& w, const ScalarField& f,
    const Vector& alpha0, const ScalarField& alpha1, const PDSolverConfig& cfg) {
  const auto op = ops(u.grid);
  const int nm = u.grid.size();
  const Vector gu = op->grad_neumann * u.values;
  const Vector g = gu - w.values;
  const Vector e = op->sym_gradient * w.values;
  const Vector gmag = detail::magnitude2(g, nm);
  const Vector emag = detail::magnitudeFrob(e, nm);

  // Huber gradient: v / max(gamma, |v|) per pixel, weighted by alpha.
  Vector hg(2 * nm), he(3 * nm);
  for (int k = 0; k < nm; ++k) {
    const double s1 = alpha1.values[k] / std::max(cfg.gamma1, gmag[k]);
    hg[k] = s1 * g[k];
    hg[nm + k] = s1 * g[nm + k];
    const double s0 = alpha0[k] / std::max(cfg.gamma0, emag[k]);
    const double fw[3] = {1.0, 2.0, 1.0};
    for (int c = 0; c < 3; ++c) he[c * nm + k] = s0 * fw[c] * e[c * nm + k];
  }
  Vector du = u.values - f.values + SpMat(op->grad_neumann.transpose()) * hg -
              cfg.mu * (op->neumann_laplacian * u.values);
  Vector dw = -hg + SpMat(op->sym_gradient.transpose()) * he +
              cfg.alpha_reg * (w.values - op->neumann_laplacian_w * w.values);
  const double h2 = u.grid.h * u.grid.h;
  return {Vector(h2 * du), Vector(h2 * dw)};
}

}  // namespace tgv

#endif
