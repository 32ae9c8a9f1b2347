#ifndef TGV_H1_PROJECTION_HPP
#define TGV_H1_PROJECTION_HPP

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <deque>
#include <stdexcept>
#include <vector>

#include "tgv/grid.hpp"
#include "tgv/norms.hpp"

namespace tgv {

struct ProjectionSpec {
  Vector lower;
  Vector upper;
  double eps_alpha = 1e-10;
  double lap_weight = 1.0;
  double tol = 1e-12;
  int max_iter = 100;

  ProjectionSpec(Vector lo, Vector up, double eps, double w = 1.0)
      : lower(std::move(lo)), upper(std::move(up)), eps_alpha(eps), lap_weight(w) {
    if (lower.size() != upper.size())
      throw std::invalid_argument("ProjectionSpec: bound size mismatch");
    if ((lower.array() >= upper.array()).any())
      throw std::invalid_argument("ProjectionSpec: need lower < upper pointwise");
    if (!(eps_alpha > 0.0 && lap_weight > 0.0))
      throw std::invalid_argument("ProjectionSpec: need eps_alpha, lap_weight > 0");
  }
  ProjectionSpec(double lo, double up, int size, double eps, double w = 1.0)
      : ProjectionSpec(Vector::Constant(size, lo), Vector::Constant(size, up), eps, w) {}
};

inline double clamp_scalar(double a0, double lower, double upper) {
  if (lower > upper) throw std::invalid_argument("clamp_scalar: lower > upper");
  return std::clamp(a0, lower, upper);
}

// Penalized H^1 box projection: semismooth Newton on
//   (I - w*Lap_N)(a - a_tilde) + (1/eps)[(a - up)^+ - (lo - a)^+] = 0
// with the active-set generalized Jacobian. The result overshoots the box
// by at most O(eps).
inline ScalarField project_h1(const ScalarField& a_tilde, const ProjectionSpec& spec,
                              const RieszMap& riesz) {
  requireSameGrid(a_tilde.grid, riesz.grid(), "project_h1");
  const int nm = a_tilde.grid.size();
  if (spec.lower.size() != nm)
    throw std::invalid_argument("project_h1: bound size mismatch");
  if (riesz.lapWeight() != spec.lap_weight)
    throw std::invalid_argument("project_h1: Riesz map weight mismatch");

  const SpMat& M = riesz.matrix();
  Vector a = a_tilde.values;
  a = a.cwiseMax(spec.lower).cwiseMin(spec.upper);  // feasible start

  auto residual = [&](const Vector& v) {
    const Vector over = (v - spec.upper).cwiseMax(0.0);
    const Vector under = (spec.lower - v).cwiseMax(0.0);
    return Vector(M * (v - a_tilde.values) + (over - under) / spec.eps_alpha);
  };

  Vector best_a = a;
  double best_rnorm = residual(a).norm();
  std::deque<std::pair<std::vector<char>, double>> recent_sets;
  for (int it = 0; it < spec.max_iter; ++it) {
    const double rnorm = residual(a).norm();
    if (rnorm <= spec.tol) return ScalarField(a_tilde.grid, a);
    if (rnorm < best_rnorm) {
      best_rnorm = rnorm;
      best_a = a;
    }

    std::vector<char> active(nm, 0);
    for (int k = 0; k < nm; ++k)
      active[k] = (a[k] > spec.upper[k] || a[k] < spec.lower[k]) ? 1 : 0;
    // undamped semismooth Newton terminates finitely in exact arithmetic; a
    // revisited active set without residual progress means the iterate flips
    // around a kink at rounding level, so the best point is the answer (its
    // residual is at the O(eps_alpha) floor of the penalty formulation)
    for (const auto& [s, r] : recent_sets)
      if (s == active && rnorm >= 0.5 * r)
        return ScalarField(a_tilde.grid, best_a);
    recent_sets.emplace_back(active, rnorm);
    if (recent_sets.size() > 4) recent_sets.pop_front();

    SpMat J = M;
    for (int k = 0; k < nm; ++k)
      if (active[k]) J.coeffRef(k, k) += 1.0 / spec.eps_alpha;
    Eigen::SimplicialLDLT<SpMat> solver(J);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("project_h1: Jacobian factorization failed");
    const Vector da = solver.solve(residual(a));
    a -= da;
    // with a fixed active set the step lands on the exact piecewise solution;
    // once it stops moving the residual is at its rounding floor
    if (da.norm() <= spec.tol * std::max(1.0, a.norm()))
      return ScalarField(a_tilde.grid, a);
  }
  throw std::runtime_error("project_h1: no convergence within max_iter");
}

}  // namespace tgv

#endif
