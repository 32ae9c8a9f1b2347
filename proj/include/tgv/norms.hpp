#ifndef TGV_NORMS_HPP
#define TGV_NORMS_HPP

#include <Eigen/SparseCholesky>

#include <stdexcept>

#include "tgv/grid.hpp"
#include "tgv/operators.hpp"

namespace tgv {

inline double l2_norm(const ScalarField& u) {
  return u.grid.h * u.values.norm();
}

inline double l2_norm(const GridSpec& g, const Vector& v) {
  return g.h * v.norm();
}

// H^1 Riesz map (I - w * Lap_N) with a cached Cholesky factorization.
// The weight w scales the Laplacian inside the inner product.
class RieszMap {
 public:
  RieszMap(const GridSpec& g, double lap_weight = 1.0)
      : grid_(g), lap_weight_(lap_weight) {
    const auto op = ops(g);
    SpMat id(g.size(), g.size());
    id.setIdentity();
    mat_ = SpMat(id - lap_weight * op->neumann_laplacian);
    solver_.compute(mat_);
    if (solver_.info() != Eigen::Success)
      throw std::runtime_error("RieszMap: factorization of I - w*Lap_N failed");
  }

  const SpMat& matrix() const { return mat_; }
  double lapWeight() const { return lap_weight_; }
  const GridSpec& grid() const { return grid_; }

  Vector apply(const Vector& a) const { return mat_ * a; }
  Vector solve(const Vector& r) const {
    Vector x = solver_.solve(r);
    if (solver_.info() != Eigen::Success)
      throw std::runtime_error("RieszMap: singular system");
    return x;
  }

  // h * sqrt(a^T (I - w*Lap_N) a)
  double h1Norm(const Vector& a) const {
    return grid_.h * std::sqrt(std::max(0.0, a.dot(mat_ * a)));
  }
  // h * sqrt(r^T (I - w*Lap_N)^{-1} r)
  double h1DualNorm(const Vector& r) const {
    return grid_.h * std::sqrt(std::max(0.0, r.dot(solve(r))));
  }

 private:
  GridSpec grid_;
  double lap_weight_;
  SpMat mat_;
  Eigen::SimplicialLDLT<SpMat> solver_;
};

inline double h1_norm(const ScalarField& a, const RieszMap& riesz) {
  requireSameGrid(a.grid, riesz.grid(), "h1_norm");
  return riesz.h1Norm(a.values);
}

inline double h1_dual_norm(const ScalarField& r, const RieszMap& riesz) {
  requireSameGrid(r.grid, riesz.grid(), "h1_dual_norm");
  return riesz.h1DualNorm(r.values);
}

// Diagnostic only: the discrete H_0^2 dual norm h*sqrt(v^T (I + Lap^2)^{-1} v).
// No algorithm step uses it.
inline double h2_dual_norm(const ScalarField& v) {
  const auto op = ops(v.grid);
  SpMat id(v.grid.size(), v.grid.size());
  id.setIdentity();
  SpMat mat = SpMat(id + op->bilap_scalar);
  Eigen::SimplicialLDLT<SpMat> solver(mat);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("h2_dual_norm: factorization failed");
  Vector x = solver.solve(v.values);
  return v.grid.h * std::sqrt(std::max(0.0, v.values.dot(x)));
}

}  // namespace tgv

#endif
