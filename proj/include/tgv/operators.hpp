#ifndef TGV_OPERATORS_HPP
#define TGV_OPERATORS_HPP

#include <Eigen/Sparse>

#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <tuple>
#include <vector>

#include "tgv/grid.hpp"

namespace tgv {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Boundary handling of an assembled operator:
//  - DirichletGhostZero: out-of-range stencil points read as 0 (the H_0^2 side,
//    acting on the dual variable p).
//  - NeumannNearest: out-of-range points replicate the nearest grid value
//    (primal side: u, w and the weight fields).
enum class BoundaryTag { DirichletGhostZero, NeumannNearest };

struct SparseOperator {
  SpMat mat;
  BoundaryTag bc = BoundaryTag::DirichletGhostZero;

  Eigen::Index rows() const { return mat.rows(); }
  Eigen::Index cols() const { return mat.cols(); }
  Vector apply(const Vector& v) const { return mat * v; }

  // Text triple list, one "row col value" per line.
  void dump(std::ostream& os) const {
    for (int k = 0; k < mat.outerSize(); ++k)
      for (SpMat::InnerIterator it(mat, k); it; ++it)
        os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
  }
};

namespace detail {

struct Stencil {
  int di, dj;
  double w;
};

inline SpMat assembleGhostZero(const GridSpec& g, const std::vector<Stencil>& st,
                               double scale) {
  std::vector<Triplet> trips;
  trips.reserve(size_t(g.size()) * st.size());
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.m; ++j)
      for (const auto& s : st) {
        const int ii = i + s.di, jj = j + s.dj;
        if (ii < 0 || ii >= g.n || jj < 0 || jj >= g.m) continue;  // ghost = 0
        trips.emplace_back(g.idx(i, j), g.idx(ii, jj), scale * s.w);
      }
  SpMat out(g.size(), g.size());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// Forward difference along rows (the "x" index i), replicate boundary:
// the last row maps to zero.
inline SpMat forwardDiffX(const GridSpec& g) {
  std::vector<Triplet> trips;
  for (int i = 0; i + 1 < g.n; ++i)
    for (int j = 0; j < g.m; ++j) {
      trips.emplace_back(g.idx(i, j), g.idx(i, j), -1.0 / g.h);
      trips.emplace_back(g.idx(i, j), g.idx(i + 1, j), 1.0 / g.h);
    }
  SpMat out(g.size(), g.size());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline SpMat forwardDiffY(const GridSpec& g) {
  std::vector<Triplet> trips;
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j + 1 < g.m; ++j) {
      trips.emplace_back(g.idx(i, j), g.idx(i, j), -1.0 / g.h);
      trips.emplace_back(g.idx(i, j), g.idx(i, j + 1), 1.0 / g.h);
    }
  SpMat out(g.size(), g.size());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline SpMat hcat(const SpMat& a, const SpMat& b) {
  SpMat out(a.rows(), a.cols() + b.cols());
  std::vector<Triplet> trips;
  trips.reserve(size_t(a.nonZeros() + b.nonZeros()));
  for (int k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator it(a, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < b.outerSize(); ++k)
    for (SpMat::InnerIterator it(b, k); it; ++it)
      trips.emplace_back(it.row(), int(a.cols()) + it.col(), it.value());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline SpMat vcat(const SpMat& a, const SpMat& b) {
  SpMat out(a.rows() + b.rows(), a.cols());
  std::vector<Triplet> trips;
  trips.reserve(size_t(a.nonZeros() + b.nonZeros()));
  for (int k = 0; k < a.outerSize(); ++k)
    for (SpMat::InnerIterator it(a, k); it; ++it)
      trips.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < b.outerSize(); ++k)
    for (SpMat::InnerIterator it(b, k); it; ++it)
      trips.emplace_back(int(a.rows()) + it.row(), it.col(), it.value());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline SpMat blockDiag(const std::vector<const SpMat*>& blocks) {
  Eigen::Index r = 0, c = 0, nnz = 0;
  for (auto* b : blocks) {
    r += b->rows();
    c += b->cols();
    nnz += b->nonZeros();
  }
  std::vector<Triplet> trips;
  trips.reserve(size_t(nnz));
  Eigen::Index ro = 0, co = 0;
  for (auto* b : blocks) {
    for (int k = 0; k < b->outerSize(); ++k)
      for (SpMat::InnerIterator it(*b, k); it; ++it)
        trips.emplace_back(int(ro + it.row()), int(co + it.col()), it.value());
    ro += b->rows();
    co += b->cols();
  }
  SpMat out(r, c);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

}  // namespace detail

// Every discrete differential operator for one grid, assembled once.
//
// Dual-side operators (acting on p in V_h) use ghost-zero boundary values;
// primal-side operators (u, w, weights) replicate the nearest grid value.
// Sizes: U_h -> nm, W_h -> 2nm, V_h -> 3nm with components (11, 12, 22).
struct DiffOps {
  GridSpec grid;

  // --- ghost-zero (H_0^2) side ---
  SpMat dxx, dyy, dxy;     // U_h -> U_h second differences
  SpMat lap_dirichlet;     // dxx + dyy
  SpMat bilap_scalar;      // 13-point bilaplacian, U_h -> U_h
  SpMat divergence;        // V_h -> W_h
  SpMat gradient;          // W_h -> V_h, exactly -divergence^T
  SpMat second_gradient;   // U_h -> V_h, (Dxx, Dxy, Dyy)
  SpMat second_divergence; // V_h -> U_h, [Dxx, 2 Dxy, Dyy]
  SpMat grad2_div2;        // V_h -> V_h (unscaled components)
  SpMat grad2_div2_scaled; // same operator on (p11, 2p12, p22); symmetric
  SpMat bilaplacian;       // V_h -> V_h componentwise
  SpMat bilaplacian_scaled;  // (Lap^2, Lap^2/2, Lap^2) blocks; symmetric

  // --- Neumann (primal) side ---
  SpMat dx_forward, dy_forward;  // U_h -> U_h forward differences
  SpMat grad_neumann;            // U_h -> W_h
  SpMat neumann_laplacian;       // U_h -> U_h, annihilates constants
  SpMat neumann_laplacian_w;     // W_h -> W_h componentwise
  SpMat sym_gradient;            // W_h -> V_h, E w
  SpMat sym_gradient_adjoint;    // V_h -> W_h, E^T diag(1,2,1)

  explicit DiffOps(const GridSpec& g) : grid(g) {
    using detail::Stencil;
    const double h2 = 1.0 / (g.h * g.h);

    dxx = detail::assembleGhostZero(
        g, {{-1, 0, 1.0}, {0, 0, -2.0}, {1, 0, 1.0}}, h2);
    dyy = detail::assembleGhostZero(
        g, {{0, -1, 1.0}, {0, 0, -2.0}, {0, 1, 1.0}}, h2);
    // Symmetric 7-point mixed stencil.
    dxy = detail::assembleGhostZero(g,
                                    {{0, 0, 1.0},
                                     {0, -1, -0.5},
                                     {0, 1, -0.5},
                                     {-1, -1, 0.5},
                                     {-1, 0, -0.5},
                                     {1, 1, 0.5},
                                     {1, 0, -0.5}},
                                    h2);
    lap_dirichlet = dxx + dyy;
    bilap_scalar = (lap_dirichlet * lap_dirichlet).pruned();

    {
      // (div p)^1 = (p11_ij - p11_{i-1,j} + p12_ij - p12_{i,j-1})/h,
      // (div p)^2 = (p12_ij - p12_{i-1,j} + p22_ij - p22_{i,j-1})/h.
      const int nm = g.size();
      std::vector<Triplet> trips;
      auto add = [&](int row, int comp, int i, int j, double w) {
        if (i < 0 || i >= g.n || j < 0 || j >= g.m) return;
        trips.emplace_back(row, comp * nm + g.idx(i, j), w / g.h);
      };
      for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.m; ++j) {
          const int r1 = g.idx(i, j), r2 = nm + g.idx(i, j);
          add(r1, 0, i, j, 1.0);
          add(r1, 0, i - 1, j, -1.0);
          add(r1, 1, i, j, 1.0);
          add(r1, 1, i, j - 1, -1.0);
          add(r2, 1, i, j, 1.0);
          add(r2, 1, i - 1, j, -1.0);
          add(r2, 2, i, j, 1.0);
          add(r2, 2, i, j - 1, -1.0);
        }
      divergence.resize(2 * nm, 3 * nm);
      divergence.setFromTriplets(trips.begin(), trips.end());
      gradient = SpMat(-divergence.transpose());
    }

    second_gradient = detail::vcat(detail::vcat(dxx, dxy), dyy);
    second_divergence =
        detail::hcat(detail::hcat(dxx, SpMat(2.0 * dxy)), dyy);
    grad2_div2 = (second_gradient * second_divergence).pruned();
    {
      // Substituting 2p12 eliminates the factor 2 and restores symmetry.
      SpMat g2t = SpMat(second_gradient.transpose());
      grad2_div2_scaled = (second_gradient * g2t).pruned();
    }
    {
      SpMat half = SpMat(0.5 * bilap_scalar);
      bilaplacian = detail::blockDiag({&bilap_scalar, &bilap_scalar, &bilap_scalar});
      bilaplacian_scaled = detail::blockDiag({&bilap_scalar, &half, &bilap_scalar});
    }

    dx_forward = detail::forwardDiffX(g);
    dy_forward = detail::forwardDiffY(g);
    grad_neumann = detail::vcat(dx_forward, dy_forward);
    neumann_laplacian =
        SpMat(-(SpMat(dx_forward.transpose()) * dx_forward +
                SpMat(dy_forward.transpose()) * dy_forward))
            .pruned();
    neumann_laplacian_w =
        detail::blockDiag({&neumann_laplacian, &neumann_laplacian});

    {
      const int nm = g.size();
      SpMat z(nm, nm);
      SpMat halfdx = SpMat(0.5 * dx_forward), halfdy = SpMat(0.5 * dy_forward);
      SpMat row11 = detail::hcat(dx_forward, z);
      SpMat row12 = detail::hcat(halfdy, halfdx);
      SpMat row22 = detail::hcat(z, dy_forward);
      sym_gradient = detail::vcat(detail::vcat(row11, row12), row22);
      // Adjoint w.r.t. the Frobenius pairing on V_h (weight 2 on the 12 slot).
      SpMat et = SpMat(sym_gradient.transpose());
      Vector w(3 * nm);
      w.segment(0, nm).setOnes();
      w.segment(nm, nm).setConstant(2.0);
      w.segment(2 * nm, nm).setOnes();
      sym_gradient_adjoint = (et * SpMat(w.asDiagonal())).pruned();
    }
  }
};

// Operators are static per grid; assemble once and share.
inline std::shared_ptr<const DiffOps> ops(const GridSpec& g) {
  static std::map<std::tuple<int, int, double>, std::shared_ptr<const DiffOps>> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  auto key = std::make_tuple(g.n, g.m, g.h);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, std::make_shared<const DiffOps>(g)).first;
  return it->second;
}

}  // namespace tgv

#endif
