#ifndef TGV_GRID_HPP
#define TGV_GRID_HPP

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace tgv {

using Vector = Eigen::VectorXd;

// Discretization mode: the dual pipeline works on a unit-area grid
// (h = 1/sqrt(n*m)), the primal-dual pipeline on a pixel grid (h = 1).
enum class GridMode { Dual, PrimalDual };

struct GridSpec {
  int n = 0;  // rows
  int m = 0;  // columns
  double h = 1.0;

  GridSpec() = default;
  GridSpec(int n_, int m_, double h_) : n(n_), m(m_), h(h_) {
    if (n < 2 || m < 2) throw std::invalid_argument("GridSpec: need n,m >= 2");
    if (!(h > 0.0)) throw std::invalid_argument("GridSpec: need h > 0");
  }
  GridSpec(int n_, int m_, GridMode mode)
      : GridSpec(n_, m_,
                 mode == GridMode::Dual ? 1.0 / std::sqrt(double(n_) * double(m_))
                                        : 1.0) {}

  int size() const { return n * m; }
  // Row-major flattening of the pixel grid, zero-based indices.
  int idx(int i, int j) const { return i * m + j; }
  bool operator==(const GridSpec& o) const {
    return n == o.n && m == o.m && h == o.h;
  }
};

struct ScalarField {
  GridSpec grid;
  Vector values;

  ScalarField() = default;
  explicit ScalarField(const GridSpec& g) : grid(g), values(Vector::Zero(g.size())) {}
  ScalarField(const GridSpec& g, Vector v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size())
      throw std::invalid_argument("ScalarField: size mismatch");
  }
  ScalarField(const GridSpec& g, double c)
      : grid(g), values(Vector::Constant(g.size(), c)) {}

  double& operator()(int i, int j) { return values[grid.idx(i, j)]; }
  double operator()(int i, int j) const { return values[grid.idx(i, j)]; }
  bool allFinite() const { return values.allFinite(); }
};

// W_h = U_h x U_h, stored stacked: (component 1, component 2).
struct VectorField {
  GridSpec grid;
  Vector values;  // size 2*n*m

  VectorField() = default;
  explicit VectorField(const GridSpec& g)
      : grid(g), values(Vector::Zero(2 * g.size())) {}
  VectorField(const GridSpec& g, Vector v) : grid(g), values(std::move(v)) {
    if (values.size() != 2 * grid.size())
      throw std::invalid_argument("VectorField: size mismatch");
  }

  auto comp(int c) { return values.segment(c * grid.size(), grid.size()); }
  auto comp(int c) const { return values.segment(c * grid.size(), grid.size()); }
};

// Symmetric 2x2 tensor field, stored stacked as (p11, p12, p22); when
// `scaled` is set the middle block holds 2*p12.
struct SymTensorField {
  GridSpec grid;
  Vector values;  // size 3*n*m
  bool scaled = false;

  SymTensorField() = default;
  explicit SymTensorField(const GridSpec& g)
      : grid(g), values(Vector::Zero(3 * g.size())) {}
  SymTensorField(const GridSpec& g, Vector v, bool scaled_ = false)
      : grid(g), values(std::move(v)), scaled(scaled_) {
    if (values.size() != 3 * grid.size())
      throw std::invalid_argument("SymTensorField: size mismatch");
  }

  auto comp(int c) { return values.segment(c * grid.size(), grid.size()); }
  auto comp(int c) const { return values.segment(c * grid.size(), grid.size()); }

  SymTensorField toScaled() const {
    SymTensorField out = *this;
    if (!scaled) {
      out.comp(1) *= 2.0;
      out.scaled = true;
    }
    return out;
  }
  SymTensorField toUnscaled() const {
    SymTensorField out = *this;
    if (scaled) {
      out.comp(1) *= 0.5;
      out.scaled = false;
    }
    return out;
  }
};

inline void requireSameGrid(const GridSpec& a, const GridSpec& b,
                            const std::string& what) {
  if (!(a == b)) throw std::invalid_argument(what + ": grid mismatch");
}

}  // namespace tgv

#endif
