#ifndef TGV_UPPER_OBJECTIVE_HPP
#define TGV_UPPER_OBJECTIVE_HPP

#include <cmath>
#include <stdexcept>
#include <utility>

#include "tgv/grid.hpp"
#include "tgv/lower_dual.hpp"
#include "tgv/norms.hpp"
#include "tgv/operators.hpp"

namespace tgv {

// Corridor around the noise variance, sized by the statistics of window
// extremes: sigma2 * (1 -+ sqrt(2)/n_w).
inline std::pair<double, double> sigma_corridor(double sigma2, int n_w) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma_corridor: sigma2 must be > 0");
  if (n_w < 1 || n_w % 2 == 0)
    throw std::invalid_argument("sigma_corridor: n_w must be odd and >= 1");
  const double r = std::sqrt(2.0) / double(n_w);
  if (r >= 1.0)
    throw std::invalid_argument("sigma_corridor: n_w too small, lower bound would be <= 0");
  return {sigma2 * (1.0 - r), sigma2 * (1.0 + r)};
}

struct CorridorSpec {
  double sigma2 = 0.0;
  int n_w = 7;
  double sigma2_lo = 0.0;
  double sigma2_hi = 0.0;
  bool zero_pad = false;  // partial windows renormalize by default

  CorridorSpec() = default;
  CorridorSpec(double s2, int nw, bool zp = false)
      : sigma2(s2), n_w(nw), zero_pad(zp) {
    std::tie(sigma2_lo, sigma2_hi) = sigma_corridor(s2, nw);
  }
};

// Normalized n_w x n_w mean filter. Near the boundary either the window is
// renormalized over in-domain pixels or missing pixels count as zeros. The
// renormalized filter is not symmetric as an operator, so the adjoint is
// spelled out.
class BoxFilter {
 public:
  BoxFilter(const GridSpec& g, int n_w, bool zero_pad = false)
      : grid_(g), half_(n_w / 2), zero_pad_(zero_pad),
        inv_norm_(Vector::Zero(g.size())) {
    if (n_w < 1 || n_w % 2 == 0)
      throw std::invalid_argument("BoxFilter: n_w must be odd and >= 1");
    const double full = double(n_w) * double(n_w);
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.m; ++j) {
        double cnt = full;
        if (!zero_pad_) {
          const int ni = std::min(i + half_, g.n - 1) - std::max(i - half_, 0) + 1;
          const int nj = std::min(j + half_, g.m - 1) - std::max(j - half_, 0) + 1;
          cnt = double(ni) * double(nj);
        }
        inv_norm_[g.idx(i, j)] = 1.0 / cnt;
      }
  }

  Vector apply(const Vector& v) const {
    Vector out = Vector::Zero(grid_.size());
    forEachWindow([&](int x, int y) { out[x] += v[y]; });
    return out.cwiseProduct(inv_norm_);
  }

  Vector applyAdjoint(const Vector& r) const {
    const Vector rs = r.cwiseProduct(inv_norm_);
    Vector out = Vector::Zero(grid_.size());
    forEachWindow([&](int x, int y) { out[y] += rs[x]; });
    return out;
  }

  const GridSpec& grid() const { return grid_; }

 private:
  template <class Fn>
  void forEachWindow(Fn&& fn) const {
    for (int i = 0; i < grid_.n; ++i)
      for (int j = 0; j < grid_.m; ++j) {
        const int x = grid_.idx(i, j);
        const int i0 = std::max(i - half_, 0), i1 = std::min(i + half_, grid_.n - 1);
        const int j0 = std::max(j - half_, 0), j1 = std::min(j + half_, grid_.m - 1);
        for (int a = i0; a <= i1; ++a)
          for (int b = j0; b <= j1; ++b) fn(x, grid_.idx(a, b));
      }
  }

  GridSpec grid_;
  int half_;
  bool zero_pad_;
  Vector inv_norm_;
};

// R(u) = mean filter applied to (u - f)^2, a local variance estimate.
inline ScalarField localized_residual(const ScalarField& u, const ScalarField& f,
                                      const CorridorSpec& spec) {
  requireSameGrid(u.grid, f.grid, "localized_residual");
  BoxFilter filt(u.grid, spec.n_w, spec.zero_pad);
  const Vector sq = (u.values - f.values).array().square();
  return ScalarField(u.grid, filt.apply(sq));
}

// F(v) = 1/2 ||(v - hi)^+||^2 + 1/2 ||(lo - v)^+||^2 in the discrete L^2
// norm (h^2-weighted sums).
inline double objective_F(const ScalarField& v, const CorridorSpec& spec) {
  const Vector over = (v.values.array() - spec.sigma2_hi).max(0.0);
  const Vector under = (spec.sigma2_lo - v.values.array()).max(0.0);
  return 0.5 * v.grid.h * v.grid.h * (over.squaredNorm() + under.squaredNorm());
}

// Gradient of objective_F with respect to v, including the h^2 quadrature
// weight.
inline ScalarField objective_F_prime(const ScalarField& v, const CorridorSpec& spec) {
  const Vector over = (v.values.array() - spec.sigma2_hi).max(0.0);
  const Vector under = (spec.sigma2_lo - v.values.array()).max(0.0);
  return ScalarField(v.grid, Vector(v.grid.h * v.grid.h * (over - under)));
}

inline double upper_value_dual(const SymTensorField& p, const ScalarField& f,
                               const ScalarField& alpha1, double lambda,
                               const CorridorSpec& spec, const RieszMap& riesz) {
  const ScalarField u = recover_image(p, f);
  const ScalarField r = localized_residual(u, f, spec);
  const double h1 = riesz.h1Norm(alpha1.values);
  return objective_F(r, spec) + 0.5 * lambda * h1 * h1;
}

// alpha0 enters with its own weight; pass lambda0 = 0 for a scalar weight.
inline double upper_value_pd(const ScalarField& u, const ScalarField& f,
                             const Vector& alpha0, const ScalarField& alpha1,
                             double lambda0, double lambda1,
                             const CorridorSpec& spec, const RieszMap& riesz) {
  const ScalarField r = localized_residual(u, f, spec);
  double val = objective_F(r, spec);
  if (lambda1 != 0.0) {
    const double h1 = riesz.h1Norm(alpha1.values);
    val += 0.5 * lambda1 * h1 * h1;
  }
  if (lambda0 != 0.0) {
    const double h0 = riesz.h1Norm(alpha0);
    val += 0.5 * lambda0 * h0 * h0;
  }
  return val;
}

}  // namespace tgv

#endif
