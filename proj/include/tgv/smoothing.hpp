#ifndef TGV_SMOOTHING_HPP
#define TGV_SMOOTHING_HPP

#include <cmath>
#include <stdexcept>

#include "tgv/grid.hpp"

namespace tgv {

struct HuberParam {
  double gamma;
  explicit HuberParam(double g) : gamma(g) {
    if (!(gamma > 0.0)) throw std::invalid_argument("HuberParam: gamma must be > 0");
  }
};

struct PenaltyParam {
  double delta;
  double eps0;
  double eps1;
  PenaltyParam(double d, double e0, double e1) : delta(d), eps0(e0), eps1(e1) {
    if (!(delta > 0.0 && eps0 > 0.0 && eps1 > 0.0))
      throw std::invalid_argument("PenaltyParam: delta, eps0, eps1 must be > 0");
  }
};

// Huber smoothing of |.|: quadratic below gamma, linear above.
inline double huber(double magnitude, double gamma) {
  const double a = std::abs(magnitude);
  return a >= gamma ? a - 0.5 * gamma : a * a / (2.0 * gamma);
}

inline ScalarField huber_field(const ScalarField& magnitudes, double gamma) {
  ScalarField out(magnitudes.grid);
  out.values = magnitudes.values.unaryExpr(
      [gamma](double t) { return huber(t, gamma); });
  return out;
}

// One-sided C^2 box penalty: zero for t <= 0, cubic on (0, delta),
// quadratic tail beyond.
inline double g_delta(double t, double delta) {
  if (t <= 0.0) return 0.0;
  if (t < delta) return t * t * t / (6.0 * delta);
  return 0.5 * t * t - 0.5 * delta * t + delta * delta / 6.0;
}

inline double g_delta_prime(double t, double delta) {
  if (t <= 0.0) return 0.0;
  if (t < delta) return t * t / (2.0 * delta);
  return t - 0.5 * delta;
}

inline double g_delta_second(double t, double delta) {
  if (t <= 0.0) return 0.0;
  if (t < delta) return t / delta;
  return 1.0;
}

// Two-sided box penalty value for one component: G(-(v+a)) + G(v-a).
inline double box_penalty(double v, double a, double delta) {
  return g_delta(-(v + a), delta) + g_delta(v - a, delta);
}
// d/dv of box_penalty.
inline double box_penalty_dv(double v, double a, double delta) {
  return g_delta_prime(v - a, delta) - g_delta_prime(-(v + a), delta);
}
// d^2/dv^2 of box_penalty.
inline double box_penalty_dvv(double v, double a, double delta) {
  return g_delta_second(v - a, delta) + g_delta_second(-(v + a), delta);
}
// d/da of box_penalty.
inline double box_penalty_da(double v, double a, double delta) {
  return -g_delta_prime(v - a, delta) - g_delta_prime(-(v + a), delta);
}
// d^2/(dv da) of box_penalty.
inline double box_penalty_dva(double v, double a, double delta) {
  return -g_delta_second(v - a, delta) + g_delta_second(-(v + a), delta);
}

// Integrated penalty on the dual vector variable q (2 components / pixel),
// alpha1 spatially varying: h^2 * sum over components and pixels.
inline double penalty_P(const VectorField& q, const ScalarField& alpha1,
                        double delta) {
  requireSameGrid(q.grid, alpha1.grid, "penalty_P");
  const int nm = q.grid.size();
  double sum = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < nm; ++k)
      sum += box_penalty(q.values[c * nm + k], alpha1.values[k], delta);
  return q.grid.h * q.grid.h * sum;
}

// Same for the tensor variable p (3 stored components / pixel, i <= j),
// alpha0 a scalar broadcast or a field.
inline double penalty_Q(const SymTensorField& p, const Vector& alpha0,
                        double delta) {
  const int nm = p.grid.size();
  if (alpha0.size() != nm)
    throw std::invalid_argument("penalty_Q: alpha0 size mismatch");
  double sum = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < nm; ++k)
      sum += box_penalty(p.values[c * nm + k], alpha0[k], delta);
  return p.grid.h * p.grid.h * sum;
}

inline double penalty_Q(const SymTensorField& p, double alpha0, double delta) {
  return penalty_Q(p, Vector::Constant(p.grid.size(), alpha0), delta);
}

// Componentwise derivative fields P_delta(q, a) = G'(q-a) - G'(-q-a),
// broadcast of a per pixel over the stacked components.
inline Vector penalty_deriv(const Vector& v, const Vector& a_per_pixel,
                            double delta) {
  const auto nm = a_per_pixel.size();
  Vector out(v.size());
  for (Eigen::Index c = 0; c < v.size() / nm; ++c)
    for (Eigen::Index k = 0; k < nm; ++k)
      out[c * nm + k] = box_penalty_dv(v[c * nm + k], a_per_pixel[k], delta);
  return out;
}

inline Vector penalty_second(const Vector& v, const Vector& a_per_pixel,
                             double delta) {
  const auto nm = a_per_pixel.size();
  Vector out(v.size());
  for (Eigen::Index c = 0; c < v.size() / nm; ++c)
    for (Eigen::Index k = 0; k < nm; ++k)
      out[c * nm + k] = box_penalty_dvv(v[c * nm + k], a_per_pixel[k], delta);
  return out;
}

// Smoothed max_delta(r, gamma) and its derivative X_delta; requires
// delta/2 < gamma.
inline double smooth_max(double r, double gamma, double delta) {
  if (!(0.5 * delta < gamma))
    throw std::invalid_argument("smooth_max: requires delta/2 < gamma");
  if (r <= gamma - 0.5 * delta) return gamma;
  if (r >= gamma + 0.5 * delta) return r;
  const double t = r + 0.5 * delta - gamma;
  return t * t / (2.0 * delta) + gamma;
}

inline double smooth_max_deriv(double r, double gamma, double delta) {
  if (!(0.5 * delta < gamma))
    throw std::invalid_argument("smooth_max_deriv: requires delta/2 < gamma");
  if (r <= gamma - 0.5 * delta) return 0.0;
  if (r >= gamma + 0.5 * delta) return 1.0;
  return (r + 0.5 * delta - gamma) / delta;
}

// Per-pixel Euclidean magnitude of a vector field.
inline Vector pixel_magnitude(const VectorField& q) {
  const int nm = q.grid.size();
  return (q.comp(0).array().square() + q.comp(1).array().square()).sqrt();
}

// Per-pixel Frobenius magnitude sqrt(p11^2 + 2 p12^2 + p22^2); expects
// unscaled storage.
inline Vector pixel_magnitude(const SymTensorField& p) {
  if (p.scaled)
    throw std::invalid_argument("pixel_magnitude: unscaled tensor expected");
  return (p.comp(0).array().square() + 2.0 * p.comp(1).array().square() +
          p.comp(2).array().square())
      .sqrt();
}

namespace detail {
inline void radialScale(Vector& values, Eigen::Index ncomp, const Vector& mag,
                        const Vector& bound) {
  const auto nm = mag.size();
  for (Eigen::Index k = 0; k < nm; ++k) {
    const double denom = std::max(1.0, mag[k] / bound[k]);
    if (denom > 1.0)
      for (Eigen::Index c = 0; c < ncomp; ++c) values[c * nm + k] /= denom;
  }
}
}  // namespace detail

// Pixel-radial projection onto {|q| <= alpha1} x {|p| <= alpha0}. The
// componentwise alternative clamps each stored component separately.
inline std::pair<VectorField, SymTensorField> project_feasible(
    const VectorField& qt, const SymTensorField& pt, const Vector& alpha0,
    const Vector& alpha1, bool componentwise = false) {
  VectorField q = qt;
  SymTensorField p = pt.scaled ? pt.toUnscaled() : pt;
  const auto nm = alpha1.size();
  if (componentwise) {
    for (Eigen::Index c = 0; c < 2; ++c)
      for (Eigen::Index k = 0; k < nm; ++k) {
        double& v = q.values[c * nm + k];
        v = std::clamp(v, -alpha1[k], alpha1[k]);
      }
    for (Eigen::Index c = 0; c < 3; ++c)
      for (Eigen::Index k = 0; k < nm; ++k) {
        double& v = p.values[c * nm + k];
        v = std::clamp(v, -alpha0[k], alpha0[k]);
      }
  } else {
    detail::radialScale(q.values, 2, pixel_magnitude(q), alpha1);
    detail::radialScale(p.values, 3, pixel_magnitude(p), alpha0);
  }
  if (pt.scaled) p = p.toScaled();
  return {std::move(q), std::move(p)};
}

}  // namespace tgv

#endif
