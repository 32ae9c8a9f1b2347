#ifndef TGV_METRICS_HPP
#define TGV_METRICS_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgv/grid.hpp"

namespace tgv {

inline double psnr(const ScalarField& u, const ScalarField& u_true,
                   double peak = 1.0) {
  requireSameGrid(u.grid, u_true.grid, "psnr");
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be > 0");
  const double mse = (u.values - u_true.values).squaredNorm() / double(u.grid.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace detail {

// Symmetric (mirror) extension index: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
inline int mirrorIndex(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n;
  int r = i % period;
  if (r < 0) r += period;
  return r < n ? r : period - 1 - r;
}

inline std::vector<double> gaussianKernel(int size, double sigma) {
  std::vector<double> k(size);
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = double(i - half);
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable filtering with mirror boundary.
inline Vector gaussianFilter(const GridSpec& g, const Vector& v,
                             const std::vector<double>& kernel) {
  const int half = int(kernel.size()) / 2;
  Vector tmp(g.size()), out(g.size());
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.m; ++j) {
      double s = 0.0;
      for (int t = -half; t <= half; ++t)
        s += kernel[t + half] * v[g.idx(i, mirrorIndex(j + t, g.m))];
      tmp[g.idx(i, j)] = s;
    }
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.m; ++j) {
      double s = 0.0;
      for (int t = -half; t <= half; ++t)
        s += kernel[t + half] * tmp[g.idx(mirrorIndex(i + t, g.n), j)];
      out[g.idx(i, j)] = s;
    }
  return out;
}

}  // namespace detail

// Mean SSIM with the usual constants: 11x11 Gaussian window (sigma 1.5),
// stabilizers (0.01 L)^2 and (0.03 L)^2 with dynamic range L = 1.
inline double ssim(const ScalarField& u, const ScalarField& u_true) {
  requireSameGrid(u.grid, u_true.grid, "ssim");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto kernel = detail::gaussianKernel(11, 1.5);
  const GridSpec& g = u.grid;

  const Vector mu1 = detail::gaussianFilter(g, u.values, kernel);
  const Vector mu2 = detail::gaussianFilter(g, u_true.values, kernel);
  const Vector m11 = detail::gaussianFilter(g, u.values.cwiseProduct(u.values), kernel);
  const Vector m22 =
      detail::gaussianFilter(g, u_true.values.cwiseProduct(u_true.values), kernel);
  const Vector m12 =
      detail::gaussianFilter(g, u.values.cwiseProduct(u_true.values), kernel);

  double acc = 0.0;
  for (int k = 0; k < g.size(); ++k) {
    const double s1 = m11[k] - mu1[k] * mu1[k];
    const double s2 = m22[k] - mu2[k] * mu2[k];
    const double s12 = m12[k] - mu1[k] * mu2[k];
    const double num = (2.0 * mu1[k] * mu2[k] + c1) * (2.0 * s12 + c2);
    const double den = (mu1[k] * mu1[k] + mu2[k] * mu2[k] + c1) * (s1 + s2 + c2);
    acc += num / den;
  }
  return acc / double(g.size());
}

// Deterministic standard-normal stream: Box-Muller over mt19937_64 so the
// draws are bit-identical across platforms (std::normal_distribution is not).
class NormalSampler {
 public:
  explicit NormalSampler(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  double uniform01() {
    // in (0, 1]: never feeds log() a zero
    return (double(rng_() >> 11) + 1.0) * 0x1.0p-53;
  }
  std::mt19937_64 rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline ScalarField add_gaussian_noise(const ScalarField& u, double sigma2,
                                      std::uint64_t seed) {
  if (sigma2 < 0.0) throw std::invalid_argument("add_gaussian_noise: sigma2 < 0");
  ScalarField out = u;
  if (sigma2 == 0.0) return out;
  NormalSampler sampler(seed);
  const double sigma = std::sqrt(sigma2);
  for (int k = 0; k < u.grid.size(); ++k) out.values[k] += sigma * sampler.next();
  return out;
}

enum class PhantomKind { AffineRamp, PiecewiseConstant, PiecewiseAffine, Oscillatory };

inline PhantomKind phantom_kind_from_string(const std::string& s) {
  if (s == "affine-ramp") return PhantomKind::AffineRamp;
  if (s == "piecewise-constant") return PhantomKind::PiecewiseConstant;
  if (s == "piecewise-affine") return PhantomKind::PiecewiseAffine;
  if (s == "oscillatory") return PhantomKind::Oscillatory;
  throw std::invalid_argument("unknown phantom kind: " + s);
}

inline ScalarField make_phantom(PhantomKind kind, const GridSpec& g) {
  ScalarField u(g);
  const double ni = double(g.n - 1), mj = double(g.m - 1);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.m; ++j) {
      const double x = double(i) / ni, y = double(j) / mj;
      double v = 0.0;
      switch (kind) {
        case PhantomKind::AffineRamp:
          v = 0.15 + 0.45 * x + 0.35 * y;
          break;
        case PhantomKind::PiecewiseConstant: {
          v = 0.2;
          if (x > 0.2 && x < 0.8 && y > 0.2 && y < 0.8) v = 0.7;
          const double dx = x - 0.5, dy = y - 0.5;
          if (dx * dx + dy * dy < 0.03) v = 0.45;
          break;
        }
        case PhantomKind::PiecewiseAffine:
          v = 0.1 + 0.3 * x + 0.2 * y;
          if (x + y > 1.0) v += 0.35;
          break;
        case PhantomKind::Oscillatory:
          v = 0.35 + 0.25 * x + 0.15 * y +
              0.2 * std::sin(8.0 * std::numbers::pi * x) * std::sin(6.0 * std::numbers::pi * y);
          break;
      }
      u(i, j) = v;
    }
  return u;
}

}  // namespace tgv

#endif
