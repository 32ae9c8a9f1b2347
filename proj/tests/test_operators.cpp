#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "support/oracles.hpp"
#include "tgv/grid.hpp"
#include "tgv/operators.hpp"

using namespace tgv;
using oracle::randomVector;

namespace {

double symmetryDefect(const SpMat& m) {
  return (Eigen::MatrixXd(m) - Eigen::MatrixXd(m).transpose()).cwiseAbs().maxCoeff();
}

// Reference application via an explicitly padded array: out-of-range reads
// are zero (Dirichlet ghost) or replicate the nearest value (Neumann).
template <class Fn>
Vector paddedApply(const GridSpec& g, const Vector& u, bool replicate, Fn&& stencil) {
  auto at = [&](int i, int j) -> double {
    if (replicate) {
      i = std::clamp(i, 0, g.n - 1);
      j = std::clamp(j, 0, g.m - 1);
    } else if (i < 0 || i >= g.n || j < 0 || j >= g.m) {
      return 0.0;
    }
    return u[g.idx(i, j)];
  };
  Vector out(g.size());
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.m; ++j) out[g.idx(i, j)] = stencil(at, i, j);
  return out;
}

}  // namespace

TEST_CASE("declared-symmetric operators are exactly symmetric") {
  const GridSpec g(7, 6, 0.5);
  const auto op = ops(g);
  CHECK(symmetryDefect(op->dxx) == 0.0);
  CHECK(symmetryDefect(op->dyy) == 0.0);
  CHECK(symmetryDefect(op->dxy) == 0.0);
  CHECK(symmetryDefect(op->bilap_scalar) == 0.0);
  CHECK(symmetryDefect(op->neumann_laplacian) == 0.0);
  CHECK(symmetryDefect(op->grad2_div2_scaled) == 0.0);
  CHECK(symmetryDefect(op->bilaplacian_scaled) == 0.0);
}

TEST_CASE("gradient is exactly minus divergence transpose") {
  const GridSpec g(8, 8, GridMode::Dual);
  const auto op = ops(g);
  const SpMat diff = SpMat(op->gradient + SpMat(op->divergence.transpose()));
  CHECK(Eigen::MatrixXd(diff).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("first-order adjointness on random pairs") {
  const GridSpec g(8, 8, 0.25);
  const auto op = ops(g);
  for (int t = 0; t < 20; ++t) {
    const Vector w = randomVector(2 * g.size(), 10 + t);
    const Vector p = randomVector(3 * g.size(), 50 + t);
    const double lhs = (op->gradient * w).dot(p);
    const double rhs = w.dot(op->divergence * p);
    CHECK(std::abs(lhs + rhs) <= 1e-12);
  }
}

TEST_CASE("second-order adjointness with the factor-2 pairing") {
  const GridSpec g(8, 8, 0.25);
  const auto op = ops(g);
  const int nm = g.size();
  Vector fw(3 * nm);
  fw.segment(0, nm).setOnes();
  fw.segment(nm, nm).setConstant(2.0);
  fw.segment(2 * nm, nm).setOnes();
  for (int t = 0; t < 20; ++t) {
    const Vector u = randomVector(nm, 70 + t);
    const Vector p = randomVector(3 * nm, 170 + t);
    const double lhs = (op->second_gradient * u).dot(fw.cwiseProduct(p));
    const double rhs = u.dot(op->second_divergence * p);
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("symmetrized gradient adjointness") {
  const GridSpec g(8, 8, 1.0);
  const auto op = ops(g);
  const int nm = g.size();
  Vector fw(3 * nm);
  fw.segment(0, nm).setOnes();
  fw.segment(nm, nm).setConstant(2.0);
  fw.segment(2 * nm, nm).setOnes();
  for (int t = 0; t < 20; ++t) {
    const Vector w = randomVector(2 * nm, 310 + t);
    const Vector p = randomVector(3 * nm, 410 + t);
    const double lhs = (op->sym_gradient * w).dot(fw.cwiseProduct(p));
    const double rhs = w.dot(op->sym_gradient_adjoint * p);
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("divergence stencil examples") {
  const GridSpec g(6, 6, 1.0);
  const auto op = ops(g);
  const int nm = g.size();
  SECTION("constant tensor vanishes at interior points") {
    const Vector dv = op->divergence * Vector::Constant(3 * nm, 1.0);
    for (int i = 1; i < g.n; ++i)
      for (int j = 1; j < g.m; ++j) {
        CHECK(dv[g.idx(i, j)] == 0.0);
        CHECK(dv[nm + g.idx(i, j)] == 0.0);
      }
  }
  SECTION("delta in p11 produces the hand stencil") {
    Vector p = Vector::Zero(3 * nm);
    p[g.idx(2, 3)] = 1.0;  // p11 delta
    const Vector dv = op->divergence * p;
    CHECK(dv[g.idx(2, 3)] == 1.0);
    CHECK(dv[g.idx(3, 3)] == -1.0);
    CHECK(dv.segment(0, nm).cwiseAbs().sum() == 2.0);
    CHECK(dv.segment(nm, nm).cwiseAbs().sum() == 0.0);
  }
}

TEST_CASE("second difference stencils on polynomials") {
  const GridSpec g(8, 8, 1.0);
  const auto op = ops(g);
  Vector usq(g.size()), uij(g.size());
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.m; ++j) {
      usq[g.idx(i, j)] = double(i) * double(i);
      uij[g.idx(i, j)] = double(i) * double(j);
    }
  const Vector dxx = op->dxx * usq;
  const Vector dxy = op->dxy * uij;
  for (int i = 1; i + 1 < g.n; ++i)
    for (int j = 1; j + 1 < g.m; ++j) {
      CHECK(dxx[g.idx(i, j)] == Catch::Approx(2.0).epsilon(1e-14));
      CHECK(dxy[g.idx(i, j)] == Catch::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("bilaplacian stencil fidelity") {
  const GridSpec g(9, 9, 1.0);
  const auto op = ops(g);
  SECTION("center coefficient 20 per h^4") {
    Vector delta = Vector::Zero(g.size());
    delta[g.idx(4, 4)] = 1.0;
    const Vector r = op->bilap_scalar * delta;
    CHECK(r[g.idx(4, 4)] == Catch::Approx(20.0).epsilon(1e-14));
    CHECK(r[g.idx(4, 5)] == Catch::Approx(-8.0).epsilon(1e-14));
    CHECK(r[g.idx(5, 5)] == Catch::Approx(2.0).epsilon(1e-14));
    CHECK(r[g.idx(4, 6)] == Catch::Approx(1.0).epsilon(1e-14));
  }
  SECTION("constants map to zero away from the boundary") {
    const Vector r = op->bilap_scalar * Vector::Constant(g.size(), 1.0);
    for (int i = 2; i + 2 < g.n; ++i)
      for (int j = 2; j + 2 < g.m; ++j) CHECK(r[g.idx(i, j)] == 0.0);
  }
  SECTION("equals Dxxxx + Dyyyy + 2 Dyy Dxx") {
    const SpMat composed = SpMat(SpMat(op->dxx * op->dxx) + SpMat(op->dyy * op->dyy) +
                                 SpMat(2.0 * SpMat(op->dyy * op->dxx)));
    const Vector v = randomVector(g.size(), 77);
    const Vector a = op->bilap_scalar * v;
    const Vector b = composed * v;
    CHECK((a - b).norm() <= 1e-12 * a.norm());
  }
}

TEST_CASE("grad2_div2 composition and zero field") {
  const GridSpec g(7, 7, GridMode::Dual);
  const auto op = ops(g);
  const Vector p = randomVector(3 * g.size(), 31);
  const Vector a = op->grad2_div2 * p;
  const Vector b = op->second_gradient * Vector(op->second_divergence * p);
  CHECK((a - b).norm() <= 1e-12 * b.norm());
  CHECK((op->grad2_div2 * Vector::Zero(3 * g.size())).norm() == 0.0);
}

TEST_CASE("neumann laplacian examples") {
  const GridSpec g(7, 7, 1.0);
  const auto op = ops(g);
  SECTION("annihilates constants and has zero row sums") {
    CHECK((op->neumann_laplacian * Vector::Constant(g.size(), 3.0)).norm() == 0.0);
    const Vector rows = op->neumann_laplacian * Vector::Ones(g.size());
    CHECK(rows.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("linear ramp: zero interior, +-1/h^2 on extremal rows") {
    Vector u(g.size());
    for (int i = 0; i < g.n; ++i)
      for (int j = 0; j < g.m; ++j) u[g.idx(i, j)] = double(i);
    const Vector r = op->neumann_laplacian * u;
    for (int i = 1; i + 1 < g.n; ++i)
      for (int j = 0; j < g.m; ++j) CHECK(r[g.idx(i, j)] == 0.0);
    for (int j = 0; j < g.m; ++j) {
      CHECK(r[g.idx(0, j)] == Catch::Approx(1.0));
      CHECK(r[g.idx(g.n - 1, j)] == Catch::Approx(-1.0));
    }
  }
}

TEST_CASE("symmetrized gradient examples") {
  const GridSpec g(7, 7, 1.0);
  const auto op = ops(g);
  const int nm = g.size();
  CHECK((op->sym_gradient * Vector::Constant(2 * nm, 2.0))
            .cwiseAbs()
            .segment(0, nm)
            .maxCoeff() == 0.0);
  Vector w(2 * nm);
  for (int i = 0; i < g.n; ++i)
    for (int j = 0; j < g.m; ++j) {
      w[g.idx(i, j)] = double(i);
      w[nm + g.idx(i, j)] = -double(j);
    }
  const Vector e = op->sym_gradient * w;
  for (int i = 0; i + 1 < g.n; ++i)
    for (int j = 0; j + 1 < g.m; ++j) {
      CHECK(e[g.idx(i, j)] == 1.0);
      CHECK(e[nm + g.idx(i, j)] == 0.0);
      CHECK(e[2 * nm + g.idx(i, j)] == -1.0);
    }
}

TEST_CASE("interior rows of zero-sum stencils") {
  const GridSpec g(8, 8, 1.0);
  const auto op = ops(g);
  const Vector ones = Vector::Ones(g.size());
  const Vector rdxy = op->dxy * ones;
  const Vector rbil = op->bilap_scalar * ones;
  for (int i = 2; i + 2 < g.n; ++i)
    for (int j = 2; j + 2 < g.m; ++j) {
      CHECK(rdxy[g.idx(i, j)] == 0.0);
      CHECK(rbil[g.idx(i, j)] == 0.0);
    }
}

TEST_CASE("boundary rows match padded reference application") {
  const GridSpec g(5, 6, 0.5);
  const auto op = ops(g);
  const Vector u = randomVector(g.size(), 99);
  const double ih2 = 1.0 / (g.h * g.h);
  SECTION("ghost-zero second differences") {
    const Vector ref = paddedApply(g, u, false, [&](auto at, int i, int j) {
      return ih2 * (at(i - 1, j) - 2.0 * at(i, j) + at(i + 1, j));
    });
    CHECK((op->dxx * u - ref).cwiseAbs().maxCoeff() <= 1e-14);
    const Vector refxy = paddedApply(g, u, false, [&](auto at, int i, int j) {
      return ih2 * (at(i, j) - 0.5 * at(i, j - 1) - 0.5 * at(i, j + 1) +
                    0.5 * at(i - 1, j - 1) - 0.5 * at(i - 1, j) +
                    0.5 * at(i + 1, j + 1) - 0.5 * at(i + 1, j));
    });
    CHECK((op->dxy * u - refxy).cwiseAbs().maxCoeff() <= 1e-14);
  }
  SECTION("replicate-ghost laplacian") {
    const Vector ref = paddedApply(g, u, true, [&](auto at, int i, int j) {
      return ih2 * (at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1) -
                    4.0 * at(i, j));
    });
    CHECK((op->neumann_laplacian * u - ref).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SECTION("replicate-ghost forward differences") {
    const Vector ref = paddedApply(g, u, true, [&](auto at, int i, int j) {
      return (at(i + 1, j) - at(i, j)) / g.h;
    });
    CHECK((op->dx_forward * u - ref).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("operator cache returns one instance per grid") {
  const GridSpec g(6, 6, 0.125);
  CHECK(ops(g).get() == ops(g).get());
  CHECK(ops(g).get() != ops(GridSpec(6, 6, 0.25)).get());
}

TEST_CASE("operator dump emits triples") {
  const GridSpec g(2, 2, 1.0);
  SparseOperator sop;
  sop.mat = ops(g)->dxx;
  std::ostringstream os;
  sop.dump(os);
  CHECK(os.str().find(' ') != std::string::npos);
  CHECK(sop.rows() == g.size());
}
