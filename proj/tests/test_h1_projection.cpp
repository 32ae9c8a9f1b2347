#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "support/oracles.hpp"
#include "tgv/grid.hpp"
#include "tgv/h1_projection.hpp"
#include "tgv/norms.hpp"

using namespace tgv;
using oracle::randomVector;

TEST_CASE("clamp scalar") {
  CHECK(clamp_scalar(0.5, 0.0, 1.0) == 0.5);
  CHECK(clamp_scalar(2.0, 0.0, 1.0) == 1.0);
  CHECK(clamp_scalar(-2.0, 0.0, 1.0) == 0.0);
  CHECK_THROWS_AS(clamp_scalar(0.5, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("projection spec validation") {
  CHECK_THROWS_AS(ProjectionSpec(1.0, 0.5, 4, 1e-10), std::invalid_argument);
  CHECK_THROWS_AS(ProjectionSpec(0.0, 1.0, 4, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ProjectionSpec(Vector::Zero(3), Vector::Ones(4), 1e-10),
                  std::invalid_argument);
}

TEST_CASE("interior points project to themselves") {
  const GridSpec g(6, 6, 1.0);
  const RieszMap riesz(g, 1.0);
  const ProjectionSpec spec(0.0, 1.0, g.size(), 1e-10, 1.0);
  const ScalarField a(g, Vector(0.5 + 0.2 * randomVector(g.size(), 1).array().sin()));
  const ScalarField out = project_h1(a, spec, riesz);
  CHECK((out.values - a.values).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("constant field above the box lands just beyond the bound") {
  const GridSpec g(6, 6, 1.0);
  const RieszMap riesz(g, 1.0);
  const double eps = 1e-8;
  const ProjectionSpec spec(0.0, 1.0, g.size(), eps, 1.0);
  const ScalarField a(g, 1.5);
  const ScalarField out = project_h1(a, spec, riesz);
  // constants are in the Laplacian kernel: scalar closed form
  // (x - 1.5) + (x - 1)/eps = 0  =>  x = 1 + eps*0.5/(1+eps)
  const double expect = (1.5 * eps + 1.0) / (1.0 + eps);
  CHECK((out.values.array() - expect).abs().maxCoeff() <= 1e-12);
  CHECK(out.values.maxCoeff() - 1.0 <= eps * 0.5 + 1e-12);
}

TEST_CASE("matches the dense active-set QP oracle on random instances") {
  const GridSpec g(8, 8, 1.0);
  for (double w : {1.0, 6e4}) {
    const RieszMap riesz(g, w);
    const double eps = 1e-10;
    const ProjectionSpec spec(0.1, 0.6, g.size(), eps, w);
    const Eigen::MatrixXd M = Eigen::MatrixXd(riesz.matrix());
    // the penalized projection overshoots each active bound by O(eps * |grad|),
    // and the gradient scales with the Laplacian weight
    const double slack = 10.0 * eps * (1.0 + 8.0 * w) * std::sqrt(double(g.size()));
    for (int t = 0; t < 5; ++t) {
      const Vector target = Vector(0.35 + 0.5 * randomVector(g.size(), 60 + t).array());
      const ScalarField out = project_h1(ScalarField(g, target), spec, riesz);
      const Vector ref =
          oracle::activeSetBoxQP(M, target, spec.lower, spec.upper);
      CHECK((out.values - ref).norm() <= 1e-6 * std::max(1.0, ref.norm()) + slack);
    }
  }
}

TEST_CASE("bound violation is at most of the penalty order") {
  const GridSpec g(8, 8, 1.0);
  const RieszMap riesz(g, 1.0);
  const double eps = 1e-10;
  const ProjectionSpec spec(0.0, 1.0, g.size(), eps, 1.0);
  const ScalarField a(g, Vector(2.0 * randomVector(g.size(), 70)));
  const ScalarField out = project_h1(a, spec, riesz);
  const double viol = std::max(
      (out.values.array() - 1.0).max(0.0).maxCoeff(),
      (-out.values.array()).max(0.0).maxCoeff());
  CHECK(viol <= 10.0 * eps * a.values.cwiseAbs().maxCoeff());
}

TEST_CASE("projection is idempotent up to tolerance") {
  const GridSpec g(8, 8, 1.0);
  const RieszMap riesz(g, 1.0);
  const ProjectionSpec spec(0.0, 1.0, g.size(), 1e-10, 1.0);
  const ScalarField a(g, Vector(1.5 * randomVector(g.size(), 71)));
  const ScalarField once = project_h1(a, spec, riesz);
  const ScalarField twice = project_h1(once, spec, riesz);
  // re-projection can move by the O(eps * |M grad|) penalty overshoot
  CHECK((twice.values - once.values).norm() <= 1e-7);
}

TEST_CASE("riesz weight mismatch is rejected") {
  const GridSpec g(4, 4, 1.0);
  const RieszMap riesz(g, 1.0);
  const ProjectionSpec spec(0.0, 1.0, g.size(), 1e-10, 6e4);
  CHECK_THROWS_AS(project_h1(ScalarField(g, 0.5), spec, riesz), std::invalid_argument);
}
