#include <doctest.h>

#include <cmath>
#include <random>

#include "bllab/errors.hpp"
#include "bllab/operator.hpp"

using namespace bllab;

namespace {

constexpr double kPi = 3.14159265358979323846;

BoundaryFunction constant_alpha(const GridPtr& g, double a) {
  return BoundaryFunction(g, Eigen::VectorXcd::Constant(g->boundary_count(), a));
}

RobinOperator make_op(const GridPtr& g, double q, double alpha) {
  auto qf = ScalarField::from_function(g, [&](const Point&) { return q; });
  return RobinOperator::assemble(g, qf, constant_alpha(g, alpha), 100.0);
}

ScalarField random_complex(const GridPtr& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ScalarField u(g);
  for (Index i = 0; i < g->node_count(); ++i) u.values[i] = cplx(unit_uniform(rng()) - 0.5, unit_uniform(rng()) - 0.5);
  return u;
}

}  // namespace

TEST_CASE("neumann operator annihilates constants and is symmetric") {
  auto g = Grid::build(3, {1, 1, 1}, {9, 9, 9});
  auto op = make_op(g, 0.0, 0.0);
  const Eigen::VectorXd r = op.matrix() * Eigen::VectorXd::Ones(g->node_count());
  CHECK(r.cwiseAbs().maxCoeff() <= 1e-10);
  SparseReal t = op.matrix().transpose();
  CHECK((op.matrix() - t).norm() == 0.0);
  CHECK(op.constants().c == 0.0);
  CHECK(op.constants().kappa == 0.5);
  CHECK(op.constants().lambda_star > 0.0);
  CHECK(op.constants().tau_star >= 1.0);
  CHECK(op.constants().lambda_plus >= op.constants().lambda_star);
}

TEST_CASE("form_apply closed forms") {
  auto g = Grid::build(3, {1, 1, 1}, {17, 17, 17});
  auto one = ScalarField::from_function(g, [](const Point&) { return 1.0; });
  CHECK(std::abs(form_apply(make_op(g, 0.0, 1.0), one, one) - cplx(6.0)) <= 1e-12);
  CHECK(std::abs(form_apply(make_op(g, 2.5, 0.0), one, one) - cplx(2.5)) <= 1e-12);

  auto neu = make_op(g, 0.0, 0.0);
  auto s = ScalarField::from_function(g, [](const Point& x) { return std::sin(kPi * x[0]); });
  CHECK(std::abs(form_apply(neu, s, one)) <= 1e-12);

  auto rob = make_op(g, 1.5, 0.7);
  auto u = random_complex(g, 1);
  auto v = random_complex(g, 2);
  const cplx a = form_apply(rob, u, v);
  const cplx b = form_apply(rob, v, u);
  CHECK(a == std::conj(b));
}

TEST_CASE("form_apply agrees with the assembled matrix") {
  auto g = Grid::build(2, {1.0, 1.3}, {11, 14});
  auto q = ScalarField::from_function(g, [](const Point& x) { return 1.0 + x[0] * x[1]; });
  auto op = RobinOperator::assemble(g, q, constant_alpha(g, 0.3), 100.0);
  auto u = random_complex(g, 5);
  auto v = random_complex(g, 6);
  // dot conjugates its first argument: Σ (M u)_i v̄_i
  const cplx via_matrix = v.values.dot(op.matrix().cast<cplx>() * u.values);
  CHECK(std::abs(form_apply(op, u, v) - via_matrix) <= 1e-10 * std::abs(via_matrix));
}

TEST_CASE("normal derivative") {
  auto g = Grid::build(3, {1, 1, 1}, {9, 9, 9});
  auto op = make_op(g, 0.0, 0.0);
  auto lin = ScalarField::from_function(g, [](const Point& x) { return x[0]; });
  auto dn = normal_derivative(op, lin);
  for (int f = 0; f < 6; ++f) {
    const double expect = f == 0 ? -1.0 : (f == 1 ? 1.0 : 0.0);
    const Index off = g->face_offset(f);
    for (Index k = 0; k < 81; ++k) CHECK(std::abs(dn.values[off + k] - expect) <= 1e-12);
  }
  auto c = ScalarField::from_function(g, [](const Point&) { return 3.0; });
  CHECK(normal_derivative(op, c).values.cwiseAbs().maxCoeff() == 0.0);

  const cplx k(-1.0, 1.0);  // i(1+i)
  double prev = 1e9;
  for (int n : {9, 17, 33}) {
    auto gg = Grid::build(3, {1, 1, 1}, {n, n, n});
    auto o = make_op(gg, 0.0, 0.0);
    ScalarField e(gg);
    for (Index i = 0; i < gg->node_count(); ++i) e.values[i] = std::exp(k * gg->coord(i)[0]);
    auto d = normal_derivative(o, e);
    const Index off = gg->face_offset(1);
    const cplx expect = k * std::exp(k);
    double err = 0.0;
    for (Index j = 0; j < Index(n) * n; ++j) err = std::max(err, std::abs(d.values[off + j] - expect));
    const double h = 1.0 / (n - 1);
    CHECK(err <= 2.0 * h * h);
    CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("green defect") {
  auto g = Grid::build(3, {1, 1, 1}, {9, 9, 9});
  auto op = make_op(g, 0.0, 0.0);
  auto c = ScalarField::from_function(g, [](const Point&) { return 2.0; });
  CHECK(green_defect(op, c, c) == 0.0);
  auto sq = ScalarField::from_function(g, [](const Point& x) { return x[0] * x[0]; });
  auto one = ScalarField::from_function(g, [](const Point&) { return 1.0; });
  CHECK(green_defect(op, sq, one) <= 1e-11);

  std::vector<double> defects;
  std::vector<double> hs;
  for (int n : {17, 33, 65}) {
    auto gg = Grid::build(3, {1, 1, 1}, {n, n, n});
    auto s = ScalarField::from_function(gg, [](const Point& x) { return std::sin(kPi * x[0]) * std::cos(x[1]); });
    defects.push_back(green_defect(*gg, s, s));
    hs.push_back(1.0 / (n - 1));
  }
  // least-squares slope of log defect against log h
  double mx = 0, my = 0;
  for (size_t i = 0; i < hs.size(); ++i) {
    mx += std::log(hs[i]) / hs.size();
    my += std::log(defects[i]) / hs.size();
  }
  double sxy = 0, sxx = 0;
  for (size_t i = 0; i < hs.size(); ++i) {
    sxy += (std::log(hs[i]) - mx) * (std::log(defects[i]) - my);
    sxx += std::pow(std::log(hs[i]) - mx, 2);
  }
  CHECK(sxy / sxx >= 1.8);
}

TEST_CASE("boundary form") {
  auto g = Grid::build(3, {1, 1, 1}, {9, 9, 9});
  auto one = ScalarField::from_function(g, [](const Point&) { return 1.0; });
  CHECK(boundary_form(make_op(g, 0.0, 0.0), one, one) == cplx(0.0));
  auto rob = make_op(g, 0.0, 1.0);
  CHECK(std::abs(boundary_form(rob, one, one) - cplx(6.0)) <= 1e-12);
  // nodal indicator of x = 0 also touches the edge nodes of the four adjacent faces: excess 4 * h/2
  auto ind = ScalarField::from_function(g, [](const Point& x) { return x[0] == 0.0 ? 1.0 : 0.0; });
  CHECK(std::abs(boundary_form(rob, ind, ind) - cplx(1.0 + 2.0 / 8.0)) <= 1e-12);

  // Hölder bound with p = 4, s = (p/2)* = 2
  std::mt19937_64 rng(11);
  BoundaryFunction alpha(g);
  for (Index e = 0; e < g->boundary_count(); ++e) alpha.values[e] = unit_uniform(rng()) + 0.1;
  auto op = RobinOperator::assemble(g, ScalarField(g), alpha, 100.0);
  for (int t = 0; t < 20; ++t) {
    auto u = random_complex(g, 100 + t);
    auto v = random_complex(g, 200 + t);
    const double lhs = std::abs(boundary_form(op, u, v));
    const double rhs = boundary_lp_norm(alpha, 2.0) * boundary_lp_norm(trace(u), 4.0) * boundary_lp_norm(trace(v), 4.0);
    CHECK(lhs <= rhs * (1 + 1e-12));
  }
}

TEST_CASE("robin constraint and coercivity") {
  auto g = Grid::build(3, {1, 1, 1}, {9, 9, 9});
  auto neu = make_op(g, 0.0, 0.0);
  const double tn = neu.constants().trace_norm;
  CHECK(tn > 0.5);
  CHECK_THROWS_AS(make_op(g, 0.0, -2.0 / (tn * tn)), ValidationError);

  auto op = make_op(g, 0.0, -0.3 / (tn * tn));
  const auto& c = op.constants();
  CHECK(c.kappa == doctest::Approx(0.5 * (1 - 0.3)).epsilon(1e-9));
  // fresh probe bank, not the one used for calibration
  auto bank = probe_bank(*g, 200, 777);
  int violations = 0;
  for (const auto& u : bank) {
    const double a = u.dot(op.matrix() * u);
    const double h2 = u.cwiseAbs2().dot(g->weights());
    const double v2 = gradient_energy(*g, u.cast<cplx>()) + h2;
    if (a + c.lambda_star * h2 < c.kappa * v2) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("form perturbation constants are reported and finite") {
  auto g = Grid::build(3, {1.0, 1.05, 1.1}, {11, 11, 11});
  auto q = singular_potential(g, g->center(), 1.0, std::pow(0.5 * g->max_spacing(), -1.0));
  auto op = RobinOperator::assemble(g, q, constant_alpha(g, 0.0), 100.0);
  const auto& ce = op.constants().c_eps;
  REQUIRE(ce.size() == 3);
  for (const auto& [eps, cval] : ce) CHECK(std::isfinite(cval));
  CHECK(ce[0].second <= ce[2].second);
  for (const auto& u : probe_bank(*g, 50, 99)) {
    const double h2 = u.cwiseAbs2().dot(g->weights());
    const double v2 = gradient_energy(*g, u.cast<cplx>()) + h2;
    const double qu2 = op.q().cwiseAbs().cwiseProduct(u.cwiseAbs2()).dot(g->weights());
    CHECK(qu2 <= ce[0].first * v2 + ce[0].second * h2 * 1.5 + 1e-12);
  }
}

TEST_CASE("operator hash depends on the data") {
  auto g = Grid::build(2, {1, 1}, {7, 7});
  auto a = make_op(g, 0.0, 1.0);
  auto b = make_op(g, 0.0, 1.0);
  auto c = make_op(g, 0.1, 1.0);
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());
  CHECK(a.hash().size() == 64);
}
