#include <doctest.h>

#include <cmath>
#include <random>

#include "bllab/cgo.hpp"
#include "bllab/errors.hpp"

using namespace bllab;

namespace {

constexpr double kPi = 3.14159265358979323846;

double norm3(const Point& p) { return std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]); }

// Hand-made dataset: random traces, increasing eigenvalues, unit Robin coefficient.
SpectralDataset synthetic(const GridPtr& g, int K, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> nd;
  SpectralDataset ds;
  ds.grid = g;
  ds.lambdas.resize(K);
  ds.psis.resize(g->boundary_count(), K);
  for (int k = 0; k < K; ++k) {
    ds.lambdas[k] = 1.0 + 3.0 * k + 0.1 * nd(rng);
    for (Index e = 0; e < g->boundary_count(); ++e) ds.psis(e, k) = nd(rng);
  }
  ds.alpha = Eigen::VectorXd::Ones(g->boundary_count());
  ds.operator_hash = "synthetic-" + std::to_string(seed);
  ds.meta["lambda_star"] = 0.5;
  return ds;
}

cplx pairing(const SpectralDataset& ds, const CgoProbe& p, int k) {
  const Eigen::VectorXd& w = ds.grid->boundary_weights();
  cplx a = 0, b = 0;
  for (Index e = 0; e < w.size(); ++e) {
    a += w[e] * p.g.values[e] * ds.psis(e, k);
    b += w[e] * ds.psis(e, k) * p.h_bar.values[e];
  }
  return a * b;
}

}  // namespace

TEST_CASE("probe directions") {
  auto d0 = directions({0, 0, 0}, 3.0);
  CHECK(d0.eta == Point{1, 0, 0});
  CHECK(d0.omega == Point{1, 0, 0});
  CHECK(d0.theta == Point{1, 0, 0});

  auto d = directions({2 * kPi, 0, 0}, 10.0);
  CHECK(d.eta[1] == doctest::Approx(1.0));
  CHECK(d.omega[0] == doctest::Approx(-0.31416).epsilon(1e-4));
  CHECK(d.omega[1] == doctest::Approx(0.94937).epsilon(1e-4));
  CHECK(d.theta[0] == doctest::Approx(0.31416).epsilon(1e-4));
  CHECK(std::abs(norm3(d.omega) - 1) <= 1e-12);
  CHECK(std::abs(norm3(d.theta) - 1) <= 1e-12);

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int t = 0; t < 50; ++t) {
    const Point xi{u(rng), u(rng), u(rng)};
    const double tau = 0.5 * norm3(xi) + 0.1 + std::abs(u(rng));
    auto dd = directions(xi, tau);
    const cplx s(tau, 1.0);
    for (int j = 0; j < 3; ++j) {
      const cplx lhs = s * (dd.theta[static_cast<size_t>(j)] - dd.omega[static_cast<size_t>(j)]);
      const cplx rhs = cplx(xi[static_cast<size_t>(j)], xi[static_cast<size_t>(j)] / tau);
      CHECK(std::abs(lhs - rhs) <= 1e-12 * (1 + std::abs(rhs)));
    }
    CHECK(std::abs(norm3(dd.omega) - 1) <= 1e-12);
    CHECK(std::abs(dd.eta[0] * xi[0] + dd.eta[1] * xi[1] + dd.eta[2] * xi[2]) <= 1e-12 * norm3(xi));
  }
  CHECK_THROWS_AS(directions({4, 0, 0}, 2.0), ValidationError);
  CHECK_THROWS_AS(directions({1, 0, 0}, 5.0, 1), ValidationError);
}

TEST_CASE("probe boundary data") {
  auto g = Grid::build(3, {1.0, 1.05, 1.1}, {9, 9, 9});
  auto p = make_probe(g, Eigen::VectorXd::Zero(g->boundary_count()), {0, 0, 0}, 1.0);
  CHECK(p.sqrt_lambda == cplx(1, 1));
  // First face is x_1 = 0 with ν = −e_1, first node is the corner at the origin.
  CHECK(std::abs(p.g.values[0] - cplx(1, -1)) <= 1e-15);
  for (Index i = 0; i < g->node_count(); ++i) {
    const Point x = g->coord(i);
    CHECK(std::abs(std::abs(p.e_omega.values[i]) - std::exp(-x[0])) <= 1e-14);
  }
  Eigen::VectorXd one = Eigen::VectorXd::Ones(g->boundary_count());
  auto a = make_probe(g, one, {2, 1, 0}, 10.0);
  auto b = make_probe(g, one, {2, 1, 0}, 20.0);
  CHECK(l2_boundary_norm(b.g) / l2_boundary_norm(a.g) == doctest::Approx(2.0).epsilon(0.1));
  CHECK(a.h().values == a.h_bar.values.conjugate());
  CHECK_THROWS_AS(make_probe(g, one, {0, 0, 0}, 1.5, 2.0), ValidationError);
  CHECK_THROWS_AS(make_probe(g, one, {30, 0, 0}, 10.0), ValidationError);
}

TEST_CASE("scattering series closed forms") {
  auto g = Grid::build(3, {1.0, 1.05, 1.1}, {6, 6, 6});
  auto a = synthetic(g, 20, 1);
  auto p = make_probe(g, a.alpha, {1, 2, 0}, 4.0);

  auto same = scattering_series(a, a, p, 20, 1);
  CHECK(same.U == cplx(0));
  CHECK(same.V == cplx(0));
  CHECK(same.R == cplx(0));

  const double eps = 0.37;
  auto b = a;
  b.lambdas[0] += eps;
  b.operator_hash = "perturbed";
  b.aligned_to = a.operator_hash;
  auto s = scattering_series(a, b, p, 20, 1);
  const cplx lam = p.lambda;
  const cplx dt = pairing(b, p, 0);
  const cplx expect = eps * dt / ((a.lambdas[0] - lam) * (a.lambdas[0] + eps - lam));
  CHECK(s.U == cplx(0));
  CHECK(std::abs(s.V - expect) <= 1e-12 * std::abs(expect));
  CHECK(s.R == cplx(0));

  // With ℓ = 2 the shifted mode moves from 𝒱 into R (built from d_1 = d̃_1 here).
  auto s2 = scattering_series(a, b, p, 20, 2);
  CHECK(std::abs(s2.V) <= 1e-14 * std::abs(expect));
  CHECK(std::abs(s2.R - expect) <= 1e-12 * std::abs(expect));

  auto c = synthetic(g, 20, 2);
  CHECK_THROWS_AS(scattering_series(a, c, p, 20, 1), ValidationError);
  CHECK_THROWS_AS(scattering_series(a, b, p, 21, 1), ValidationError);
  CHECK_THROWS_AS(scattering_series(a, b, p, 20, 0), ValidationError);
}

TEST_CASE("Fourier samples and reconstruction on identical data") {
  auto g = Grid::build(3, {1.0, 1.05, 1.1}, {8, 8, 8});
  auto a = synthetic(g, 40, 5);
  ReconstructionParams p;
  p.tau = 3.0;
  auto e = fourier_sample(a, a, {1, 0, 2}, p);
  CHECK(e.value == cplx(0));
  CHECK(e.remainder_budget == doctest::Approx(1 / 3.0));
  CHECK(e.shift == doctest::Approx(std::sqrt(5.0) / 3));

  auto rec = reconstruct(a, a, p);
  CHECK(rec.field.values.cwiseAbs().maxCoeff() == 0.0);
  CHECK(rec.diagnostics.at("hminus1_norm").get<double>() == 0.0);
  CHECK(rec.sample_count >= 10);
  for (Index i = 0; i < rec.samples.size(); ++i)
    CHECK(rec.samples.samples[rec.samples.mirror(i)] == std::conj(rec.samples.samples[i]));

  ReconstructionParams tiny = p;
  tiny.ball_radius = 0.5;
  CHECK_THROWS_AS(reconstruct(a, a, tiny), ValidationError);
  ReconstructionParams low = p;
  low.tau = 1.2;
  CHECK_THROWS_AS(reconstruct(a, a, low), ValidationError);
}

TEST_CASE("Hermitian symmetry of nonzero samples") {
  auto g = Grid::build(3, {1.0, 1.05, 1.1}, {8, 8, 8});
  auto a = synthetic(g, 40, 5);
  auto b = a;
  for (int k = 0; k < 40; ++k) b.lambdas[k] += 0.2 * std::sin(k + 1.0);
  b.operator_hash = "other";
  b.aligned_to = a.operator_hash;
  ReconstructionParams p;
  p.tau = 3.0;
  auto rec = reconstruct(a, b, p);
  CHECK(rec.field.values.cwiseAbs().maxCoeff() > 0.0);
  CHECK(rec.field.is_real());
  for (Index i = 0; i < rec.samples.size(); ++i)
    CHECK(rec.samples.samples[rec.samples.mirror(i)] == std::conj(rec.samples.samples[i]));
}

TEST_CASE("reconstruction parameters") {
  ReconstructionParams p;
  p.n = 3;
  CHECK(p.beta() == 0.0);
  CHECK(p.default_rho() == doctest::Approx(0.2));
  p.r = 1.8;
  CHECK(p.beta() == doctest::Approx(3 * 0.2 / 3.6));
  p.r = 1.4;
  CHECK_THROWS_AS(p.validate(3), ValidationError);
  auto j = nlohmann::json::parse(
      R"({"r": 2, "tau": "auto", "rho": 0.3, "K_use": 50, "ell": 3, "lattice": {"padding": 2, "ball_radius": 9}})");
  auto q = ReconstructionParams::from_json(j);
  CHECK(q.tau == 0.0);
  CHECK(q.rho == 0.3);
  CHECK(q.ell == 3);
  CHECK(q.ball_radius == 9.0);
  CHECK_THROWS_AS(ReconstructionParams::from_json(nlohmann::json::parse(R"({"tau": "fast"})")), ValidationError);
}

TEST_CASE("cutoff choice") {
  CHECK(delta_zero(3, 0.0) == doctest::Approx(std::sqrt(2.0 / 13.0)));
  CHECK(delta_zero(3, 0.0) == doctest::Approx(0.3922).epsilon(1e-4));
  CHECK(choose_tau(0.0, 3, 0.0, 2.0, 40.0) == 40.0);
  CHECK(choose_tau(0.5, 3, 0.0, 2.0, 40.0) == 2.0);
  CHECK_THROWS_AS(choose_tau(-1.0, 3, 0.0, 2.0, 40.0), ValidationError);

  for (double beta : {0.0, 0.2}) {
    const double delta = 1e-3;
    const double a = 2 * (1 - 2 * beta) / 5.0, b = 13.0 / 5.0;
    auto f = [&](double t) { return std::pow(t, -a) + std::pow(t, b) * delta * delta; };
    double best = 1.0, fbest = f(1.0);
    for (double t = 1.0; t <= 1000.0; t *= 1.0005)
      if (f(t) < fbest) fbest = f(t), best = t;
    CHECK(choose_tau(delta, 3, beta, 1.0, 1e6) == doctest::Approx(best).epsilon(0.01));
  }
}
