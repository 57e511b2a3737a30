#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "bllab/errors.hpp"
#include "bllab/spectral.hpp"

using namespace bllab;

namespace {

constexpr double kPi = 3.14159265358979323846;

RobinOperator make_op(const GridPtr& g, double q, double alpha) {
  auto qf = ScalarField::from_function(g, [&](const Point&) { return q; });
  return RobinOperator::assemble(g, qf, BoundaryFunction(g, Eigen::VectorXcd::Constant(g->boundary_count(), alpha)),
                                 100.0);
}

// First root of tan ω = 2αω/(ω² − α²) on (0, π), by bisection.
double robin_1d_first(double alpha) {
  auto f = [&](double w) { return (w * w - alpha * alpha) * std::sin(w) - 2 * alpha * w * std::cos(w); };
  double lo = 1e-9, hi = kPi - 1e-9;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((f(lo) < 0) == (f(mid) < 0) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Discrete Neumann spectrum of the lumped five-point Laplacian on a rectangle.
std::vector<double> neumann_2d(int nx, int ny, double lx, double ly, int K) {
  const double hx = lx / (nx - 1), hy = ly / (ny - 1);
  std::vector<double> all;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      all.push_back(4 / (hx * hx) * std::pow(std::sin(i * kPi / (2.0 * (nx - 1))), 2) +
                    4 / (hy * hy) * std::pow(std::sin(j * kPi / (2.0 * (ny - 1))), 2));
  std::sort(all.begin(), all.end());
  all.resize(static_cast<size_t>(K));
  return all;
}

}  // namespace

TEST_CASE("1D Robin ground state") {
  auto g = Grid::build(1, {1}, {513});
  auto op = make_op(g, 0.0, 1.0);
  auto ds = eig(op, 5, true);
  const double w = robin_1d_first(1.0);
  CHECK(w * w == doctest::Approx(1.7071).epsilon(1e-4));
  CHECK(std::abs(ds.lambdas[0] - w * w) <= 1e-5 * w * w);
  auto chk = check_dataset(ds, op);
  CHECK(chk.gram_error <= 1e-10);
  CHECK(chk.eigen_residual <= 1e-8);
  CHECK(chk.nondecreasing);
  CHECK(chk.above_lower_bound);
}

TEST_CASE("Neumann rectangle matches the discrete closed form") {
  auto g = Grid::build(2, {1.0, 1.3}, {41, 53});
  auto op = make_op(g, 0.0, 0.0);
  auto ds = eig(op, 30, true);
  auto ref = neumann_2d(41, 53, 1.0, 1.3, 30);
  for (int k = 0; k < 30; ++k) CHECK(std::abs(ds.lambdas[k] - ref[static_cast<size_t>(k)]) <= 1e-9 * (1 + ref[static_cast<size_t>(k)]));
  CHECK(std::abs(ds.lambdas[0]) <= 1e-9);
  // Constant ground state: trace is 1/sqrt(area).
  CHECK(ds.psis.col(0).minCoeff() == doctest::Approx(1 / std::sqrt(1.3)).epsilon(1e-8));
  auto chk = check_dataset(ds, op);
  CHECK(chk.eigen_residual <= 1e-8);
  CHECK(chk.robin_residual <= 0.05);
}

TEST_CASE("eig rejects too many modes") {
  auto g = Grid::build(1, {1}, {21});
  auto op = make_op(g, 0.0, 1.0);
  CHECK_THROWS_AS(eig(op, 5, false), ValidationError);
  CHECK_THROWS_AS(eig(op, 0, false), ValidationError);
}

TEST_CASE("nonnegative potential raises every eigenvalue") {
  auto g = Grid::build(2, {1, 1}, {25, 25});
  auto a = eig(make_op(g, 0.0, 0.5), 12, false);
  auto q = bump_potential(g, g->center(), 0.3, 4.0);
  auto opq = RobinOperator::assemble(g, q, BoundaryFunction(g, Eigen::VectorXcd::Constant(g->boundary_count(), 0.5)), 100.0);
  auto b = eig(opq, 12, false);
  for (int k = 0; k < 12; ++k) CHECK(b.lambdas[k] >= a.lambdas[k] - 1e-10);
  CHECK(b.lambdas[0] > a.lambdas[0] + 1e-3);
}

TEST_CASE("align resolves a degenerate triple") {
  auto g = Grid::build(3, {1, 1, 1}, {11, 11, 11});
  auto op = make_op(g, 0.0, 0.0);
  EigOptions o1, o2;
  o2.seed = 99;
  auto ref = eig(op, 8, true, o1);
  auto other = eig(op, 8, true, o2);
  CHECK(ref.lambdas[1] == doctest::Approx(ref.lambdas[3]).epsilon(1e-9));
  const Eigen::VectorXd& bw = g->boundary_weights();
  auto gap = [&](const SpectralDataset& x) {
    const Eigen::VectorXd d = (x.psis.leftCols(4) - ref.psis.leftCols(4)).cwiseAbs2().transpose() * bw;
    return std::sqrt(d.maxCoeff());
  };
  auto al = align(other, ref);
  CHECK(al.aligned_to == ref.operator_hash);
  CHECK(gap(al) <= 1e-6);
  CHECK(al.lambdas == other.lambdas);
  CHECK((al.phis.transpose() * g->weights().asDiagonal() * al.phis - Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-9);

  auto self = align(ref, ref);
  CHECK(self.psis == ref.psis);
  auto twice = align(al, ref);
  CHECK((twice.psis - al.psis).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("Weyl fit on a 1D Neumann interval") {
  auto g = Grid::build(1, {1}, {1001});
  auto ds = eig(make_op(g, 0.0, 0.0), 60, false);
  auto fit = weyl_fit(ds, 1);
  CHECK(fit.k_min == 20);
  CHECK(fit.slope == doctest::Approx(2.0).epsilon(0.05));
  CHECK(fit.C >= 1.0);
  CHECK_THROWS_AS(weyl_fit(ds, 1, 10, 5), ValidationError);
}

TEST_CASE("H2 diagnostic is bounded for smooth modes") {
  auto g = Grid::build(2, {1, 1}, {33, 33});
  auto op = make_op(g, 0.0, 0.0);
  auto ds = eig(op, 6, true);
  auto h2 = h2_diagnostic(ds, op);
  for (double v : h2) CHECK(v <= 3.0);
  // cos(πx): H² norm squared is (1 + π² + π⁴)/2.
  auto f = ScalarField::from_function(g, [](const Point& x) { return std::cos(kPi * x[0]); });
  CHECK(h2_norm(*g, f.values.real()) == doctest::Approx(std::sqrt((1 + kPi * kPi + std::pow(kPi, 4)) / 2)).epsilon(0.02));
}

TEST_CASE("dataset files round-trip") {
  auto g = Grid::build(2, {1, 1.2}, {15, 17});
  auto ds = eig(make_op(g, 1.0, 0.3), 6, true);
  const auto path = (std::filesystem::temp_directory_path() / "bllab_ds_rt.bin").string();
  write_dataset(path, ds);
  auto back = read_dataset(path);
  CHECK(back.lambdas == ds.lambdas);
  CHECK(back.psis == ds.psis);
  CHECK(back.phis == ds.phis);
  CHECK(back.operator_hash == ds.operator_hash);
  CHECK(back.grid->same_as(*g));
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_dataset(path), ValidationError);
}
