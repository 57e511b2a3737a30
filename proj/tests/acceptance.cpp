// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "bllab/errors.hpp"
#include "bllab/harness.hpp"
#include "bllab/resolvent.hpp"

using namespace bllab;

namespace {

constexpr double kPi = 3.14159265358979323846;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s: %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void guarded(int id, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

BoundaryFunction constant_alpha(const GridPtr& g, double a) {
  return BoundaryFunction(g, Eigen::VectorXcd::Constant(g->boundary_count(), a));
}

RobinOperator make_op(const GridPtr& g, const ScalarField& q, double alpha) {
  return RobinOperator::assemble(g, q, constant_alpha(g, alpha), 100.0);
}

SpectralDataset truncated(const SpectralDataset& ds, int K) {
  SpectralDataset out = ds;
  out.lambdas = ds.lambdas.head(K);
  out.psis = ds.psis.leftCols(K);
  out.phis.resize(0, 0);
  return out;
}

double l2_rel(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b, const Eigen::VectorXd& w) {
  return std::sqrt((a - b).cwiseAbs2().dot(w) / b.cwiseAbs2().dot(w));
}

// Least-squares slope of log y against log x.
double loglog(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a, sy += b, sxx += a * a, sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Root of tan ω = 2ω/(ω² − 1) on (0, π) by bisection.
double robin_root() {
  auto f = [](double w) { return (w * w - 1.0) * std::sin(w) - 2.0 * w * std::cos(w); };
  double lo = 1e-9, hi = kPi - 1e-9;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((f(lo) < 0) == (f(mid) < 0) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

int main() {
  const auto box24 = Grid::build(3, {1.0, 1.05, 1.1}, {24, 24, 24});
  const auto bump24 = bump_potential(box24, box24->center(), 0.2, 5.0);

  guarded(1, [] {
    const auto t0 = Clock::now();
    auto g = Grid::build(3, {1, 1, 1}, {48, 48, 48});
    auto ds = forward_cached(make_op(g, zero_potential(g), 0.0), 10, false);
    const double p2 = kPi * kPi;
    const double ref[10] = {0, p2, p2, p2, 2 * p2, 2 * p2, 2 * p2, 3 * p2, 4 * p2, 4 * p2};
    double worst = std::abs(ds.lambdas[0]) / p2;  // the zero eigenvalue is judged relative to π²
    for (int k = 1; k < 10; ++k) worst = std::max(worst, std::abs(ds.lambdas[k] - ref[k]) / ref[k]);
    const double t = seconds_since(t0);
    report(1, worst <= 0.02 && t <= 300.0,
           "48^3 Neumann cube, worst relative eigenvalue error " + fmt("%.3e", worst) + ", " + fmt("%.1f", t) + " s");
  });

  guarded(2, [] {
    const auto t0 = Clock::now();
    auto g = Grid::build(1, {1}, {513});
    auto ds = eig(make_op(g, zero_potential(g), 1.0), 5, false);
    const double t = seconds_since(t0);
    const double w = robin_root();
    const double err = std::abs(ds.lambdas[0] - w * w);
    report(2, err <= 1e-3 && t <= 1.0,
           "lambda_1 = " + fmt("%.8f", ds.lambdas[0]) + " vs bisection " + fmt("%.8f", w * w) + ", error " +
               fmt("%.2e", err) + ", " + fmt("%.2f", t) + " s");
  });

  guarded(3, [&] {
    auto ds = forward_cached(make_op(box24, zero_potential(box24), 0.0), 200, false);
    auto fit = weyl_fit(ds, 3, 20, 200);
    const double slope_err = std::abs(fit.slope - 2.0 / 3.0) / (2.0 / 3.0);
    report(3, slope_err <= 0.15 && fit.C <= 3.0,
           "slope " + fmt("%.4f", fit.slope) + " (relative deviation " + fmt("%.3f", slope_err) + "), tightest C " +
               fmt("%.2f", fit.C) + " on k in [20, 200]");
  });

  guarded(4, [] {
    auto g = Grid::build(3, {1.0, 1.05, 1.1}, {16, 16, 16});
    int violations = 0, rows = 0;
    double worst = 0.0;
    for (bool with_bump : {false, true}) {
      auto q = with_bump ? bump_potential(g, g->center(), 0.2, 5.0) : zero_potential(g);
      auto op = make_op(g, q, 1.0);
      auto ds = eig(op, 40, false);
      BoundSuiteOptions o;
      o.operator_norms = false;
      o.limits = false;
      auto rep = verify_resolvent_bounds(op, ds, o);
      for (const auto& r : rep.rows) {
        if (r.estimate != "re4") continue;
        ++rows;
        worst = std::max(worst, r.ratio);
        if (r.ratio > 1.0 + 1e-10) ++violations;
      }
    }
    report(4, violations == 0 && rows == 1000,
           std::to_string(rows) + " probe rows, " + std::to_string(violations) + " violations, worst ratio " +
               fmt("%.6f", worst));
  });

  guarded(5, [&] {
    auto op = make_op(box24, zero_potential(box24), 0.0);
    const std::vector<double> taus{2, 4, 8, 16, 32};
    std::string detail;
    bool pass = true;
    for (double sigma : {0.0, 1.0}) {
      std::vector<double> norms;
      for (double tau : taus) {
        ShiftedSolver solver(op, cplx(tau, 1.0) * cplx(tau, 1.0));
        norms.push_back(resolvent_scale_norm(op, solver, sigma, 60, 99));
      }
      const double slope = loglog(taus, norms);
      const double target = -1.0 + 2.0 * sigma;
      pass = pass && std::abs(slope - target) <= 0.15;
      detail += "sigma " + fmt("%.0f", sigma) + " slope " + fmt("%.3f", slope) + " (target " + fmt("%.0f", target) + ")";
      if (sigma == 0.0) detail += "; ";
    }
    report(5, pass, detail);
  });

  // Shared bump-potential data for criteria 6 to 9.
  auto op_bump = make_op(box24, bump24, 1.0);
  auto op_zero = make_op(box24, zero_potential(box24), 1.0);
  const auto t_fwd = Clock::now();
  auto ds_bump = forward_cached(op_bump, 400, true);
  const double t_bump = seconds_since(t_fwd);

  guarded(6, [&] {
    const Point x0 = box24->center();
    auto probe = make_probe(box24, op_bump.alpha(), {0, 0, 0}, 3.0, op_bump.constants().tau_star, x0, false);
    const auto& g = probe.g;
    const cplx lam = -50.0;
    auto direct = bvp_solve_data(op_bump, g, lam);
    const Eigen::VectorXd& w = box24->weights();
    std::vector<double> gaps;
    for (int K : {100, 200, 400}) {
      auto m = modal_solution(ds_bump, g, lam, K);
      gaps.push_back(l2_rel(m.u->values, direct.u.values, w));
    }
    const bool monotone = gaps[1] <= gaps[0] && gaps[2] <= gaps[1];
    const Eigen::VectorXcd ref = bvp_solve_data(op_bump, g, -30.0).trace.values - bvp_solve_data(op_bump, g, -60.0).trace.values;
    auto inc = trace_increment(ds_bump, g, -30.0, -60.0, 400);
    const double inc_gap = l2_rel(inc.values, ref, box24->boundary_weights());
    report(6, monotone && gaps[2] <= 0.05 && inc_gap <= 1e-3,
           "modal vs direct at lambda = -50: " + fmt("%.4f", gaps[0]) + ", " + fmt("%.4f", gaps[1]) + ", " +
               fmt("%.4f", gaps[2]) + " for K_use = 100, 200, 400; trace increment gap " + fmt("%.2e", inc_gap));
  });

  const auto t_ref = Clock::now();
  auto ds_zero = forward_cached(op_zero, 300, false);
  const double t_zero = seconds_since(t_ref);
  auto dsA = align(truncated(ds_bump, 300), ds_zero);
  ReconstructionParams params;
  Reconstruction base_rec;

  guarded(7, [&] {
    const auto t0 = Clock::now();
    base_rec = reconstruct(dsA, ds_zero, params);
    const double t_rec = seconds_since(t0);
    const double err = relative_hminus1_error(base_rec.field, bump24);
    auto same = reconstruct(ds_zero, ds_zero, params);
    const bool zero = same.field.values.cwiseAbs().maxCoeff() == 0.0;
    const double total = t_rec + t_zero + t_bump;
    report(7, err <= 0.4 && zero && total <= 1800.0,
           "relative H^-1 error " + fmt("%.4f", err) + " (tau " + fmt("%.2f", base_rec.tau) + ", radius " +
               fmt("%.2f", base_rec.radius) + ", " + std::to_string(base_rec.sample_count) + " samples); identical data " +
               (zero ? "exactly 0" : "NOT 0") + "; forward + reconstruct " + fmt("%.1f", total) + " s");
  });

  guarded(8, [&] {
    if (base_rec.sample_count == 0) base_rec = reconstruct(dsA, ds_zero, params);
    auto corrupted = ds_zero;
    corrupted.lambdas[0] += 1.0;
    corrupted.lambdas[1] -= 0.8;
    ReconstructionParams p3 = params;
    p3.ell = 3;
    auto rec3 = reconstruct(dsA, corrupted, p3);
    const double change = relative_hminus1_error(rec3.field, base_rec.field);
    report(8, change <= 0.02, "l = 3 with corrupted lambda_1, lambda_2 vs uncorrupted l = 1: relative H^-1 change " +
                                  fmt("%.3e", change));
  });

  guarded(9, [&] {
    auto res = stability_sweep(dsA, ds_zero, bump24, {1e-4, 1e-3, 1e-2, 1e-1}, PerturbationModel{}, params);
    std::ostringstream s;
    s << "errors";
    for (const auto& r : res.records) s << ' ' << fmt("%.3f", r.error) << " (delta " << fmt("%.1e", r.delta) << ')';
    s << "; exponent " << fmt("%.4f", res.exponent) << ", C_fit " << fmt("%.3f", res.c_fit) << ", spread "
      << fmt("%.2f", res.spread) << ", fitted slope " << fmt("%.3f", res.slope);
    report(9, res.nondecreasing && res.consistent && std::abs(res.exponent - 2.0 / 15.0) < 1e-15, s.str());
  });

  guarded(10, [] {
    const bool psi_ok = psi(1.0, 0.0) == 0.0 && std::abs(psi(2.0, std::exp(-10.0)) - 0.01) <= 1e-15 &&
                        psi(0.5, 2.0) == 2.0 && psi(3.0, 2.0) == 2.0;
    const double d0 = delta_zero(3, 0.0);
    const bool d0_ok = std::abs(d0 - std::sqrt(2.0 / 13.0)) <= 1e-12;
    auto g = Grid::build(2, {1.0, 1.05}, {21, 23});
    auto ds = eig(make_op(g, bump_potential(g, g->center(), 0.2, 5.0), 1.0), 8, true);
    const auto path = (std::filesystem::temp_directory_path() / "bllab_acceptance_rt.bin").string();
    write_dataset(path, ds);
    auto back = read_dataset(path);
    std::filesystem::remove(path);
    const bool rt = back.lambdas == ds.lambdas && back.psis == ds.psis && back.phis == ds.phis &&
                    back.alpha == ds.alpha && back.operator_hash == ds.operator_hash;
    report(10, psi_ok && d0_ok && rt,
           std::string("psi values ") + (psi_ok ? "exact" : "WRONG") + "; delta_0 = " + fmt("%.15f", d0) +
               "; dataset round-trip " + (rt ? "bit-exact" : "DIFFERS"));
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
