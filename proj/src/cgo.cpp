#include "bllab/cgo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bllab/errors.hpp"
#include "bllab/parallel.hpp"
#include "bllab/resolvent.hpp"

namespace bllab {

namespace {

double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double length(const Point& a) { return std::sqrt(dot(a, a)); }

Point axpy(double a, const Point& x, double b, const Point& y) {
  return {a * x[0] + b * y[0], a * x[1] + b * y[1], a * x[2] + b * y[2]};
}

Point shifted(const Point& x, const Point& origin) { return {x[0] - origin[0], x[1] - origin[1], x[2] - origin[2]}; }

bool datasets_aligned(const SpectralDataset& a, const SpectralDataset& b) {
  return a.operator_hash == b.operator_hash || a.aligned_to == b.operator_hash || b.aligned_to == a.operator_hash;
}

void check_pair(const SpectralDataset& dsA, const SpectralDataset& dsB, int K_use, const char* what) {
  require_same_grid(*dsA.grid, *dsB.grid, what);
  if (dsA.K() != dsB.K()) throw ValidationError(std::string(what) + ": datasets hold different numbers of modes");
  if (!datasets_aligned(dsA, dsB)) throw ValidationError(std::string(what) + ": datasets are not aligned");
  if (K_use < 1 || K_use > dsA.K())
    throw ValidationError(std::string(what) + ": K_use must lie in [1, " + std::to_string(dsA.K()) + "]");
}

int resolve_k(const SpectralDataset& ds, int K_use) { return K_use == 0 ? ds.K() : K_use; }

constexpr double kTauFraction = 0.6;
constexpr double kBallFraction = 0.9;

double auto_ball_radius(double tau) { return kBallFraction * 2.0 * tau; }

}  // namespace

ProbeDirections directions(const Point& xi, double tau, int n) {
  if (n < 1 || n > 3) throw ValidationError("directions: dimension must be 1, 2 or 3");
  for (int d = n; d < 3; ++d)
    if (xi[static_cast<size_t>(d)] != 0.0) throw ValidationError("directions: ξ has components beyond the dimension");
  const double xn = length(xi);
  if (!(tau > 0.5 * xn)) throw ValidationError("directions: τ must exceed |ξ|/2");
  ProbeDirections out;
  if (xn == 0.0) {
    out.eta = {1, 0, 0};
    out.omega = out.theta = out.eta;
    return out;
  }
  if (n == 1) throw ValidationError("directions: no direction orthogonal to ξ ≠ 0 in one dimension");
  int j = 0;
  for (int d = 1; d < n; ++d)
    if (std::abs(xi[static_cast<size_t>(d)]) < std::abs(xi[static_cast<size_t>(j)])) j = d;
  Point e{0, 0, 0};
  e[static_cast<size_t>(j)] = 1.0;
  Point eta = axpy(1.0, e, -xi[static_cast<size_t>(j)] / (xn * xn), xi);
  const double en = length(eta);
  out.eta = {eta[0] / en, eta[1] / en, eta[2] / en};
  const double a = std::sqrt(1.0 - xn * xn / (4 * tau * tau));
  out.omega = axpy(a, out.eta, -0.5 / tau, xi);
  out.theta = axpy(a, out.eta, 0.5 / tau, xi);
  return out;
}

BoundaryFunction CgoProbe::h() const {
  return BoundaryFunction(h_bar.grid, h_bar.values.conjugate());
}

CgoProbe make_probe(GridPtr grid, const Eigen::VectorXd& alpha, const Point& xi, double tau, double tau_star,
                    const Point& origin, bool fields) {
  if (alpha.size() != grid->boundary_count()) throw ValidationError("make_probe: α has the wrong length");
  if (!(tau > tau_star) && !(tau == tau_star && tau_star >= 1.0))
    throw ValidationError("make_probe: τ must be at least τ* = " + std::to_string(tau_star));
  const auto dirs = directions(xi, tau, grid->dim());
  CgoProbe p;
  p.tau = tau;
  p.sqrt_lambda = cplx(tau, 1.0);
  p.lambda = p.sqrt_lambda * p.sqrt_lambda;
  p.xi = xi;
  p.omega = dirs.omega;
  p.theta = dirs.theta;
  p.origin = origin;
  const cplx i(0.0, 1.0);
  const cplx s = p.sqrt_lambda;
  if (fields) {
    p.e_omega = ScalarField(grid);
    p.e_minus_theta = ScalarField(grid);
    for (Index k = 0; k < grid->node_count(); ++k) {
      const Point x = shifted(grid->coord(k), origin);
      p.e_omega.values[k] = std::exp(i * s * dot(p.omega, x));
      p.e_minus_theta.values[k] = std::exp(-i * s * dot(p.theta, x));
    }
  }
  p.g = BoundaryFunction(grid);
  p.h_bar = BoundaryFunction(grid);
  const auto& nodes = grid->boundary_nodes();
  const auto& normals = grid->boundary_normals();
  for (Index e = 0; e < grid->boundary_count(); ++e) {
    const Point x = shifted(grid->coord(nodes[static_cast<size_t>(e)]), origin);
    const Point& nu = normals[static_cast<size_t>(e)];
    p.g.values[e] = (i * s * dot(p.omega, nu) + alpha[e]) * std::exp(i * s * dot(p.omega, x));
    p.h_bar.values[e] = (-i * s * dot(p.theta, nu) + alpha[e]) * std::exp(-i * s * dot(p.theta, x));
  }
  p.gh_norm = l2_boundary_norm(p.g) * l2_boundary_norm(p.h_bar) / (tau * tau);
  return p;
}

SeriesTerms scattering_series(const SpectralDataset& dsA, const SpectralDataset& dsB, const CgoProbe& probe,
                              int K_use, int ell) {
  check_pair(dsA, dsB, K_use, "scattering_series");
  if (ell < 1 || ell > K_use + 1) throw ValidationError("scattering_series: ℓ must lie in [1, K_use + 1]");
  require_same_grid(*probe.g.grid, *dsA.grid, "scattering_series");
  const cplx lambda = probe.lambda;
  const double eps = 1e-6 * (1.0 + std::abs(lambda));
  for (int k = 0; k < K_use; ++k)
    if (std::abs(dsA.lambdas[k] - lambda) < eps || std::abs(dsB.lambdas[k] - lambda) < eps)
      throw ValidationError("scattering_series: λ_τ collides with the spectrum");

  const Eigen::VectorXcd w = dsA.grid->boundary_weights().cast<cplx>();
  const Eigen::VectorXcd wg = w.cwiseProduct(probe.g.values);
  const Eigen::VectorXcd wh = w.cwiseProduct(probe.h_bar.values);
  auto pairing = [&](const SpectralDataset& ds) {
    const auto psi = ds.psis.leftCols(K_use).transpose().cast<cplx>();
    const Eigen::VectorXcd a = psi * wg;
    const Eigen::VectorXcd b = psi * wh;
    return Eigen::VectorXcd(a.cwiseProduct(b));
  };
  const Eigen::VectorXcd d = pairing(dsA);
  const Eigen::VectorXcd dt = pairing(dsB);

  SeriesTerms out;
  for (int k = 0; k < K_use; ++k) {
    const double lk = dsA.lambdas[k];
    const double lt = dsB.lambdas[k];
    out.U += (d[k] - dt[k]) / (lk - lambda);
    if (k + 1 >= ell)
      out.V += (lt - lk) * dt[k] / ((lk - lambda) * (lt - lambda));
    else
      out.R += (lt - lk) * d[k] / ((lk - lambda) * (lt - lambda));
  }
  if (out.U != cplx(0.0) || out.V != cplx(0.0))
    out.tail = modal_tail(dsA, l2_boundary_norm(probe.g), lambda, K_use) * l2_boundary_norm(probe.h_bar);
  return out;
}

double ReconstructionParams::beta() const {
  if (n <= 0) throw ValidationError("ReconstructionParams: dimension not set");
  return std::max(0.0, n * (2.0 - r) / (2.0 * r));
}

double ReconstructionParams::default_rho() const { return (1.0 - 2.0 * beta()) / (n + 2.0); }

void ReconstructionParams::validate(int grid_dim) const {
  if (n != grid_dim) throw ValidationError("ReconstructionParams: n does not match the grid dimension");
  if (!(r > 0.5 * n) && !(n >= 4 && r == 0.5 * n)) throw ValidationError("ReconstructionParams: r must exceed n/2");
  const double b = beta();
  if (!(b >= 0.0 && b < 0.5)) throw ValidationError("ReconstructionParams: β must lie in [0, 1/2)");
  const double rh = rho == 0.0 ? default_rho() : rho;
  if (!(rh > 0.0 && rh < 1.0)) throw ValidationError("ReconstructionParams: ϱ must lie in (0, 1)");
  if (tau < 0.0 || ball_radius < 0.0 || delta < 0.0 || tau_max < 0.0)
    throw ValidationError("ReconstructionParams: τ, ball radius, δ and τ_max must be nonnegative");
  if (K_use < 0 || ell < 1) throw ValidationError("ReconstructionParams: bad K_use or ℓ");
  if (!(padding >= 1.0)) throw ValidationError("ReconstructionParams: padding must be at least 1");
}

nlohmann::json ReconstructionParams::to_json() const {
  nlohmann::json j;
  j["r"] = r;
  j["n"] = n;
  j["tau"] = tau == 0.0 ? nlohmann::json("auto") : nlohmann::json(tau);
  j["rho"] = rho == 0.0 ? nlohmann::json("auto") : nlohmann::json(rho);
  j["K_use"] = K_use;
  j["ell"] = ell;
  j["lattice"] = {{"padding", padding},
                  {"ball_radius", ball_radius == 0.0 ? nlohmann::json("auto") : nlohmann::json(ball_radius)}};
  j["delta"] = delta;
  j["tau_max"] = tau_max == 0.0 ? nlohmann::json("auto") : nlohmann::json(tau_max);
  j["per_xi_tau"] = per_xi_tau;
  return j;
}

ReconstructionParams ReconstructionParams::from_json(const nlohmann::json& j) {
  auto auto_or = [](const nlohmann::json& v, const char* what) {
    if (v.is_string()) {
      if (v.get<std::string>() != "auto") throw ValidationError(std::string("reconstruction params: bad ") + what);
      return 0.0;
    }
    if (!v.is_number()) throw ValidationError(std::string("reconstruction params: bad ") + what);
    const double x = v.get<double>();
    if (!(x > 0.0)) throw ValidationError(std::string("reconstruction params: ") + what + " must be positive");
    return x;
  };
  ReconstructionParams p;
  try {
    if (j.contains("r")) p.r = j.at("r").get<double>();
    if (j.contains("n")) p.n = j.at("n").get<int>();
    if (j.contains("tau")) p.tau = auto_or(j.at("tau"), "tau");
    if (j.contains("rho")) p.rho = auto_or(j.at("rho"), "rho");
    if (j.contains("K_use")) p.K_use = j.at("K_use").get<int>();
    if (j.contains("ell")) p.ell = j.at("ell").get<int>();
    if (j.contains("lattice")) {
      const auto& l = j.at("lattice");
      if (l.contains("padding")) p.padding = l.at("padding").get<double>();
      if (l.contains("ball_radius")) p.ball_radius = auto_or(l.at("ball_radius"), "ball_radius");
    }
    if (j.contains("delta")) p.delta = j.at("delta").get<double>();
    if (j.contains("tau_max")) p.tau_max = auto_or(j.at("tau_max"), "tau_max");
    if (j.contains("per_xi_tau")) p.per_xi_tau = j.at("per_xi_tau").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("reconstruction params: ") + e.what());
  }
  return p;
}

double dataset_tau_star(const SpectralDataset& dsA, const SpectralDataset& dsB) {
  auto one = [](const SpectralDataset& ds) {
    const double ls = ds.meta.value("lambda_star", 0.0);
    return 1.0 + std::sqrt(std::max(0.0, 2.0 - ls));
  };
  return std::max(one(dsA), one(dsB));
}

double data_tau_max(const SpectralDataset& ds, int K_use) {
  const int k = resolve_k(ds, K_use);
  return kTauFraction * std::sqrt(std::max(0.0, ds.lambdas[k - 1]) + 1.0);
}

namespace {

const Eigen::VectorXd& shared_alpha(const SpectralDataset& dsA, const SpectralDataset& dsB, const char* what) {
  if (dsA.alpha.size() != dsA.grid->boundary_count())
    throw ValidationError(std::string(what) + ": dataset carries no Robin coefficient");
  if (dsB.alpha.size() != dsA.alpha.size() || (dsB.alpha - dsA.alpha).cwiseAbs().maxCoeff() > 0.0)
    throw ValidationError(std::string(what) + ": datasets use different Robin coefficients");
  return dsA.alpha;
}

FourierEstimate sample_at(const SpectralDataset& dsA, const SpectralDataset& dsB, const Point& xi, double tau,
                          double tau_star, int K_use, int ell, double beta) {
  const Grid& g = *dsA.grid;
  const Point x0 = g.center();
  const auto probe = make_probe(dsA.grid, shared_alpha(dsA, dsB, "fourier_sample"), xi, tau, tau_star, x0, false);
  const auto terms = scattering_series(dsA, dsB, probe, K_use, ell);
  FourierEstimate out;
  out.xi = xi;
  out.tau = tau;
  out.U = terms.U;
  out.V = terms.V;
  out.R = terms.R;
  out.tail = terms.tail;
  out.value = (terms.U + terms.V) * std::exp(cplx(0.0, -dot(xi, x0)));
  out.remainder_budget = std::pow(tau, -1.0 + 2.0 * beta);
  out.shift = length(xi) / tau;
  return out;
}

ReconstructionParams resolved(const SpectralDataset& dsA, const ReconstructionParams& params) {
  ReconstructionParams p = params;
  if (p.n == 0) p.n = dsA.grid->dim();
  p.validate(dsA.grid->dim());
  p.K_use = resolve_k(dsA, p.K_use);
  if (p.rho == 0.0) p.rho = p.default_rho();
  return p;
}

double sample_tau(const ReconstructionParams& p, double tau, const Point& xi) {
  if (!p.per_xi_tau) return tau;
  return std::max(tau, 2.0 * length(xi));
}

}  // namespace

FourierEstimate fourier_sample(const SpectralDataset& dsA, const SpectralDataset& dsB, const Point& xi,
                               const ReconstructionParams& params) {
  const auto p = resolved(dsA, params);
  const double tau_star = dataset_tau_star(dsA, dsB);
  double tau = p.tau;
  if (tau == 0.0) {
    const double tmax = p.tau_max > 0.0 ? p.tau_max : data_tau_max(dsA, p.K_use);
    tau = choose_tau(p.delta, p.n, p.beta(), tau_star, std::max(tmax, tau_star));
  }
  return sample_at(dsA, dsB, xi, sample_tau(p, tau, xi), tau_star, p.K_use, p.ell, p.beta());
}

Reconstruction reconstruct(const SpectralDataset& dsA, const SpectralDataset& dsB, const ReconstructionParams& params) {
  const auto p = resolved(dsA, params);
  check_pair(dsA, dsB, p.K_use, "reconstruct");
  shared_alpha(dsA, dsB, "reconstruct");
  const double tau_star = dataset_tau_star(dsA, dsB);
  const double tmax = std::max(tau_star, p.tau_max > 0.0 ? p.tau_max : data_tau_max(dsA, p.K_use));
  const double tau = p.tau > 0.0 ? p.tau : choose_tau(p.delta, p.n, p.beta(), tau_star, tmax);
  if (tau < tau_star) throw ValidationError("reconstruct: τ is below τ*");
  const double rho_radius = std::pow(tau, p.rho);
  const double radius = p.ball_radius > 0.0 ? p.ball_radius : std::max(rho_radius, auto_ball_radius(tau));

  Reconstruction rec;
  rec.tau = tau;
  rec.radius = radius;
  rec.samples = fourier_transform(ScalarField(dsA.grid), p.padding);
  FourierField& ff = rec.samples;
  ff.samples.setZero();
  std::vector<Index> picked;
  for (Index idx = 0; idx < ff.size(); ++idx)
    if (ff.mirror(idx) >= idx && ff.xi_norm(idx) < radius) picked.push_back(idx);
  std::vector<FourierEstimate> est(picked.size());
  parallel_for(static_cast<Index>(picked.size()), [&](Index j) {
    const Point xi = ff.xi(picked[static_cast<size_t>(j)]);
    est[static_cast<size_t>(j)] = sample_at(dsA, dsB, xi, sample_tau(p, tau, xi), tau_star, p.K_use, p.ell, p.beta());
  });
  double max_u = 0.0, max_v = 0.0, max_r = 0.0, max_tail = 0.0;
  for (size_t j = 0; j < picked.size(); ++j) {
    const Index idx = picked[j];
    const Index m = ff.mirror(idx);
    const auto& e = est[j];
    if (m == idx) {
      ff.samples[idx] = e.value.real();
      rec.sample_count += 1;
    } else {
      ff.samples[idx] = e.value;
      ff.samples[m] = std::conj(e.value);
      rec.sample_count += 2;
    }
    max_u = std::max(max_u, std::abs(e.U));
    max_v = std::max(max_v, std::abs(e.V));
    max_r = std::max(max_r, std::abs(e.R));
    max_tail = std::max(max_tail, e.tail);
  }
  if (rec.sample_count < 10)
    throw ValidationError("reconstruct: the frequency ball holds " + std::to_string(rec.sample_count) +
                          " lattice points, at least 10 are needed");
  ScalarField b = inverse_fourier_transform(ff, dsA.grid);
  rec.field = ScalarField(dsA.grid, (-b.values.real()).cast<cplx>());

  auto& d = rec.diagnostics;
  d["params"] = p.to_json();
  d["tau"] = tau;
  d["tau_star"] = tau_star;
  d["tau_max"] = tmax;
  d["rho"] = p.rho;
  d["beta"] = p.beta();
  d["ball_radius"] = radius;
  d["rho_ball_radius"] = rho_radius;
  d["samples"] = rec.sample_count;
  d["remainder_budget"] = std::pow(tau, -1.0 + 2.0 * p.beta());
  d["max_shift"] = radius / tau;
  d["max_abs_U"] = max_u;
  d["max_abs_V"] = max_v;
  d["max_abs_R"] = max_r;
  d["max_tail"] = max_tail;
  d["hminus1_norm"] = hminus1_norm(rec.field, p.padding);
  d["l2_norm"] = lp_norm(rec.field, 2.0);
  return rec;
}

double relative_hminus1_error(const ScalarField& rec, const ScalarField& truth, double padding) {
  require_same_grid(*rec.grid, *truth.grid, "relative_hminus1_error");
  const double t = hminus1_norm(truth, padding);
  const double e = hminus1_norm(ScalarField(rec.grid, rec.values - truth.values), padding);
  if (t == 0.0) return e == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return e / t;
}

double delta_zero(int n, double beta) { return std::sqrt(2.0 * (1.0 - 2.0 * beta) / (3.0 * n + 4.0)); }

double choose_tau(double delta, int n, double beta, double tau_star, double tau_max) {
  if (!(delta >= 0.0)) throw ValidationError("choose_tau: δ must be nonnegative");
  if (tau_max < tau_star) tau_max = tau_star;
  if (delta >= delta_zero(n, beta)) return tau_star;
  if (delta == 0.0) return tau_max;
  const double a = 2.0 * (1.0 - 2.0 * beta) / (n + 2.0);
  const double b = (3.0 * n + 4.0) / (n + 2.0);
  const double t = std::pow(a / b, 1.0 / (a + b)) * std::pow(delta, -2.0 / (a + b));
  return std::clamp(t, tau_star, tau_max);
}

}  // namespace bllab
