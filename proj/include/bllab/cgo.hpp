#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "bllab/fields.hpp"
#include "bllab/spectral.hpp"

namespace bllab {

struct ProbeDirections {
  Point omega{0, 0, 0};
  Point theta{0, 0, 0};
  Point eta{0, 0, 0};
};

/// ω, θ = (1 − |ξ|²/4τ²)^{1/2} η ∓ ξ/(2τ), with η the coordinate axis least aligned with ξ,
/// made orthogonal to ξ. Needs τ > |ξ|/2.
ProbeDirections directions(const Point& xi, double tau, int n = 3);

/// Complex geometric optics probe at λ_τ = (τ + i)².
struct CgoProbe {
  double tau = 1.0;
  cplx sqrt_lambda;  // τ + i
  cplx lambda;       // (τ + i)²
  Point xi{0, 0, 0};
  Point omega{0, 0, 0};
  Point theta{0, 0, 0};
  Point origin{0, 0, 0};  // exponentials use x − origin
  ScalarField e_omega;      // e^{i√λ ω·x}
  ScalarField e_minus_theta;  // e^{−i√λ θ·x}
  BoundaryFunction g;       // (i√λ ω·ν + α) e^{i√λ ω·x}
  BoundaryFunction h_bar;   // (−i√λ θ·ν + α) e^{−i√λ θ·x}
  double gh_norm = 0.0;     // ‖g‖ ‖h‖ / τ²

  BoundaryFunction h() const;
};

/// Throws ValidationError unless τ > max(|ξ|/2, τ*).
CgoProbe make_probe(GridPtr grid, const Eigen::VectorXd& alpha, const Point& xi, double tau, double tau_star = 1.0,
                    const Point& origin = {0, 0, 0}, bool fields = true);

struct SeriesTerms {
  cplx U;
  cplx V;
  cplx R;
  double tail = 0.0;  // Weyl-extrapolated size of the dropped modes
};

/// 𝒰 = Σ (d_k − d̃_k)/(λ_k − λ) and 𝒱 = Σ_{k≥ℓ} (λ̃_k − λ_k) d̃_k/((λ_k − λ)(λ̃_k − λ)), with
/// d_k = (g,ψ_k)(ψ_k,h); R collects the k < ℓ terms of the same pairing built from d_k.
/// `dsA` carries q, `dsB` the reference q̃.
SeriesTerms scattering_series(const SpectralDataset& dsA, const SpectralDataset& dsB, const CgoProbe& probe,
                              int K_use, int ell = 1);

struct ReconstructionParams {
  double r = 2.0;
  int n = 0;            // 0: from the grid
  double tau = 0.0;     // 0: choose_tau(delta)
  double rho = 0.0;     // 0: (1 − 2β)/(n + 2)
  int K_use = 0;        // 0: all modes
  int ell = 1;
  double padding = 2.0;
  double ball_radius = 0.0;  // 0: max(τ^ϱ, 1.8τ)
  double delta = 0.0;        // data discrepancy for the τ rule
  double tau_max = 0.0;      // 0: from the largest eigenvalue used
  bool per_xi_tau = false;   // experimental: τ raised per sample to keep |ξ|/τ fixed

  double beta() const;
  double default_rho() const;
  void validate(int grid_dim) const;
  nlohmann::json to_json() const;
  static ReconstructionParams from_json(const nlohmann::json& j);
};

struct FourierEstimate {
  Point xi{0, 0, 0};
  cplx value;  // estimate of b̂((1 + i/τ)ξ), b = (q̃ − q)χ_Ω
  double tau = 0.0;
  cplx U, V, R;
  double tail = 0.0;
  double remainder_budget = 0.0;  // τ^{−1+2β}
  double shift = 0.0;             // |ξ|/τ
};

/// τ* shared by both datasets, from their recorded λ*.
double dataset_tau_star(const SpectralDataset& dsA, const SpectralDataset& dsB);
/// Largest usable τ: 0.6 (1 + λ_{K_use})^{1/2}, so that λ_τ sits well inside the computed spectrum.
double data_tau_max(const SpectralDataset& ds, int K_use);

/// One Fourier sample; exponentials are centred at the box centre.
FourierEstimate fourier_sample(const SpectralDataset& dsA, const SpectralDataset& dsB, const Point& xi,
                               const ReconstructionParams& params);

struct Reconstruction {
  ScalarField field;  // q − q̃
  FourierField samples;
  double tau = 0.0;
  double radius = 0.0;
  int sample_count = 0;
  nlohmann::json diagnostics = nlohmann::json::object();
};

Reconstruction reconstruct(const SpectralDataset& dsA, const SpectralDataset& dsB, const ReconstructionParams& params);

/// ‖rec − truth‖_{H⁻¹} / ‖truth‖_{H⁻¹}.
double relative_hminus1_error(const ScalarField& rec, const ScalarField& truth, double padding = 2.0);

/// δ₀ = (2(1 − 2β)/(3n + 4))^{1/2}.
double delta_zero(int n, double beta);
/// Minimizer of τ^{−2(1−2β)/(n+2)} + τ^{(3n+4)/(n+2)} δ² on [τ*, τ_max].
double choose_tau(double delta, int n, double beta, double tau_star, double tau_max);

}  // namespace bllab
