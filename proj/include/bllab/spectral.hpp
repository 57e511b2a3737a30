#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bllab/operator.hpp"

namespace bllab {

/// Boundary spectral data (λ_k, ψ_k = φ_k|_Γ), k = 1..K, with optional interior eigenfields.
/// Columns of `psis` are traces in face order; columns of `phis` are B-orthonormal nodal vectors.
struct SpectralDataset {
  GridPtr grid;
  Eigen::VectorXd lambdas;
  Eigen::MatrixXd psis;
  Eigen::MatrixXd phis;  // empty unless interior fields were kept
  Eigen::VectorXd alpha;  // Robin coefficient in face order (shared by data and reference)
  std::string operator_hash;
  std::string aligned_to;
  nlohmann::json meta = nlohmann::json::object();

  int K() const { return static_cast<int>(lambdas.size()); }
  bool has_phis() const { return phis.cols() > 0; }
  BoundaryFunction psi(int k) const;
};

struct EigOptions {
  int block_size = 12;
  double tol = 1e-10;  // estimated ‖(M − λB)φ‖_{B⁻¹} for unit ‖φ‖_B
  std::uint64_t seed = 7;
  int max_basis = 0;   // 0: automatic
};

/// K lowest eigenpairs of M φ = λ B φ by shift-invert block Lanczos anchored at −λ* − 1.
SpectralDataset eig(const RobinOperator& op, int K, bool keep_interior, const EigOptions& opts = {});

struct DatasetChecks {
  double gram_error = 0.0;        // max |ΦᵀBΦ − I|
  double eigen_residual = 0.0;    // max ‖(M − λB)φ‖_{B⁻¹} / ‖φ‖_B
  double robin_residual = 0.0;    // max ‖∂_ν φ + αψ‖_{L²(Γ)} / (1 + |λ|)
  bool nondecreasing = true;
  bool above_lower_bound = true;  // λ_k > −λ*
};
DatasetChecks check_dataset(const SpectralDataset& ds, const RobinOperator& op);

struct WeylFit {
  double slope = 0.0;
  double slope_stderr = 0.0;
  double C = 1.0;
  int k_min = 0;
  int k_max = 0;
  double residual = 0.0;  // RMS of the log-log fit
};

/// Least-squares slope of log(1+|λ_k|) against log k over [k_min, k_max] (default [K/3, K]),
/// and the tightest C ≥ 1 with C⁻¹k^{2/n} ≤ 1+|λ_k| ≤ Ck^{2/n} on the same range.
WeylFit weyl_fit(const SpectralDataset& ds, int n, int k_min = 0, int k_max = 0);
/// Tightest Weyl constant on [k_min, k_max] (1-based).
double weyl_constant(const Eigen::VectorXd& lambdas, int n, int k_min, int k_max);

/// Discrete H² norm from one-sided/centered second differences.
double h2_norm(const Grid& grid, const Eigen::VectorXd& u);
/// ‖φ_k‖_{H²} / (1 + |λ_k|) for every mode.
std::vector<double> h2_diagnostic(const SpectralDataset& ds, const RobinOperator& op);

/// Rotate trace blocks of near-degenerate clusters (Procrustes) and fix signs of isolated
/// modes to best match `ref` in L²(Γ).
SpectralDataset align(const SpectralDataset& ds, const SpectralDataset& ref, double gap_tol = 1e-6);

void write_dataset(const std::string& path, const SpectralDataset& ds);
SpectralDataset read_dataset(const std::string& path);

}  // namespace bllab
