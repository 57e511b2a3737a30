#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bllab/spectral.hpp"

namespace bllab {

/// Factorization of M − λB for one complex spectral parameter.
/// Construction fails with ValidationError when λ lies within eps_rel·(1+|λ|) of the discrete spectrum.
class ShiftedSolver {
 public:
  ShiftedSolver(const RobinOperator& op, cplx lambda, double eps_rel = 1e-6);

  /// u with (M − λB)u = rhs.
  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const;
  /// u with (M − λ̄B)u = rhs, through the same factorization.
  Eigen::VectorXcd solve_conjugate(const Eigen::VectorXcd& rhs) const;
  cplx lambda() const { return lambda_; }
  /// Estimated distance from λ to the discrete spectrum (exact lower bound |Im λ| when that suffices).
  double distance() const { return distance_; }

 private:
  const RobinOperator* op_;
  cplx lambda_;
  double distance_ = 0.0;
  std::shared_ptr<ComplexFactor> factor_;
};

/// (A − λ)⁻¹f by a direct sparse solve of (M − λB)u = Bf.
ScalarField resolvent_apply(const RobinOperator& op, const ScalarField& f, cplx lambda);

struct BvpSolution {
  cplx lambda;
  BoundaryFunction g;
  ScalarField u;
  BoundaryFunction trace;
  std::string method;  // "direct" or "modal"
  int modes = 0;
  double robin_residual = 0.0;  // ‖∂_ν u + α u − g‖_{L²(Γ)} / ‖g‖_{L²(Γ)}
  double pde_residual = 0.0;    // ‖(−Δ + q − λ)u‖ over interior nodes / ‖u‖_H
};

/// Robin data g = ∂_ν G + αG|_Γ of a lift G.
BoundaryFunction robin_data(const RobinOperator& op, const ScalarField& lift);
/// Solution of (−Δ+q−λ)u = 0, ∂_ν u + αu = g with g taken from the lift G.
BvpSolution bvp_solve(const RobinOperator& op, const ScalarField& lift, cplx lambda);
/// Same, from boundary data directly: (M − λB)u = Σ_Γ w g.
BvpSolution bvp_solve_data(const RobinOperator& op, const BoundaryFunction& g, cplx lambda);
BvpSolution bvp_solve_data(const RobinOperator& op, const ShiftedSolver& solver, const BoundaryFunction& g);

/// Data inner products (g, ψ_k)_{L²(Γ)}, k < K_use.
Eigen::VectorXcd trace_coefficients(const SpectralDataset& ds, const BoundaryFunction& g, int K_use);

struct ModalSolution {
  std::optional<ScalarField> u;  // present when the dataset carries interior fields
  BoundaryFunction trace;
  int K_use = 0;
  double tail = 0.0;  // extrapolated Σ_{k>K_use} |(g,ψ_k)| / |λ_k − λ|
};

/// Truncated eigen-expansion Σ (g,ψ_k)/(λ_k − λ) φ_k.
ModalSolution modal_solution(const SpectralDataset& ds, const BoundaryFunction& g, cplx lambda, int K_use,
                             bool interior = true);

/// (λ − μ) Σ_{k<K_use} (g,ψ_k)ψ_k / ((λ_k − λ)(λ_k − μ)).
BoundaryFunction trace_increment(const SpectralDataset& ds, const BoundaryFunction& g, cplx lambda, cplx mu,
                                 int K_use);

/// Extrapolated Σ_{k>K_use}^{N} ‖g‖‖ψ_k‖/|λ_k − λ| from power-law fits of ‖ψ_k‖ and λ_k.
double modal_tail(const SpectralDataset& ds, double g_norm, cplx lambda, int K_use);

struct BoundRecord {
  std::string name;
  std::vector<double> params;        // τ or λ values
  std::vector<double> worst_ratios;  // per parameter
  double worst_ratio = 0.0;
  double fitted_constant = 0.0;
  double slope = 0.0;  // NaN when not applicable
  double expected_slope = 0.0;
  bool pass = true;
  std::string note;
};

struct BoundRow {
  std::string estimate;
  double param = 0.0;
  int probe = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
};

struct BoundSuiteReport {
  std::vector<BoundRecord> records;
  std::vector<BoundRow> rows;

  const BoundRecord& record(const std::string& name) const;
  nlohmann::json to_json() const;
  void write_csv(const std::string& path) const;
};

struct BoundSuiteOptions {
  std::vector<double> taus{1, 2, 5, 10, 20};
  int probe_count = 100;
  std::uint64_t seed = 4242;
  std::vector<double> norm_taus{2, 4, 8, 16, 32};
  int power_iterations = 60;
  std::vector<double> limit_lambdas{-1e2, -1e3, -1e4};
  int boundary_probe_count = 12;
  /// Second operator for the potential-dimming check; a generated reference is used when null.
  const RobinOperator* reference = nullptr;
  bool operator_norms = true;
  bool limits = true;
};

/// Evaluates both sides of every resolvent estimate on a deterministic probe bank.
BoundSuiteReport verify_resolvent_bounds(const RobinOperator& op, const SpectralDataset& ds,
                                         const BoundSuiteOptions& opts = {});

/// Operator norm of (A − λ)⁻¹ on the Hilbert scale: σ = 0 is H → H, i.e. max 1/|λ_k − λ|;
/// σ = 1 is V* → V with V normed by the anchor form 𝔞 + s, i.e. max (λ_k + s)/|λ_k − λ|.
/// Power iteration with the factorization of M − λB.
double resolvent_scale_norm(const RobinOperator& op, const ShiftedSolver& solver, double sigma, int iterations,
                            std::uint64_t seed);

}  // namespace bllab
