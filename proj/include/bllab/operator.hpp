#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "bllab/fields.hpp"
#include "bllab/linsolve.hpp"

namespace bllab {

struct OperatorConstants {
  double trace_norm = 0.0;   // 𝔫
  double c = 0.0;            // 𝔠 = max(0, -min α)
  double kappa = 0.5;        // (1 - 𝔠𝔫²)/2
  double lambda_star = 0.0;  // coercivity shift λ*
  double tau_star = 1.0;     // 1 + sqrt(max(0, 2 - λ*))
  double lambda_plus = 0.0;  // λ₊ = max(λ*, (1 + C_κ)/(1 - κ/4))
  double aleph_used = 0.0;
  double q_norm = 0.0;       // ‖q‖_{L^{n/2}} (L¹ when n/2 < 1)
  double c_kappa = 0.0;      // fitted C_ε at ε = κ
  std::vector<std::pair<double, double>> c_eps;  // (ε, fitted C_ε)
  bool near_constraint = false;
};

struct AssembleOptions {
  int probe_count = 200;
  std::uint64_t seed = 20240611;
  std::vector<double> eps_grid{0.5, 0.1, 0.05};
};

/// Discrete Robin Schrödinger form
///   𝔞(u, v) = ∫ ∇u·∇v̄ + ∫ q u v̄ + ∫_Γ α u v̄
/// on nodal values. The matrix is M = S + diag(w q) + diag(R), where S is the
/// edge stiffness and R collects the face-weighted Robin coefficient per node.
class RobinOperator {
 public:
  static RobinOperator assemble(GridPtr grid, const ScalarField& q, const BoundaryFunction& alpha, double aleph,
                                const AssembleOptions& opts = {});

  const GridPtr& grid() const { return grid_; }
  const Eigen::VectorXd& q() const { return q_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  double aleph() const { return aleph_; }
  const OperatorConstants& constants() const { return constants_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::string& hash() const { return hash_; }

  const SparseReal& matrix() const { return m_; }
  const Eigen::VectorXd& mass() const { return grid_->weights(); }
  const Eigen::VectorXd& robin_diagonal() const { return robin_; }

  /// M + s·B (real shift) and M - λ·B (complex parameter).
  SparseReal shifted(double s) const;
  SparseComplex shifted(cplx lambda) const;
  /// Factorization of M + (λ* + 1)·B, computed once at assembly.
  const SpdFactor& anchor_factor() const { return *anchor_; }
  double anchor_shift() const { return constants_.lambda_star + 1.0; }

  /// Nodal load Σ_faces w_e g_e of a boundary function (the discrete ∫_Γ g v̄).
  Eigen::VectorXcd boundary_load(const Eigen::VectorXcd& g) const;

 private:
  GridPtr grid_;
  Eigen::VectorXd q_;
  Eigen::VectorXd alpha_;
  Eigen::VectorXd robin_;
  double aleph_ = 0.0;
  SparseReal m_;
  OperatorConstants constants_;
  std::vector<std::string> warnings_;
  std::string hash_;
  std::shared_ptr<SpdFactor> anchor_;
};

cplx form_apply(const RobinOperator& op, const ScalarField& u, const ScalarField& v);
cplx boundary_form(const RobinOperator& op, const ScalarField& u, const ScalarField& v);

/// Second-order one-sided difference along the outward normal at every boundary entry.
Eigen::VectorXcd normal_derivative_values(const Grid& grid, const Eigen::VectorXcd& u);
BoundaryFunction normal_derivative(const RobinOperator& op, const ScalarField& u);
/// Pointwise Laplacian: centered inside, second-order one-sided at the faces.
Eigen::VectorXcd pointwise_laplacian(const Grid& grid, const Eigen::VectorXcd& u);
/// |⟨Δu, v⟩ + (∇u, ∇v) − ⟨∂_ν u, v|_Γ⟩|.
double green_defect(const RobinOperator& op, const ScalarField& u, const ScalarField& v);
double green_defect(const Grid& grid, const ScalarField& u, const ScalarField& v);

/// Deterministic bank of real test fields: constants, cosines, rough noise, boundary layers.
std::vector<Eigen::VectorXd> probe_bank(const Grid& grid, int count, std::uint64_t seed);

/// Uniform double in [0, 1) from a 64-bit generator, independent of the standard library's distributions.
double unit_uniform(std::uint64_t bits);

// Builtin potentials.
ScalarField zero_potential(GridPtr grid);
ScalarField bump_potential(GridPtr grid, Point center, double radius, double amplitude);
ScalarField singular_potential(GridPtr grid, Point center, double exponent, double cap);

/// Parsed operator description.
struct OperatorSpec {
  GridPtr grid;
  ScalarField q;
  BoundaryFunction alpha;
  double aleph = 1.0;
  double singular_cap = 0.0;  // reported cap when q is the singular builtin
  nlohmann::json source;
};

GridPtr grid_from_json(const nlohmann::json& j);
nlohmann::json grid_to_json(const Grid& g);
/// Relative field paths are resolved against `base_dir`.
OperatorSpec parse_operator_spec(const nlohmann::json& j, const std::string& base_dir = ".");
OperatorSpec load_operator_spec(const std::string& path);
RobinOperator assemble(const OperatorSpec& spec, const AssembleOptions& opts = {});

/// SHA-256 of the grid description and raw q, α, ℵ bytes, as hex.
std::string operator_hash(const Grid& grid, const Eigen::VectorXd& q, const Eigen::VectorXd& alpha, double aleph);
std::string sha256_hex(const void* data, std::size_t size);

}  // namespace bllab
