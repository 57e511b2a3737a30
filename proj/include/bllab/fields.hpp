#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "bllab/grid.hpp"

namespace bllab {

enum class NormKind { Lp, L2Boundary, H1, Hminus1 };

/// ∫_Ω |f|^p by trapezoidal quadrature, p = inf gives the max norm.
double lp_norm(const ScalarField& f, double p);
double boundary_lp_norm(const BoundaryFunction& g, double p);
double l2_boundary_norm(const BoundaryFunction& g);
/// ‖∇u‖² from the edge difference quotients (same form as the stiffness matrix).
double gradient_energy(const Grid& grid, const Eigen::VectorXcd& u);
double h1_norm(const ScalarField& u);
double hminus1_norm(const ScalarField& f, double padding = 2.0);

/// Dispatcher; `p` only matters for NormKind::Lp.
double norm(const ScalarField& f, NormKind kind, double p = 2.0);
double norm(const BoundaryFunction& g, NormKind kind);

cplx inner(const ScalarField& u, const ScalarField& v);            // ∫ u v̄
cplx inner(const BoundaryFunction& g, const BoundaryFunction& h);  // ∫_Γ g h̄

/// Samples of f̂(ξ) = ∫ f e^{-iξ·x} dx on the dual lattice of a padded box.
struct FourierField {
  int n = 0;
  std::vector<int> modes;          // padded lattice size per axis
  std::vector<double> dxi;         // lattice step in ξ per axis
  std::vector<double> spacing;     // originating grid spacing
  std::vector<int> source_counts;  // originating grid nodes per axis
  Eigen::VectorXcd samples;        // axis 0 fastest

  Index size() const { return samples.size(); }
  /// Signed mode numbers of lattice entry `idx`, in (-modes/2, modes/2].
  std::array<int, 3> mode(Index idx) const;
  Point xi(Index idx) const;
  double xi_norm(Index idx) const;
  /// Entry holding the mode -m.
  Index mirror(Index idx) const;
  double cell_volume() const;  // Δξ_0 ... Δξ_{n-1}
};

FourierField fourier_transform(const ScalarField& f, double padding_factor = 2.0);
/// f(x) ≈ (2π)^{-n} Σ f̂(ξ) e^{iξ·x} Δξ, evaluated on the grid nodes.
ScalarField inverse_fourier_transform(const FourierField& ff, GridPtr grid);
/// Replace samples by (f̂(ξ) + conj f̂(−ξ))/2.
void hermitian_symmetrize(FourierField& ff);
double hminus1_norm(const FourierField& ff);
double l2_norm(const FourierField& ff);

// Persistence: one line of JSON header, then little-endian complex<double> values.
void write_field(const std::string& path, const ScalarField& f);
void write_field(const std::string& path, const BoundaryFunction& g);
ScalarField read_scalar_field(const std::string& path);
BoundaryFunction read_boundary_function(const std::string& path);

}  // namespace bllab
