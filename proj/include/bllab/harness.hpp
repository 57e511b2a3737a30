#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "bllab/cgo.hpp"

namespace bllab {

/// Ψ_ϑ(t): 0 at 0, |ln t|^{−ϑ} on (0, 1/e), t on [1/e, ∞).
double psi(double theta, double t);

struct DeltaReport {
  double delta = 0.0;
  double trace_part = 0.0;  // ‖(ψ_k − ψ̃_k)‖_{ℓ²(L²(Γ))} over the available modes
  double eigen_part = 0.0;  // ‖(λ̃_k − λ_k)‖_{ℓ∞}
  int K = 0;
  std::string tail_note;

  nlohmann::json to_json() const;
};

/// δ = ‖(ψ_k − ψ̃_k)‖_{ℓ²(L²(Γ))} + ‖(λ̃_k − λ_k)‖_{ℓ∞}.
DeltaReport delta_metric(const SpectralDataset& dsA, const SpectralDataset& dsB);

struct PerturbationModel {
  double eigen_jitter = 1.0;  // jitter half-width per unit level
  double trace_noise = 1.0;   // ℓ²(L²(Γ)) noise size per unit level
  std::uint64_t seed = 11;
  double aleph = 0.0;         // jitter clamp; 0 disables
};

/// Uniform eigenvalue jitter in [−η, η] (η = level·eigen_jitter, clamped at ℵ) and smooth trace
/// noise from the 10 lowest cosine modes of every face, scaled so the whole ℓ²(L²(Γ)) size is
/// level·trace_noise. The result is marked aligned to `ds`.
SpectralDataset perturb_dataset(const SpectralDataset& ds, double level, const PerturbationModel& model,
                                std::vector<std::string>* warnings = nullptr);

/// eig with an optional on-disk cache in $BL_LAB_CACHE keyed by operator hash and options.
SpectralDataset forward_cached(const RobinOperator& op, int K, bool keep_interior, const EigOptions& opts = {});

struct ExperimentConfig {
  OperatorSpec truth;
  OperatorSpec reference;
  int K = 300;
  EigOptions eig;
  std::vector<double> levels{1e-4, 1e-3, 1e-2, 1e-1};
  PerturbationModel perturbation;
  ReconstructionParams reconstruction;
  std::string records_csv = "stability.csv";
  std::string report_json = "stability.json";

  /// Relative paths inside the document resolve against `base_dir`; the reference
  /// defaults to zero potential with the truth's grid, α and ℵ.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
  static ExperimentConfig load(const std::string& path);
};

struct StabilityRecord {
  double level = 0.0;
  double delta = 0.0;
  double trace_part = 0.0;
  double eigen_part = 0.0;
  double error = 0.0;  // relative H⁻¹ error of the reconstruction
  double tau = 0.0;
  double radius = 0.0;
  std::uint64_t seed = 0;
};

struct StabilityResult {
  std::vector<StabilityRecord> records;
  double exponent = 0.0;     // 2(1 − 2β)/(3(n + 2))
  double slope = 0.0;        // least squares of log error against log δ (δ > 0), NaN with fewer than 2 levels
  double c_fit = 0.0;        // max error/δ^e
  double spread = 0.0;       // max/min of error/δ^e
  bool nondecreasing = true; // within 10% slack
  bool consistent = true;    // spread ≤ 10
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  void write_csv(const std::string& path) const;
};

/// Perturb the truth data per level, align to the clean data, measure δ, reconstruct against the
/// clean reference with τ from choose_tau(δ), and fit the error against δ. If a level fails the
/// finished records are written to `partial_csv` (when given) before the error propagates.
StabilityResult stability_sweep(const ExperimentConfig& cfg, const std::string& partial_csv = "");
/// Same, from datasets already in memory.
StabilityResult stability_sweep(const SpectralDataset& truth_data, const SpectralDataset& reference_data,
                                const ScalarField& truth_difference, const std::vector<double>& levels,
                                const PerturbationModel& model, const ReconstructionParams& params,
                                const std::string& partial_csv = "");

}  // namespace bllab
