#include "bllab/harness.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>

#include "bllab/errors.hpp"
#include "bllab/parallel.hpp"

namespace bllab {

namespace fs = std::filesystem;

double psi(double theta, double t) {
  if (!(theta > 0.0)) throw ValidationError("psi: ϑ must be positive");
  if (!(t >= 0.0)) throw ValidationError("psi: t must be nonnegative");
  if (t == 0.0) return 0.0;
  if (t < std::exp(-1.0)) return std::pow(std::abs(std::log(t)), -theta);
  return t;
}

nlohmann::json DeltaReport::to_json() const {
  return {{"delta", delta}, {"trace_part", trace_part}, {"eigen_part", eigen_part}, {"K", K}, {"tail_note", tail_note}};
}

DeltaReport delta_metric(const SpectralDataset& dsA, const SpectralDataset& dsB) {
  if (dsA.K() != dsB.K()) throw ValidationError("delta_metric: datasets hold different numbers of modes");
  require_same_grid(*dsA.grid, *dsB.grid, "delta_metric");
  const bool aligned = dsA.operator_hash == dsB.operator_hash || dsA.aligned_to == dsB.operator_hash ||
                       dsB.aligned_to == dsA.operator_hash;
  if (!aligned) throw ValidationError("delta_metric: datasets are not aligned");
  DeltaReport r;
  r.K = dsA.K();
  const Eigen::VectorXd& w = dsA.grid->boundary_weights();
  r.trace_part = std::sqrt((dsA.psis - dsB.psis).cwiseAbs2().transpose().cwiseProduct(w.transpose().replicate(r.K, 1)).sum());
  r.eigen_part = r.K > 0 ? (dsA.lambdas - dsB.lambdas).cwiseAbs().maxCoeff() : 0.0;
  r.delta = r.trace_part + r.eigen_part;
  std::ostringstream s;
  s << "sums over the " << r.K << " available modes; trace differences beyond k = " << r.K
    << " are not in the data and are not extrapolated";
  r.tail_note = s.str();
  return r;
}

namespace {

// First 10 mode pairs (a, b) ordered by a + b, then by b.
std::vector<std::pair<int, int>> face_modes(int face_dim) {
  std::vector<std::pair<int, int>> out;
  if (face_dim == 0) return {{0, 0}};
  for (int s = 0; out.size() < 10; ++s)
    for (int b = 0; b <= s && out.size() < 10; ++b) {
      if (face_dim == 1 && b > 0) break;
      out.emplace_back(s - b, b);
    }
  return out;
}

Eigen::VectorXd smooth_boundary_noise(const Grid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::VectorXd out(g.boundary_count());
  const int n = g.dim();
  const auto modes = face_modes(n - 1);
  for (size_t f = 0; f < g.faces().size(); ++f) {
    const Face& face = g.faces()[f];
    std::vector<int> axes;
    for (int d = 0; d < n; ++d)
      if (d != face.axis) axes.push_back(d);
    std::vector<double> c(modes.size());
    for (auto& v : c) v = nd(rng);
    const Index off = g.face_offset(static_cast<int>(f));
    for (size_t i = 0; i < face.nodes.size(); ++i) {
      const Point x = g.coord(face.nodes[i]);
      double v = 0.0;
      for (size_t m = 0; m < modes.size(); ++m) {
        double term = c[m];
        const int a = modes[m].first, b = modes[m].second;
        if (!axes.empty())
          term *= std::cos(M_PI * a * x[static_cast<size_t>(axes[0])] / g.side_lengths()[static_cast<size_t>(axes[0])]);
        if (axes.size() > 1)
          term *= std::cos(M_PI * b * x[static_cast<size_t>(axes[1])] / g.side_lengths()[static_cast<size_t>(axes[1])]);
        v += term;
      }
      out[off + static_cast<Index>(i)] = v;
    }
  }
  return out;
}

std::string full(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_atomically(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ValidationError("cannot open for writing: " + tmp);
    out << text;
    if (!out) throw ValidationError("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

std::string records_csv(const std::vector<StabilityRecord>& records) {
  std::ostringstream s;
  s << "level,delta,trace_part,eigen_part,error,tau,radius,seed\n";
  for (const auto& r : records)
    s << full(r.level) << ',' << full(r.delta) << ',' << full(r.trace_part) << ',' << full(r.eigen_part) << ','
      << full(r.error) << ',' << full(r.tau) << ',' << full(r.radius) << ',' << r.seed << '\n';
  return s.str();
}

std::string resolve_path(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).string();
}

}  // namespace

SpectralDataset perturb_dataset(const SpectralDataset& ds, double level, const PerturbationModel& model,
                                std::vector<std::string>* warnings) {
  if (!(level >= 0.0)) throw ValidationError("perturb_dataset: level must be nonnegative");
  SpectralDataset out = ds;
  out.aligned_to = ds.operator_hash;
  out.meta["perturbation"] = {{"level", level}, {"seed", model.seed}};
  if (level == 0.0 || ds.K() == 0) return out;
  std::mt19937_64 rng(model.seed);
  double eta = level * model.eigen_jitter;
  if (model.aleph > 0.0 && eta > model.aleph) {
    if (warnings) warnings->push_back("eigenvalue jitter clamped at aleph = " + full(model.aleph));
    eta = model.aleph;
  }
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  for (int k = 0; k < ds.K(); ++k) out.lambdas[k] += eta * jitter(rng);
  const Eigen::VectorXd& w = ds.grid->boundary_weights();
  const double per_mode = level * model.trace_noise / std::sqrt(static_cast<double>(ds.K()));
  for (int k = 0; k < ds.K(); ++k) {
    Eigen::VectorXd noise = smooth_boundary_noise(*ds.grid, rng);
    const double nn = std::sqrt(noise.cwiseAbs2().dot(w));
    if (nn > 0.0) out.psis.col(k) += (per_mode / nn) * noise;
  }
  if (out.has_phis()) out.phis.resize(0, 0);
  return out;
}

SpectralDataset forward_cached(const RobinOperator& op, int K, bool keep_interior, const EigOptions& opts) {
  const char* dir = std::getenv("BL_LAB_CACHE");
  if (!dir || !*dir) return eig(op, K, keep_interior, opts);
  std::ostringstream key;
  key << op.hash() << ':' << K << ':' << keep_interior << ':' << opts.block_size << ':' << full(opts.tol) << ':'
      << opts.seed << ':' << opts.max_basis;
  const std::string k = key.str();
  const std::string name = "ds_" + sha256_hex(k.data(), k.size()).substr(0, 24) + ".bin";
  const fs::path path = fs::path(dir) / name;
  if (fs::exists(path)) {
    try {
      auto ds = read_dataset(path.string());
      if (ds.operator_hash == op.hash() && ds.K() == K && ds.has_phis() == keep_interior) return ds;
    } catch (const ValidationError&) {
    }
  }
  auto ds = eig(op, K, keep_interior, opts);
  fs::create_directories(dir);
  const std::string tmp = path.string() + ".tmp";
  write_dataset(tmp, ds);
  fs::rename(tmp, path);
  return ds;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::string& base_dir) {
  ExperimentConfig c;
  try {
    const int version = j.value("schema_version", 1);
    if (version != 1) throw ValidationError("experiment config: unsupported schema_version " + std::to_string(version));
    c.truth = parse_operator_spec(j.at("operator"), base_dir);
    if (j.contains("reference")) {
      c.reference = parse_operator_spec(j.at("reference"), base_dir);
      require_same_grid(*c.truth.grid, *c.reference.grid, "experiment config reference");
      c.reference.grid = c.truth.grid;
      c.reference.q.grid = c.truth.grid;
      c.reference.alpha.grid = c.truth.grid;
    } else {
      c.reference = c.truth;
      c.reference.q = zero_potential(c.truth.grid);
      c.reference.source = nlohmann::json{{"derived", "zero potential, truth grid and alpha"}};
    }
    c.K = j.value("K", c.K);
    if (j.contains("eig")) {
      const auto& e = j.at("eig");
      c.eig.seed = e.value("seed", c.eig.seed);
      c.eig.tol = e.value("tol", c.eig.tol);
      c.eig.block_size = e.value("block_size", c.eig.block_size);
    }
    if (j.contains("perturbation")) {
      const auto& p = j.at("perturbation");
      if (p.contains("levels")) c.levels = p.at("levels").get<std::vector<double>>();
      c.perturbation.eigen_jitter = p.value("eigen_jitter", c.perturbation.eigen_jitter);
      c.perturbation.trace_noise = p.value("trace_noise", c.perturbation.trace_noise);
      c.perturbation.seed = p.value("seed", c.perturbation.seed);
    }
    c.perturbation.aleph = c.truth.aleph;
    if (j.contains("reconstruction")) c.reconstruction = ReconstructionParams::from_json(j.at("reconstruction"));
    if (j.contains("outputs")) {
      const auto& o = j.at("outputs");
      c.records_csv = o.value("records_csv", c.records_csv);
      c.report_json = o.value("report_json", c.report_json);
    }
    c.records_csv = resolve_path(base_dir, c.records_csv);
    c.report_json = resolve_path(base_dir, c.report_json);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("experiment config: ") + e.what());
  }
  if (c.K < 1) throw ValidationError("experiment config: K must be positive");
  for (double l : c.levels)
    if (!(l >= 0.0)) throw ValidationError("experiment config: perturbation levels must be nonnegative");
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open experiment config: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("experiment config " + path + ": " + e.what());
  }
  return from_json(j, fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

nlohmann::json StabilityResult::to_json() const {
  nlohmann::json j;
  j["exponent"] = exponent;
  j["slope"] = std::isfinite(slope) ? nlohmann::json(slope) : nlohmann::json(nullptr);
  j["c_fit"] = c_fit;
  j["spread"] = spread;
  j["nondecreasing"] = nondecreasing;
  j["consistent"] = consistent;
  j["warnings"] = warnings;
  j["records"] = nlohmann::json::array();
  for (const auto& r : records)
    j["records"].push_back({{"level", r.level},
                            {"delta", r.delta},
                            {"trace_part", r.trace_part},
                            {"eigen_part", r.eigen_part},
                            {"error", r.error},
                            {"tau", r.tau},
                            {"radius", r.radius},
                            {"seed", r.seed}});
  return j;
}

void StabilityResult::write_csv(const std::string& path) const {
  std::ostringstream s;
  s << "# exponent " << full(exponent) << " slope " << full(slope) << " c_fit " << full(c_fit) << " spread "
    << full(spread) << '\n';
  s << records_csv(records);
  write_atomically(path, s.str());
}

StabilityResult stability_sweep(const SpectralDataset& truth_data, const SpectralDataset& reference_data,
                                const ScalarField& truth_difference, const std::vector<double>& levels,
                                const PerturbationModel& model, const ReconstructionParams& params,
                                const std::string& partial_csv) {
  ReconstructionParams base = params;
  if (base.n == 0) base.n = truth_data.grid->dim();
  base.validate(truth_data.grid->dim());
  if (base.tau > 0.0) throw ValidationError("stability_sweep: τ must be automatic (chosen from δ)");

  StabilityResult res;
  res.exponent = 2.0 * (1.0 - 2.0 * base.beta()) / (3.0 * (base.n + 2.0));
  if (truth_data.grid->dim() < 3) res.warnings.push_back("outside theory scope: n < 3");

  const size_t L = levels.size();
  std::vector<StabilityRecord> recs(L);
  std::vector<char> done(L, 0);
  std::vector<std::vector<std::string>> level_warnings(L);
  std::mutex io;
  auto save_partial = [&] {
    if (partial_csv.empty()) return;
    std::vector<StabilityRecord> finished;
    for (size_t i = 0; i < L; ++i)
      if (done[i]) finished.push_back(recs[i]);
    write_atomically(partial_csv, records_csv(finished));
  };
  try {
    parallel_for(static_cast<Index>(L), [&](Index li) {
      const size_t i = static_cast<size_t>(li);
      PerturbationModel m = model;
      m.seed = model.seed + 1000003ULL * i;
      auto noisy = perturb_dataset(truth_data, levels[i], m, &level_warnings[i]);
      noisy = align(noisy, truth_data);
      const auto d = delta_metric(noisy, truth_data);
      noisy = align(noisy, reference_data);
      ReconstructionParams p = base;
      p.delta = d.delta;
      const auto rec = reconstruct(noisy, reference_data, p);
      StabilityRecord r;
      r.level = levels[i];
      r.delta = d.delta;
      r.trace_part = d.trace_part;
      r.eigen_part = d.eigen_part;
      r.error = relative_hminus1_error(rec.field, truth_difference, p.padding);
      r.tau = rec.tau;
      r.radius = rec.radius;
      r.seed = m.seed;
      std::lock_guard<std::mutex> lock(io);
      recs[i] = r;
      done[i] = 1;
      save_partial();
    });
  } catch (...) {
    std::lock_guard<std::mutex> lock(io);
    save_partial();
    throw;
  }
  res.records = recs;
  for (const auto& w : level_warnings) res.warnings.insert(res.warnings.end(), w.begin(), w.end());

  std::vector<size_t> order(L);
  for (size_t i = 0; i < L; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return recs[a].delta < recs[b].delta; });
  for (size_t j = 1; j < L; ++j)
    if (recs[order[j]].error < 0.9 * recs[order[j - 1]].error) res.nondecreasing = false;

  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (const auto& r : recs) {
    if (!(r.delta > 0.0)) continue;
    const double ratio = r.error / std::pow(r.delta, res.exponent);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
    if (r.error > 0.0) {
      const double x = std::log(r.delta), y = std::log(r.error);
      sx += x, sy += y, sxx += x * x, sxy += x * y;
      ++cnt;
    }
  }
  res.c_fit = hi;
  res.spread = cnt > 0 && lo > 0.0 ? hi / lo : std::numeric_limits<double>::quiet_NaN();
  res.consistent = std::isfinite(res.spread) && res.spread <= 10.0;
  const double den = cnt * sxx - sx * sx;
  res.slope = cnt >= 2 && den > 0.0 ? (cnt * sxy - sx * sy) / den : std::numeric_limits<double>::quiet_NaN();
  return res;
}

StabilityResult stability_sweep(const ExperimentConfig& cfg, const std::string& partial_csv) {
  const auto op_true = assemble(cfg.truth);
  const auto op_ref = assemble(cfg.reference);
  auto ref = forward_cached(op_ref, cfg.K, false, cfg.eig);
  auto truth = align(forward_cached(op_true, cfg.K, false, cfg.eig), ref);
  const ScalarField diff(cfg.truth.grid, cfg.truth.q.values - cfg.reference.q.values);
  auto res = stability_sweep(truth, ref, diff, cfg.levels, cfg.perturbation, cfg.reconstruction, partial_csv);
  for (const auto& w : op_true.warnings()) res.warnings.push_back("truth operator: " + w);
  for (const auto& w : op_ref.warnings()) res.warnings.push_back("reference operator: " + w);
  return res;
}

}  // namespace bllab
