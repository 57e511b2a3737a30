// Command-line front end: forward, verify, reconstruct, stability, psi, delta.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bllab/errors.hpp"
#include "bllab/harness.hpp"
#include "bllab/parallel.hpp"
#include "bllab/resolvent.hpp"

using namespace bllab;
namespace fs = std::filesystem;

namespace {

std::string base_of(const std::string& path) {
  const auto p = fs::path(path).parent_path();
  return p.empty() ? "." : p.string();
}

std::string resolve(const std::string& base, const std::string& p) {
  return fs::path(p).is_absolute() ? p : (fs::path(base) / p).string();
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void emit(const nlohmann::json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream f(out);
  if (!f) throw ValidationError("cannot open for writing: " + out);
  f << j.dump(2) << '\n';
}

std::string full(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

bool aligned(const SpectralDataset& a, const SpectralDataset& b) {
  return a.operator_hash == b.operator_hash || a.aligned_to == b.operator_hash || b.aligned_to == a.operator_hash;
}

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
  std::string out;
};

int run_forward(const Globals& g, const std::string& op_path, int K, bool interior) {
  const auto spec = load_operator_spec(op_path);
  const auto op = assemble(spec);
  EigOptions o;
  if (g.seed_set) o.seed = g.seed;
  const auto ds = forward_cached(op, K, interior, o);
  const std::string out = g.out.empty() ? "dataset.bin" : g.out;
  write_dataset(out, ds);
  nlohmann::json j{{"dataset", out}, {"K", ds.K()}, {"operator_hash", ds.operator_hash}, {"meta", ds.meta},
                   {"warnings", op.warnings()}};
  if (spec.grid->dim() < 3) j["scope"] = "outside theory scope: n < 3";
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_verify(const Globals& g, const std::string& op_path, const std::string& ds_path, const std::string& csv,
               int probes) {
  const auto op = assemble(load_operator_spec(op_path));
  const auto ds = read_dataset(ds_path);
  if (ds.operator_hash != op.hash()) throw ValidationError("verify: dataset was not generated from this operator");
  BoundSuiteOptions o;
  if (g.seed_set) o.seed = g.seed;
  if (probes > 0) o.probe_count = probes;
  const auto report = verify_resolvent_bounds(op, ds, o);
  if (!csv.empty()) report.write_csv(csv);
  auto j = report.to_json();
  if (op.grid()->dim() < 3) j["scope"] = "outside theory scope: n < 3";
  emit(j, g.out);
  return 0;
}

int run_reconstruct(const Globals& g, const std::string& manifest_path) {
  const auto m = load_json(manifest_path);
  const std::string base = base_of(manifest_path);
  SpectralDataset dsA, dsB;
  ReconstructionParams params;
  try {
    dsA = read_dataset(resolve(base, m.at("datasetA").get<std::string>()));
    dsB = read_dataset(resolve(base, m.at("datasetB").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  params = ReconstructionParams::from_json(m);
  nlohmann::json notes = nlohmann::json::array();
  if (!aligned(dsA, dsB)) {
    dsA = align(dsA, dsB);
    notes.push_back("datasetA aligned to datasetB");
  }
  const auto rec = reconstruct(dsA, dsB, params);
  auto diag = rec.diagnostics;
  diag["notes"] = notes;
  if (m.contains("truth")) {
    const auto& t = m.at("truth");
    ScalarField truth;
    if (t.is_string()) {
      truth = read_scalar_field(resolve(base, t.get<std::string>()));
    } else {
      const auto a = parse_operator_spec(load_json(resolve(base, t.at("operator").get<std::string>())), base);
      const auto b = parse_operator_spec(load_json(resolve(base, t.at("reference").get<std::string>())), base);
      truth = ScalarField(a.grid, a.q.values - b.q.values);
    }
    require_same_grid(*truth.grid, *dsA.grid, "manifest truth");
    truth.grid = dsA.grid;
    diag["hminus1_error"] = relative_hminus1_error(rec.field, truth, params.padding);
    diag["hminus1_error_kind"] = "relative to the supplied truth";
  } else if (dsA.operator_hash == dsB.operator_hash) {
    diag["hminus1_error"] = hminus1_norm(rec.field, params.padding);
    diag["hminus1_error_kind"] = "absolute; identical operators, so the truth is zero";
  } else {
    diag["hminus1_error"] = nullptr;
    diag["hminus1_error_kind"] = "no truth supplied";
  }
  const std::string out = g.out.empty() ? "reconstruction.bin" : g.out;
  write_field(out, rec.field);
  diag["field"] = out;
  emit(diag, "");
  std::ofstream(out + ".json") << diag.dump(2) << '\n';
  return 0;
}

int run_stability(const Globals& g, const std::string& cfg_path) {
  auto cfg = ExperimentConfig::load(cfg_path);
  if (g.seed_set) cfg.perturbation.seed = g.seed;
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    cfg.records_csv = (fs::path(g.out) / fs::path(cfg.records_csv).filename()).string();
    cfg.report_json = (fs::path(g.out) / fs::path(cfg.report_json).filename()).string();
  }
  const auto res = stability_sweep(cfg, cfg.records_csv);
  res.write_csv(cfg.records_csv);
  auto j = res.to_json();
  j["records_csv"] = cfg.records_csv;
  emit(j, cfg.report_json);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int run_delta(const Globals& g, const std::string& a_path, const std::string& b_path) {
  auto a = read_dataset(a_path);
  const auto b = read_dataset(b_path);
  nlohmann::json notes = nlohmann::json::array();
  if (!aligned(a, b)) {
    a = align(a, b);
    notes.push_back("first dataset aligned to the second");
  }
  auto j = delta_metric(a, b).to_json();
  j["notes"] = notes;
  emit(j, g.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Borg-Levinson inverse spectral laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->each([&](const std::string&) { g.seed_set = true; });
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output path");

  std::string op_path, ds_path, csv, manifest, cfg, a_path, b_path;
  int K = 0, probes = 0;
  bool interior = false;
  double theta = 0.0, t = 0.0;

  auto* forward = app.add_subcommand("forward", "operator spec -> dataset file");
  forward->add_option("--op", op_path, "operator spec (JSON)")->required();
  forward->add_option("--K", K, "number of eigenpairs")->required();
  forward->add_flag("--interior", interior, "keep interior eigenfields");

  auto* verify = app.add_subcommand("verify", "operator + dataset -> resolvent bound report");
  verify->add_option("--op", op_path, "operator spec (JSON)")->required();
  verify->add_option("--ds", ds_path, "dataset file")->required();
  verify->add_option("--csv", csv, "flat CSV of every probe row");
  verify->add_option("--probes", probes, "probe count");

  auto* recon = app.add_subcommand("reconstruct", "manifest -> reconstructed field + diagnostics");
  recon->add_option("--manifest", manifest, "reconstruction manifest (JSON)")->required();

  auto* stab = app.add_subcommand("stability", "experiment config -> stability records");
  stab->add_option("--config", cfg, "experiment config (JSON)")->required();

  auto* psi_cmd = app.add_subcommand("psi", "evaluate the modulus function");
  psi_cmd->add_option("--theta", theta, "exponent")->required();
  psi_cmd->add_option("--t", t, "argument")->required();

  auto* delta = app.add_subcommand("delta", "data discrepancy between two datasets");
  delta->add_option("--a", a_path, "first dataset")->required();
  delta->add_option("--b", b_path, "second dataset")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    set_thread_count(g.threads);
    if (*forward) return run_forward(g, op_path, K, interior);
    if (*verify) return run_verify(g, op_path, ds_path, csv, probes);
    if (*recon) return run_reconstruct(g, manifest);
    if (*stab) return run_stability(g, cfg);
    if (*psi_cmd) {
      std::cout << full(psi(theta, t)) << '\n';
      return 0;
    }
    if (*delta) return run_delta(g, a_path, b_path);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
