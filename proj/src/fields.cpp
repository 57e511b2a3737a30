#include "bllab/fields.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

#include <fftw3.h>
#include <json.hpp>

#include "bllab/errors.hpp"

namespace bllab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

double pow_abs(double a, double p) { return p == 2.0 ? a * a : std::pow(a, p); }

void check_nonempty(Index count, const char* what) {
  if (count == 0) throw ValidationError(std::string(what) + ": empty field");
}

// Run an n-dimensional complex DFT over an axis-0-fastest array.
void run_dft(const std::vector<int>& modes, Eigen::VectorXcd& data, int sign) {
  std::vector<int> dims(modes.rbegin(), modes.rend());
  auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), ptr, ptr, sign, FFTW_ESTIMATE);
  if (plan == nullptr) throw NumericalError("fftw: could not create plan");
  fftw_execute(plan);
  fftw_destroy_plan(plan);
}

nlohmann::json grid_header(const Grid& g, const char* kind) {
  return {{"n", g.dim()},
          {"side_lengths", g.side_lengths()},
          {"nodes_per_axis", g.nodes_per_axis()},
          {"kind", kind},
          {"dtype", "c128"}};
}

void write_values(const std::string& path, const nlohmann::json& header, const Eigen::VectorXcd& v) {
  static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(cplx)));
  if (!out) throw ValidationError("write failed: " + path);
}

std::pair<GridPtr, Eigen::VectorXcd> read_values(const std::string& path, const char* kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open: " + path);
  std::string line;
  std::getline(in, line);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad field header in " + path + ": " + e.what());
  }
  if (h.value("kind", "") != kind) throw ValidationError(path + ": expected a field of kind " + kind);
  if (h.value("dtype", "") != "c128") throw ValidationError(path + ": unsupported dtype");
  auto g = Grid::build(h.at("n").get<int>(), h.at("side_lengths").get<std::vector<double>>(),
                       h.at("nodes_per_axis").get<std::vector<int>>());
  const Index count = std::string(kind) == "interior" ? g->node_count() : g->boundary_count();
  Eigen::VectorXcd v(count);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(cplx)));
  if (in.gcount() != static_cast<std::streamsize>(count * sizeof(cplx)))
    throw ValidationError(path + ": truncated data block");
  return {g, v};
}

}  // namespace

double lp_norm(const ScalarField& f, double p) {
  check_nonempty(f.values.size(), "lp_norm");
  if (p < 1.0) throw ValidationError("lp_norm: need p >= 1");
  if (std::isinf(p)) return f.values.cwiseAbs().maxCoeff();
  const auto& w = f.grid->weights();
  double s = 0.0;
  for (Index i = 0; i < f.values.size(); ++i) s += w[i] * pow_abs(std::abs(f.values[i]), p);
  return std::pow(s, 1.0 / p);
}

double boundary_lp_norm(const BoundaryFunction& g, double p) {
  check_nonempty(g.values.size(), "boundary_lp_norm");
  if (p < 1.0) throw ValidationError("boundary_lp_norm: need p >= 1");
  if (std::isinf(p)) return g.values.cwiseAbs().maxCoeff();
  const auto& w = g.grid->boundary_weights();
  double s = 0.0;
  for (Index e = 0; e < g.values.size(); ++e) s += w[e] * pow_abs(std::abs(g.values[e]), p);
  return std::pow(s, 1.0 / p);
}

double l2_boundary_norm(const BoundaryFunction& g) { return boundary_lp_norm(g, 2.0); }

double gradient_energy(const Grid& grid, const Eigen::VectorXcd& u) {
  double s = 0.0;
  for (const auto& e : grid.edges()) s += e.w * std::norm(u[e.a] - u[e.b]);
  return s;
}

double h1_norm(const ScalarField& u) {
  const double l2 = lp_norm(u, 2.0);
  return std::sqrt(gradient_energy(*u.grid, u.values) + l2 * l2);
}

double hminus1_norm(const ScalarField& f, double padding) {
  check_nonempty(f.values.size(), "hminus1_norm");
  return hminus1_norm(fourier_transform(f, padding));
}

double norm(const ScalarField& f, NormKind kind, double p) {
  switch (kind) {
    case NormKind::Lp:
      return lp_norm(f, p);
    case NormKind::H1:
      return h1_norm(f);
    case NormKind::Hminus1:
      return hminus1_norm(f);
    case NormKind::L2Boundary:
      return l2_boundary_norm(trace(f));
  }
  throw ValidationError("norm: unsupported kind");
}

double norm(const BoundaryFunction& g, NormKind kind) {
  if (kind != NormKind::L2Boundary) throw ValidationError("norm: boundary functions only support the L2 boundary norm");
  return l2_boundary_norm(g);
}

cplx inner(const ScalarField& u, const ScalarField& v) {
  require_same_grid(*u.grid, *v.grid, "inner");
  const auto& w = u.grid->weights();
  cplx s = 0.0;
  for (Index i = 0; i < u.values.size(); ++i) s += w[i] * u.values[i] * std::conj(v.values[i]);
  return s;
}

cplx inner(const BoundaryFunction& g, const BoundaryFunction& h) {
  require_same_grid(*g.grid, *h.grid, "inner");
  const auto& w = g.grid->boundary_weights();
  cplx s = 0.0;
  for (Index e = 0; e < g.values.size(); ++e) s += w[e] * g.values[e] * std::conj(h.values[e]);
  return s;
}

std::array<int, 3> FourierField::mode(Index idx) const {
  std::array<int, 3> m{0, 0, 0};
  for (int d = 0; d < n; ++d) {
    const int c = modes[static_cast<size_t>(d)];
    int k = static_cast<int>(idx % c);
    idx /= c;
    if (k > c / 2) k -= c;
    m[static_cast<size_t>(d)] = k;
  }
  return m;
}

Point FourierField::xi(Index idx) const {
  const auto m = mode(idx);
  Point x{0.0, 0.0, 0.0};
  for (int d = 0; d < n; ++d) x[static_cast<size_t>(d)] = m[static_cast<size_t>(d)] * dxi[static_cast<size_t>(d)];
  return x;
}

double FourierField::xi_norm(Index idx) const {
  const Point x = xi(idx);
  return std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
}

Index FourierField::mirror(Index idx) const {
  Index out = 0;
  Index stride = 1;
  for (int d = 0; d < n; ++d) {
    const int c = modes[static_cast<size_t>(d)];
    const int k = static_cast<int>(idx % c);
    idx /= c;
    out += stride * ((c - k) % c);
    stride *= c;
  }
  return out;
}

double FourierField::cell_volume() const {
  double v = 1.0;
  for (double d : dxi) v *= d;
  return v;
}

FourierField fourier_transform(const ScalarField& f, double padding_factor) {
  if (!(padding_factor >= 1.0)) throw ValidationError("fourier_transform: padding factor must be >= 1");
  const Grid& g = *f.grid;
  FourierField ff;
  ff.n = g.dim();
  ff.spacing = g.spacing();
  ff.source_counts = g.nodes_per_axis();
  Index total = 1;
  for (int d = 0; d < ff.n; ++d) {
    const int c = g.nodes_per_axis()[static_cast<size_t>(d)];
    const int m = static_cast<int>(std::ceil(padding_factor * c - 1e-9));
    ff.modes.push_back(m);
    ff.dxi.push_back(kTwoPi / (m * g.spacing()[static_cast<size_t>(d)]));
    total *= m;
  }
  ff.samples = Eigen::VectorXcd::Zero(total);
  const auto& w = g.weights();
  for (Index i = 0; i < g.node_count(); ++i) {
    const auto ijk = g.node_ijk(i);
    Index idx = 0;
    Index stride = 1;
    for (int d = 0; d < ff.n; ++d) {
      idx += stride * ijk[static_cast<size_t>(d)];
      stride *= ff.modes[static_cast<size_t>(d)];
    }
    ff.samples[idx] = w[i] * f.values[i];
  }
  run_dft(ff.modes, ff.samples, FFTW_FORWARD);
  if (f.is_real()) hermitian_symmetrize(ff);
  return ff;
}

void hermitian_symmetrize(FourierField& ff) {
  Eigen::VectorXcd out(ff.samples.size());
  for (Index i = 0; i < ff.size(); ++i) out[i] = 0.5 * (ff.samples[i] + std::conj(ff.samples[ff.mirror(i)]));
  ff.samples = std::move(out);
}

ScalarField inverse_fourier_transform(const FourierField& ff, GridPtr grid) {
  if (grid->dim() != ff.n || grid->nodes_per_axis() != ff.source_counts)
    throw ValidationError("inverse_fourier_transform: grid does not match the lattice");
  Eigen::VectorXcd data = ff.samples;
  run_dft(ff.modes, data, FFTW_BACKWARD);
  double scale = 1.0;
  for (int d = 0; d < ff.n; ++d) scale *= ff.modes[static_cast<size_t>(d)] * ff.spacing[static_cast<size_t>(d)];
  ScalarField out(grid);
  for (Index i = 0; i < grid->node_count(); ++i) {
    const auto ijk = grid->node_ijk(i);
    Index idx = 0;
    Index stride = 1;
    for (int d = 0; d < ff.n; ++d) {
      idx += stride * ijk[static_cast<size_t>(d)];
      stride *= ff.modes[static_cast<size_t>(d)];
    }
    out.values[i] = data[idx] / scale;
  }
  return out;
}

double hminus1_norm(const FourierField& ff) {
  double s = 0.0;
  for (Index i = 0; i < ff.size(); ++i) {
    const double k = ff.xi_norm(i);
    s += std::norm(ff.samples[i]) / (1.0 + k * k);
  }
  return std::sqrt(s * ff.cell_volume() / std::pow(kTwoPi, ff.n));
}

double l2_norm(const FourierField& ff) {
  return std::sqrt(ff.samples.squaredNorm() * ff.cell_volume() / std::pow(kTwoPi, ff.n));
}

void write_field(const std::string& path, const ScalarField& f) {
  write_values(path, grid_header(*f.grid, "interior"), f.values);
}

void write_field(const std::string& path, const BoundaryFunction& g) {
  write_values(path, grid_header(*g.grid, "boundary"), g.values);
}

ScalarField read_scalar_field(const std::string& path) {
  auto [g, v] = read_values(path, "interior");
  return ScalarField(g, std::move(v));
}

BoundaryFunction read_boundary_function(const std::string& path) {
  auto [g, v] = read_values(path, "boundary");
  return BoundaryFunction(g, std::move(v));
}

}  // namespace bllab
