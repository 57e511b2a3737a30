#include "bllab/operator.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <openssl/evp.h>

#include "bllab/errors.hpp"

namespace bllab {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;

double quad_form(const RobinOperator& op, const Eigen::VectorXd& u) { return u.dot(op.matrix() * u); }

double h_norm2(const Grid& g, const Eigen::VectorXd& u) { return u.cwiseAbs2().dot(g.weights()); }

double v_norm2(const Grid& g, const Eigen::VectorXd& u) {
  return gradient_energy(g, u.cast<cplx>()) + h_norm2(g, u);
}

// Largest μ with u_Γᵀ W_Γ u_Γ = μ (‖∇u‖² + ‖u‖²): the squared trace norm.
double estimate_trace_norm(const Grid& g, const SparseReal& stiffness_plus_mass, std::uint64_t seed) {
  const Index n = g.node_count();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  const auto& nodes = g.boundary_nodes();
  const auto& bw = g.boundary_weights();
  for (Index e = 0; e < g.boundary_count(); ++e) p[nodes[static_cast<size_t>(e)]] += bw[e];

  std::mt19937_64 rng(seed);
  Eigen::VectorXd x(n);
  for (Index i = 0; i < n; ++i) x[i] = 1.0 + 0.1 * unit_uniform(rng());

  Eigen::ConjugateGradient<SparseReal, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-9);
  cg.compute(stiffness_plus_mass);
  double mu = 0.0;
  Eigen::VectorXd y = x;
  for (int it = 0; it < 60; ++it) {
    const Eigen::VectorXd rhs = p.cwiseProduct(x);
    y = cg.solveWithGuess(rhs, y);
    const double num = y.dot(p.cwiseProduct(y));
    const double den = y.dot(stiffness_plus_mass * y);
    const double next = num / den;
    x = y / std::sqrt(den);
    y = x;
    if (it > 3 && std::abs(next - mu) <= 1e-6 * next) {
      mu = next;
      break;
    }
    mu = next;
  }
  return std::sqrt(mu);
}

SparseReal edge_stiffness(const Grid& g) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(g.edges().size() * 4);
  for (const auto& e : g.edges()) {
    t.emplace_back(e.a, e.a, e.w);
    t.emplace_back(e.b, e.b, e.w);
    t.emplace_back(e.a, e.b, -e.w);
    t.emplace_back(e.b, e.a, -e.w);
  }
  SparseReal s(g.node_count(), g.node_count());
  s.setFromTriplets(t.begin(), t.end());
  s.makeCompressed();
  return s;
}

SparseReal add_diagonal(const SparseReal& a, const Eigen::VectorXd& d) {
  SparseReal out = a;
  for (Index i = 0; i < d.size(); ++i) out.coeffRef(i, i) += d[i];
  out.makeCompressed();
  return out;
}

}  // namespace

double unit_uniform(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

RobinOperator RobinOperator::assemble(GridPtr grid, const ScalarField& q, const BoundaryFunction& alpha, double aleph,
                                      const AssembleOptions& opts) {
  require_same_grid(*grid, *q.grid, "assemble(q)");
  require_same_grid(*grid, *alpha.grid, "assemble(alpha)");
  if (!q.is_real()) throw ValidationError("assemble: q must be real");
  if (alpha.values.imag().cwiseAbs().maxCoeff() != 0.0) throw ValidationError("assemble: alpha must be real");
  if (!(aleph > 0.0)) throw ValidationError("assemble: aleph must be positive");

  RobinOperator op;
  op.grid_ = grid;
  op.q_ = q.values.real();
  op.alpha_ = alpha.values.real();
  op.aleph_ = aleph;
  const Grid& g = *grid;

  op.robin_ = Eigen::VectorXd::Zero(g.node_count());
  const auto& nodes = g.boundary_nodes();
  const auto& bw = g.boundary_weights();
  for (Index e = 0; e < g.boundary_count(); ++e) op.robin_[nodes[static_cast<size_t>(e)]] += bw[e] * op.alpha_[e];

  const SparseReal stiffness = edge_stiffness(g);
  op.m_ = add_diagonal(stiffness, g.weights().cwiseProduct(op.q_) + op.robin_);

  auto& c = op.constants_;
  c.aleph_used = aleph;
  const double rho = std::max(1.0, g.dim() / 2.0);
  c.q_norm = lp_norm(ScalarField(grid, op.q_.cast<cplx>()), rho);
  if (c.q_norm > aleph) {
    std::ostringstream s;
    s << "||q||_{L^" << rho << "} = " << c.q_norm << " exceeds aleph = " << aleph << "; theory constants degrade";
    op.warnings_.push_back(s.str());
  }

  c.trace_norm = estimate_trace_norm(g, add_diagonal(stiffness, g.weights()), opts.seed);
  c.c = std::max(0.0, -op.alpha_.minCoeff());
  const double cn2 = c.c * c.trace_norm * c.trace_norm;
  if (cn2 >= 1.0) {
    std::ostringstream s;
    s << "assemble: alpha >= -c with c*n^2 = " << cn2 << " violates c < n^-2 (n = " << c.trace_norm << ")";
    throw ValidationError(s.str());
  }
  c.kappa = 0.5 * (1.0 - cn2);
  if (cn2 > 0.9) {
    c.near_constraint = true;
    op.warnings_.push_back("alpha is near the constraint boundary c*n^2 < 1 (discrete n estimate)");
  }

  const auto bank = probe_bank(g, opts.probe_count, opts.seed);
  double required = -std::numeric_limits<double>::infinity();
  std::vector<double> eps = opts.eps_grid;
  eps.push_back(c.kappa);
  std::vector<double> c_eps(eps.size(), 0.0);
  for (const auto& u : bank) {
    const double h2 = h_norm2(g, u);
    const double v2 = v_norm2(g, u);
    required = std::max(required, (c.kappa * v2 - quad_form(op, u)) / h2);
    const double qu2 = op.q_.cwiseAbs().cwiseProduct(u.cwiseAbs2()).dot(g.weights());
    for (size_t k = 0; k < eps.size(); ++k) c_eps[k] = std::max(c_eps[k], (qu2 - eps[k] * v2) / h2);
  }
  for (size_t k = 0; k + 1 < eps.size(); ++k) c.c_eps.emplace_back(eps[k], c_eps[k]);
  c.c_kappa = c_eps.back();

  c.lambda_star = 2.0 * std::max(required, 0.0);
  if (c.lambda_star <= 0.0) c.lambda_star = c.kappa;
  op.anchor_ = std::make_shared<SpdFactor>();
  int attempts = 0;
  while (!op.anchor_->compute(op.shifted(c.lambda_star + 1.0))) {
    if (++attempts > 30) throw NumericalError("assemble: could not find a coercivity shift");
    c.lambda_star = 2.0 * c.lambda_star + 1.0;
  }
  if (attempts > 0) op.warnings_.push_back("probe-bank lambda* was too small; doubled until M + (lambda*+1)B is definite");
  c.tau_star = 1.0 + std::sqrt(std::max(0.0, 2.0 - c.lambda_star));
  c.lambda_plus = std::max(c.lambda_star, (1.0 + c.c_kappa) / (1.0 - c.kappa / 4.0));

  op.hash_ = operator_hash(g, op.q_, op.alpha_, aleph);
  return op;
}

SparseReal RobinOperator::shifted(double s) const { return add_diagonal(m_, s * grid_->weights()); }

SparseComplex RobinOperator::shifted(cplx lambda) const {
  SparseComplex out = m_.cast<cplx>();
  const auto& w = grid_->weights();
  for (Index i = 0; i < w.size(); ++i) out.coeffRef(i, i) -= lambda * w[i];
  out.makeCompressed();
  return out;
}

Eigen::VectorXcd RobinOperator::boundary_load(const Eigen::VectorXcd& g) const {
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(grid_->node_count());
  const auto& nodes = grid_->boundary_nodes();
  const auto& bw = grid_->boundary_weights();
  for (Index e = 0; e < g.size(); ++e) out[nodes[static_cast<size_t>(e)]] += bw[e] * g[e];
  return out;
}

cplx form_apply(const RobinOperator& op, const ScalarField& u, const ScalarField& v) {
  require_same_grid(*op.grid(), *u.grid, "form_apply");
  require_same_grid(*op.grid(), *v.grid, "form_apply");
  const Grid& g = *op.grid();
  cplx s = 0.0;
  for (const auto& e : g.edges()) s += e.w * ((u.values[e.a] - u.values[e.b]) * std::conj(v.values[e.a] - v.values[e.b]));
  const auto& w = g.weights();
  for (Index i = 0; i < g.node_count(); ++i)
    s += (w[i] * op.q()[i] + op.robin_diagonal()[i]) * (u.values[i] * std::conj(v.values[i]));
  return s;
}

cplx boundary_form(const RobinOperator& op, const ScalarField& u, const ScalarField& v) {
  require_same_grid(*op.grid(), *u.grid, "boundary_form");
  require_same_grid(*op.grid(), *v.grid, "boundary_form");
  const Grid& g = *op.grid();
  const auto& nodes = g.boundary_nodes();
  const auto& bw = g.boundary_weights();
  cplx s = 0.0;
  for (Index e = 0; e < g.boundary_count(); ++e) {
    const Index i = nodes[static_cast<size_t>(e)];
    s += bw[e] * op.alpha()[e] * (u.values[i] * std::conj(v.values[i]));
  }
  return s;
}

Eigen::VectorXcd normal_derivative_values(const Grid& g, const Eigen::VectorXcd& u) {
  Eigen::VectorXcd out(g.boundary_count());
  Index e = 0;
  for (const auto& face : g.faces()) {
    const size_t ax = static_cast<size_t>(face.axis);
    const double h = g.spacing()[ax];
    const int last = g.nodes_per_axis()[ax] - 1;
    for (Index node : face.nodes) {
      auto ijk = g.node_ijk(node);
      const int step = face.side == 0 ? 1 : -1;
      const int i0 = face.side == 0 ? 0 : last;
      ijk[ax] = i0 + step;
      const cplx u1 = u[g.node_index(ijk)];
      ijk[ax] = i0 + 2 * step;
      const cplx u2 = u[g.node_index(ijk)];
      out[e++] = (3.0 * u[node] - 4.0 * u1 + u2) / (2.0 * h);
    }
  }
  return out;
}

BoundaryFunction normal_derivative(const RobinOperator& op, const ScalarField& u) {
  require_same_grid(*op.grid(), *u.grid, "normal_derivative");
  return BoundaryFunction(op.grid(), normal_derivative_values(*op.grid(), u.values));
}

Eigen::VectorXcd pointwise_laplacian(const Grid& g, const Eigen::VectorXcd& u) {
  Eigen::VectorXcd lap = Eigen::VectorXcd::Zero(g.node_count());
  for (Index i = 0; i < g.node_count(); ++i) {
    const auto ijk = g.node_ijk(i);
    for (int d = 0; d < g.dim(); ++d) {
      const size_t ax = static_cast<size_t>(d);
      const int c = g.nodes_per_axis()[ax];
      const double h2 = g.spacing()[ax] * g.spacing()[ax];
      auto at = [&](int k) {
        auto p = ijk;
        p[ax] = k;
        return u[g.node_index(p)];
      };
      const int k = ijk[ax];
      if (k > 0 && k < c - 1) {
        lap[i] += (at(k - 1) - 2.0 * at(k) + at(k + 1)) / h2;
      } else if (c < 4) {
        lap[i] += (at(0) - 2.0 * at(1) + at(2)) / h2;
      } else {
        const int s = k == 0 ? 1 : -1;
        lap[i] += (2.0 * at(k) - 5.0 * at(k + s) + 4.0 * at(k + 2 * s) - at(k + 3 * s)) / h2;
      }
    }
  }
  return lap;
}

double green_defect(const RobinOperator& op, const ScalarField& u, const ScalarField& v) {
  require_same_grid(*op.grid(), *u.grid, "green_defect");
  require_same_grid(*op.grid(), *v.grid, "green_defect");
  return green_defect(*op.grid(), u, v);
}

double green_defect(const Grid& g, const ScalarField& u, const ScalarField& v) {
  const Eigen::VectorXcd lap = pointwise_laplacian(g, u.values);
  const auto& w = g.weights();
  cplx volume_term = 0.0;
  for (Index i = 0; i < g.node_count(); ++i) volume_term += w[i] * lap[i] * std::conj(v.values[i]);
  cplx grad_term = 0.0;
  for (const auto& e : g.edges())
    grad_term += e.w * ((u.values[e.a] - u.values[e.b]) * std::conj(v.values[e.a] - v.values[e.b]));
  const Eigen::VectorXcd dn = normal_derivative_values(g, u.values);
  const auto& nodes = g.boundary_nodes();
  const auto& bw = g.boundary_weights();
  cplx boundary_term = 0.0;
  for (Index e = 0; e < g.boundary_count(); ++e)
    boundary_term += bw[e] * dn[e] * std::conj(v.values[nodes[static_cast<size_t>(e)]]);
  return std::abs(volume_term + grad_term - boundary_term);
}

std::vector<Eigen::VectorXd> probe_bank(const Grid& g, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Index n = g.node_count();
  const int dim = g.dim();
  std::vector<Eigen::VectorXd> bank;
  bank.reserve(static_cast<size_t>(count));
  bank.push_back(Eigen::VectorXd::Ones(n));
  for (int k = 1; static_cast<int>(bank.size()) < count; ++k) {
    Eigen::VectorXd u(n);
    switch (k % 4) {
      case 0: {  // rough noise
        for (Index i = 0; i < n; ++i) u[i] = 2.0 * unit_uniform(rng()) - 1.0;
        break;
      }
      case 1: {  // smooth cosine with random low mode numbers
        std::array<int, 3> m{0, 0, 0};
        for (int d = 0; d < dim; ++d) m[static_cast<size_t>(d)] = static_cast<int>(rng() % 5);
        for (Index i = 0; i < n; ++i) {
          const Point x = g.coord(i);
          double v = 1.0;
          for (int d = 0; d < dim; ++d)
            v *= std::cos(kPi * m[static_cast<size_t>(d)] * x[static_cast<size_t>(d)] / g.side_lengths()[static_cast<size_t>(d)]);
          u[i] = v;
        }
        break;
      }
      case 2: {  // boundary layer at a random face
        const int face = static_cast<int>(rng() % static_cast<std::uint64_t>(2 * dim));
        const size_t ax = static_cast<size_t>(face / 2);
        const double decay = std::exp(std::log(2.0) + unit_uniform(rng()) * std::log(1.0 / g.spacing()[ax]));
        for (Index i = 0; i < n; ++i) {
          const double x = g.coord(i)[ax];
          const double dist = face % 2 == 0 ? x : g.side_lengths()[ax] - x;
          u[i] = std::exp(-decay * dist);
        }
        break;
      }
      default: {  // localized Gaussian at a random point
        Point c{0.0, 0.0, 0.0};
        for (int d = 0; d < dim; ++d) c[static_cast<size_t>(d)] = unit_uniform(rng()) * g.side_lengths()[static_cast<size_t>(d)];
        const double width = g.max_spacing() * (1.0 + 7.0 * unit_uniform(rng()));
        for (Index i = 0; i < n; ++i) {
          const Point x = g.coord(i);
          double r2 = 0.0;
          for (int d = 0; d < dim; ++d) r2 += std::pow(x[static_cast<size_t>(d)] - c[static_cast<size_t>(d)], 2);
          u[i] = std::exp(-r2 / (width * width));
        }
        break;
      }
    }
    if (u.norm() > 0.0) bank.push_back(std::move(u));
  }
  return bank;
}

ScalarField zero_potential(GridPtr grid) { return ScalarField(std::move(grid)); }

ScalarField bump_potential(GridPtr grid, Point center, double radius, double amplitude) {
  if (!(radius > 0.0)) throw ValidationError("bump: radius must be positive");
  const int dim = grid->dim();
  return ScalarField::from_function(grid, [&](const Point& x) {
    double r2 = 0.0;
    for (int d = 0; d < dim; ++d) r2 += std::pow(x[static_cast<size_t>(d)] - center[static_cast<size_t>(d)], 2);
    const double s = r2 / (radius * radius);
    return s < 1.0 ? amplitude * std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
  });
}

ScalarField singular_potential(GridPtr grid, Point center, double exponent, double cap) {
  if (!(exponent > 0.0)) throw ValidationError("singular: exponent must be positive");
  if (!(cap > 0.0)) throw ValidationError("singular: cap must be positive");
  const int dim = grid->dim();
  return ScalarField::from_function(grid, [&](const Point& x) {
    double r2 = 0.0;
    for (int d = 0; d < dim; ++d) r2 += std::pow(x[static_cast<size_t>(d)] - center[static_cast<size_t>(d)], 2);
    if (r2 == 0.0) return cap;
    return std::min(std::pow(r2, -0.5 * exponent), cap);
  });
}

GridPtr grid_from_json(const nlohmann::json& j) {
  try {
    return Grid::build(j.at("n").get<int>(), j.at("side_lengths").get<std::vector<double>>(),
                       j.at("nodes_per_axis").get<std::vector<int>>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad grid description: ") + e.what());
  }
}

nlohmann::json grid_to_json(const Grid& g) {
  return {{"n", g.dim()}, {"side_lengths", g.side_lengths()}, {"nodes_per_axis", g.nodes_per_axis()}};
}

namespace {

Point point_or(const nlohmann::json& j, const char* key, Point fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = j.at(key).get<std::vector<double>>();
  Point p{0.0, 0.0, 0.0};
  for (size_t d = 0; d < std::min<size_t>(3, v.size()); ++d) p[d] = v[d];
  return p;
}

std::string resolve(const std::string& base, const std::string& path) {
  const std::filesystem::path p(path);
  return p.is_absolute() ? path : (std::filesystem::path(base) / p).string();
}

}  // namespace

OperatorSpec parse_operator_spec(const nlohmann::json& j, const std::string& base_dir) {
  OperatorSpec spec;
  spec.source = j;
  try {
    spec.grid = grid_from_json(j.at("grid"));
    const auto& qj = j.contains("q") ? j.at("q") : nlohmann::json("zero");
    std::string name;
    if (qj.is_string()) {
      name = qj.get<std::string>();
    } else if (qj.contains("field")) {
      spec.q = read_scalar_field(resolve(base_dir, qj.at("field").get<std::string>()));
      require_same_grid(*spec.grid, *spec.q.grid, "operator spec q");
      spec.q.grid = spec.grid;
    } else {
      name = qj.at("builtin").get<std::string>();
    }
    const nlohmann::json params = qj.is_object() ? qj : nlohmann::json::object();
    if (!name.empty()) {
      const Point center = point_or(params, "center", spec.grid->center());
      if (name == "zero") {
        spec.q = zero_potential(spec.grid);
      } else if (name == "bump") {
        spec.q = bump_potential(spec.grid, center, params.value("radius", 0.2), params.value("amplitude", 5.0));
      } else if (name == "singular") {
        const double a = params.value("exponent", 1.0);
        const double cap = params.value("cap", std::pow(0.5 * spec.grid->max_spacing(), -a));
        spec.singular_cap = cap;
        spec.q = singular_potential(spec.grid, center, a, cap);
      } else {
        throw ValidationError("unknown builtin potential: " + name);
      }
    }

    const auto& aj = j.contains("alpha") ? j.at("alpha") : nlohmann::json(0.0);
    if (aj.is_number()) {
      spec.alpha = BoundaryFunction(spec.grid, Eigen::VectorXcd::Constant(spec.grid->boundary_count(), aj.get<double>()));
    } else if (aj.is_array()) {
      const auto per_face = aj.get<std::vector<double>>();
      if (per_face.size() != spec.grid->faces().size())
        throw ValidationError("alpha: per-face list needs one value per face");
      spec.alpha = BoundaryFunction(spec.grid);
      for (size_t f = 0; f < per_face.size(); ++f) {
        const Index off = spec.grid->face_offset(static_cast<int>(f));
        const Index len = static_cast<Index>(spec.grid->faces()[f].nodes.size());
        spec.alpha.values.segment(off, len).setConstant(per_face[f]);
      }
    } else {
      spec.alpha = read_boundary_function(resolve(base_dir, aj.at("field").get<std::string>()));
      require_same_grid(*spec.grid, *spec.alpha.grid, "operator spec alpha");
      spec.alpha.grid = spec.grid;
    }
    spec.aleph = j.value("aleph", 100.0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad operator spec: ") + e.what());
  }
  return spec;
}

OperatorSpec load_operator_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open operator spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("operator spec " + path + ": " + e.what());
  }
  return parse_operator_spec(j, std::filesystem::path(path).parent_path().string().empty()
                                    ? "."
                                    : std::filesystem::path(path).parent_path().string());
}

RobinOperator assemble(const OperatorSpec& spec, const AssembleOptions& opts) {
  return RobinOperator::assemble(spec.grid, spec.q, spec.alpha, spec.aleph, opts);
}

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, md, &len, EVP_sha256(), nullptr) != 1) throw NumericalError("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string operator_hash(const Grid& grid, const Eigen::VectorXd& q, const Eigen::VectorXd& alpha, double aleph) {
  std::string bytes = grid_to_json(grid).dump();
  auto append = [&](const double* p, Index count) {
    bytes.append(reinterpret_cast<const char*>(p), static_cast<size_t>(count) * sizeof(double));
  };
  append(q.data(), q.size());
  append(alpha.data(), alpha.size());
  append(&aleph, 1);
  return sha256_hex(bytes.data(), bytes.size());
}

}  // namespace bllab
