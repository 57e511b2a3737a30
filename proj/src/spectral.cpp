#include "bllab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "bllab/errors.hpp"

namespace bllab {

namespace {

void random_block(Eigen::MatrixXd& w, std::mt19937_64& rng) {
  for (Index j = 0; j < w.cols(); ++j)
    for (Index i = 0; i < w.rows(); ++i) w(i, j) = unit_uniform(rng()) - 0.5;
}

Eigen::MatrixXd thin_q(const Eigen::MatrixXd& a) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
}

// Classical Gram-Schmidt against the first m basis columns.
void reorthogonalize(const Eigen::MatrixXd& basis, Index m, Eigen::MatrixXd& w, int passes = 2) {
  if (m == 0) return;
  for (int pass = 0; pass < passes; ++pass) {
    const auto q = basis.leftCols(m);
    w.noalias() -= q * (q.transpose() * w);
  }
}

// Orthonormalize w in place; returns R with w_in = Q R. Deflated columns are
// replaced by fresh random directions orthogonal to the basis.
Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& basis, Index m, Eigen::MatrixXd& w, std::mt19937_64& rng) {
  const Eigen::MatrixXd w0 = w;
  const double scale = std::max(1e-300, w0.norm());
  for (int attempt = 0; attempt < 3; ++attempt) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
    const Eigen::MatrixXd r = qr.matrixQR().topRows(w.cols()).triangularView<Eigen::Upper>();
    bool deficient = false;
    for (Index c = 0; c < w.cols(); ++c) {
      if (std::abs(r(c, c)) < 1e-10 * scale) {
        Eigen::MatrixXd fresh(w.rows(), 1);
        random_block(fresh, rng);
        w.col(c) = fresh.col(0);
        deficient = true;
      }
    }
    if (deficient) {
      reorthogonalize(basis, m, w);
      continue;
    }
    w = qr.householderQ() * Eigen::MatrixXd::Identity(w.rows(), w.cols());
    reorthogonalize(basis, m, w, 1);
    w = thin_q(w);
    return w.transpose() * w0;
  }
  throw NumericalError("eig: block Lanczos could not extend the Krylov basis");
}

void canonical_signs(Eigen::MatrixXd& psis, Eigen::MatrixXd* phis) {
  for (Index k = 0; k < psis.cols(); ++k) {
    Index imax = 0;
    psis.col(k).cwiseAbs().maxCoeff(&imax);
    if (psis(imax, k) < 0.0) {
      psis.col(k) *= -1.0;
      if (phis != nullptr && phis->cols() > 0) phis->col(k) *= -1.0;
    }
  }
}


std::vector<double> pencil_residuals(const RobinOperator& op, const Eigen::MatrixXd& phis, const Eigen::VectorXd& lambdas,
                                     Eigen::MatrixXd* r_out) {
  const Eigen::VectorXd& w = op.mass();
  Eigen::MatrixXd r = op.matrix() * phis;
  std::vector<double> out(static_cast<size_t>(phis.cols()));
  for (Index k = 0; k < phis.cols(); ++k) {
    r.col(k) -= lambdas[k] * w.cwiseProduct(phis.col(k));
    out[static_cast<size_t>(k)] = std::sqrt(r.col(k).cwiseAbs2().cwiseQuotient(w).sum());
  }
  if (r_out != nullptr) *r_out = std::move(r);
  return out;
}

// Rayleigh-Ritz on the original pencil over span[Φ, F⁻¹R]; the projected matrices use M
// directly, so the result is not limited by the accuracy of the shift-invert solves.
double refine(const RobinOperator& op, Eigen::MatrixXd& phis, Eigen::VectorXd& lambdas, double tol) {
  const Index K = phis.cols();
  const Eigen::VectorXd sqrt_b = op.mass().cwiseSqrt();
  double prev = std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < 4; ++sweep) {
    Eigen::MatrixXd r;
    const auto res = pencil_residuals(op, phis, lambdas, &r);
    const double worst = *std::max_element(res.begin(), res.end());
    if (worst <= tol || worst > 0.5 * prev) break;
    prev = worst;
    Eigen::MatrixXd z(phis.rows(), 2 * K);
    z.leftCols(K) = sqrt_b.asDiagonal() * phis;
    z.leftCols(K) = thin_q(z.leftCols(K));
    Eigen::MatrixXd corr = sqrt_b.asDiagonal() * op.anchor_factor().solve(r);
    for (int pass = 0; pass < 2; ++pass) corr.noalias() -= z.leftCols(K) * (z.leftCols(K).transpose() * corr);
    z.rightCols(K) = thin_q(corr);
    const Eigen::MatrixXd basis = sqrt_b.cwiseInverse().asDiagonal() * z;
    Eigen::MatrixXd proj = basis.transpose() * (op.matrix() * basis);
    proj = 0.5 * (proj + proj.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(proj);
    if (es.info() != Eigen::Success) throw NumericalError("eig: refinement eigenproblem failed");
    lambdas = es.eigenvalues().head(K);
    phis = basis * es.eigenvectors().leftCols(K);
  }
  const auto res = pencil_residuals(op, phis, lambdas, nullptr);
  return *std::max_element(res.begin(), res.end());
}

}  // namespace

BoundaryFunction SpectralDataset::psi(int k) const {
  return BoundaryFunction(grid, psis.col(k).cast<cplx>());
}

SpectralDataset eig(const RobinOperator& op, int K, bool keep_interior, const EigOptions& opts) {
  const Grid& g = *op.grid();
  const Index n = g.node_count();
  if (K < 1) throw ValidationError("eig: K must be >= 1");
  if (static_cast<double>(K) > 0.2 * static_cast<double>(n))
    throw ValidationError("eig: K exceeds 20% of the matrix dimension");

  const double shift = op.anchor_shift();
  const SpdFactor& factor = op.anchor_factor();
  const Eigen::VectorXd sqrt_b = g.weights().cwiseSqrt();
  auto apply = [&](const Eigen::MatrixXd& y) -> Eigen::MatrixXd {
    const Eigen::MatrixXd rhs = sqrt_b.asDiagonal() * y;
    return sqrt_b.asDiagonal() * factor.solve(rhs);
  };

  const Index b = std::max<Index>(1, std::min<Index>(opts.block_size, n / 8));
  Index cap = opts.max_basis > 0 ? opts.max_basis : 2 * K + 10 * b + 50;
  cap = std::min(cap, n - b);
  const Index hard_cap = std::min<Index>(n - b, std::max<Index>(cap, 5 * cap / 2));

  std::mt19937_64 rng(opts.seed);
  Eigen::MatrixXd basis(n, cap + b);
  Eigen::MatrixXd w(n, b);
  random_block(w, rng);
  orthonormalize(basis, 0, w, rng);
  basis.leftCols(b) = w;

  std::vector<Eigen::MatrixXd> alphas;
  std::vector<Eigen::MatrixXd> betas;  // betas[j] couples block j and j+1
  Index m = b;                         // columns in use
  Index next_check = K + 2 * b;
  Eigen::VectorXd theta;
  Eigen::MatrixXd ritz;
  bool converged = false;
  double worst = 0.0;

  while (!converged) {
    const Index j = static_cast<Index>(alphas.size());
    const auto qj = basis.middleCols(j * b, b);
    w = apply(qj);
    Eigen::MatrixXd a = qj.transpose() * w;
    a = 0.5 * (a + a.transpose()).eval();
    w.noalias() -= qj * a;
    if (j > 0) w.noalias() -= basis.middleCols((j - 1) * b, b) * betas.back().transpose();
    reorthogonalize(basis, m, w, 1);
    alphas.push_back(a);
    betas.push_back(orthonormalize(basis, m, w, rng));

    if (m >= next_check || m + b > cap) {
      const Index blocks = static_cast<Index>(alphas.size());
      const Index dim = blocks * b;
      Eigen::MatrixXd t = Eigen::MatrixXd::Zero(dim, dim);
      for (Index i = 0; i < blocks; ++i) {
        t.block(i * b, i * b, b, b) = alphas[static_cast<size_t>(i)];
        if (i + 1 < blocks) {
          t.block((i + 1) * b, i * b, b, b) = betas[static_cast<size_t>(i)];
          t.block(i * b, (i + 1) * b, b, b) = betas[static_cast<size_t>(i)].transpose();
        }
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
      if (es.info() != Eigen::Success) throw NumericalError("eig: projected eigenproblem failed");
      const Eigen::VectorXd& ev = es.eigenvalues();
      worst = 0.0;
      if (dim >= K) {
        for (Index i = 0; i < K; ++i) {
          const Index col = dim - 1 - i;
          const double res = (betas.back() * es.eigenvectors().block(dim - b, col, b, 1)).norm();
          // Residual of the original pencil is roughly the inverted one scaled by (λ + s)².
          worst = std::max(worst, res / (ev[col] * ev[col]));
        }
        converged = worst <= opts.tol;
      }
      if (converged) {
        theta.resize(K);
        Eigen::MatrixXd s(dim, K);
        for (Index i = 0; i < K; ++i) {
          theta[i] = ev[dim - 1 - i];
          s.col(i) = es.eigenvectors().col(dim - 1 - i);
        }
        ritz = basis.leftCols(dim) * s;
        break;
      }
      next_check = m + std::max<Index>(b, m / 4);
    }

    if (m + b > cap) {
      if (cap >= hard_cap) {
        throw NumericalError("eig: Lanczos did not converge (estimated residual " + std::to_string(worst) +
                             ")");
      }
      cap = std::min(hard_cap, cap + cap / 2);
      basis.conservativeResize(Eigen::NoChange, cap + b);
    }
    basis.middleCols(m, b) = w;
    m += b;
  }

  SpectralDataset ds;
  ds.grid = op.grid();
  ds.alpha = op.alpha();
  ds.operator_hash = op.hash();
  ds.lambdas.resize(K);
  for (Index i = 0; i < K; ++i) ds.lambdas[i] = 1.0 / theta[i] - shift;

  Eigen::MatrixXd phis = sqrt_b.cwiseInverse().asDiagonal() * ritz;
  const double true_residual = refine(op, phis, ds.lambdas, opts.tol);
  ds.psis.resize(g.boundary_count(), K);
  for (Index k = 0; k < K; ++k) ds.psis.col(k) = trace(g, phis.col(k));
  canonical_signs(ds.psis, &phis);
  if (keep_interior) ds.phis = std::move(phis);

  ds.meta["lambda_star"] = op.constants().lambda_star;
  ds.meta["anchor_shift"] = shift;
  ds.meta["krylov_dim"] = m;
  ds.meta["ritz_residual"] = worst;
  ds.meta["eigen_residual"] = true_residual;
  ds.meta["block_size"] = b;
  ds.meta["grid_dim"] = g.dim();
  return ds;
}

DatasetChecks check_dataset(const SpectralDataset& ds, const RobinOperator& op) {
  DatasetChecks out;
  const Grid& g = *op.grid();
  const double ls = op.constants().lambda_star;
  for (int k = 0; k < ds.K(); ++k) {
    if (k > 0 && ds.lambdas[k] < ds.lambdas[k - 1]) out.nondecreasing = false;
    if (!(ds.lambdas[k] > -ls)) out.above_lower_bound = false;
  }
  if (!ds.has_phis()) return out;
  const Eigen::VectorXd& w = g.weights();
  const Eigen::MatrixXd gram = ds.phis.transpose() * w.asDiagonal() * ds.phis;
  out.gram_error = (gram - Eigen::MatrixXd::Identity(ds.K(), ds.K())).cwiseAbs().maxCoeff();
  const Eigen::MatrixXd mphi = op.matrix() * ds.phis;
  const auto& bw = g.boundary_weights();
  for (int k = 0; k < ds.K(); ++k) {
    const Eigen::VectorXd r = mphi.col(k) - ds.lambdas[k] * w.cwiseProduct(ds.phis.col(k));
    const double rn = std::sqrt(r.cwiseAbs2().cwiseQuotient(w).sum());
    const double pn = std::sqrt(ds.phis.col(k).cwiseAbs2().dot(w));
    out.eigen_residual = std::max(out.eigen_residual, rn / pn);
    const Eigen::VectorXcd dn = normal_derivative_values(g, ds.phis.col(k).cast<cplx>());
    double s = 0.0;
    for (Index e = 0; e < g.boundary_count(); ++e) s += bw[e] * std::norm(dn[e] + op.alpha()[e] * ds.psis(e, k));
    out.robin_residual = std::max(out.robin_residual, std::sqrt(s) / (1.0 + std::abs(ds.lambdas[k])));
  }
  return out;
}

double weyl_constant(const Eigen::VectorXd& lambdas, int n, int k_min, int k_max) {
  double c = 1.0;
  for (int k = k_min; k <= k_max; ++k) {
    const double lhs = 1.0 + std::abs(lambdas[k - 1]);
    const double ref = std::pow(static_cast<double>(k), 2.0 / n);
    c = std::max({c, lhs / ref, ref / lhs});
  }
  return c;
}

WeylFit weyl_fit(const SpectralDataset& ds, int n, int k_min, int k_max) {
  const int K = ds.K();
  if (K < 30) throw ValidationError("weyl_fit: need K >= 30");
  if (n < 1) throw ValidationError("weyl_fit: dimension must be positive");
  WeylFit fit;
  fit.k_min = k_min > 0 ? k_min : std::max(1, (K + 2) / 3);
  fit.k_max = k_max > 0 ? k_max : K;
  if (fit.k_min >= fit.k_max || fit.k_max > K) throw ValidationError("weyl_fit: bad fit range");
  const int count = fit.k_max - fit.k_min + 1;
  Eigen::VectorXd x(count), y(count);
  for (int i = 0; i < count; ++i) {
    const int k = fit.k_min + i;
    x[i] = std::log(static_cast<double>(k));
    y[i] = std::log(1.0 + std::abs(ds.lambdas[k - 1]));
  }
  const double mx = x.mean();
  const double my = y.mean();
  const double sxx = (x.array() - mx).square().sum();
  fit.slope = ((x.array() - mx) * (y.array() - my)).sum() / sxx;
  const Eigen::ArrayXd res = y.array() - my - fit.slope * (x.array() - mx);
  fit.residual = std::sqrt(res.square().mean());
  fit.slope_stderr = count > 2 ? std::sqrt(res.square().sum() / (count - 2) / sxx) : 0.0;
  fit.C = weyl_constant(ds.lambdas, n, fit.k_min, fit.k_max);
  return fit;
}

namespace {

// Second-order first derivative along an axis: centered inside, one-sided at the ends.
Eigen::VectorXd axis_derivative(const Grid& g, const Eigen::VectorXd& u, int axis) {
  Eigen::VectorXd out(u.size());
  const size_t ax = static_cast<size_t>(axis);
  const int c = g.nodes_per_axis()[ax];
  const double h = g.spacing()[ax];
  for (Index i = 0; i < u.size(); ++i) {
    auto ijk = g.node_ijk(i);
    const int k = ijk[ax];
    auto at = [&](int kk) {
      ijk[ax] = kk;
      return u[g.node_index(ijk)];
    };
    if (k == 0) {
      out[i] = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
    } else if (k == c - 1) {
      out[i] = (3.0 * at(c - 1) - 4.0 * at(c - 2) + at(c - 3)) / (2.0 * h);
    } else {
      out[i] = (at(k + 1) - at(k - 1)) / (2.0 * h);
    }
  }
  return out;
}

Eigen::VectorXd axis_second_derivative(const Grid& g, const Eigen::VectorXd& u, int axis) {
  Eigen::VectorXd out(u.size());
  const size_t ax = static_cast<size_t>(axis);
  const int c = g.nodes_per_axis()[ax];
  const double h2 = g.spacing()[ax] * g.spacing()[ax];
  for (Index i = 0; i < u.size(); ++i) {
    auto ijk = g.node_ijk(i);
    const int k = ijk[ax];
    auto at = [&](int kk) {
      ijk[ax] = kk;
      return u[g.node_index(ijk)];
    };
    if (k > 0 && k < c - 1) {
      out[i] = (at(k - 1) - 2.0 * at(k) + at(k + 1)) / h2;
    } else if (c < 4) {
      out[i] = (at(0) - 2.0 * at(1) + at(2)) / h2;
    } else {
      const int s = k == 0 ? 1 : -1;
      out[i] = (2.0 * at(k) - 5.0 * at(k + s) + 4.0 * at(k + 2 * s) - at(k + 3 * s)) / h2;
    }
  }
  return out;
}

}  // namespace

double h2_norm(const Grid& g, const Eigen::VectorXd& u) {
  const Eigen::VectorXd& w = g.weights();
  auto sq = [&](const Eigen::VectorXd& v) { return v.cwiseAbs2().dot(w); };
  double total = sq(u);
  std::vector<Eigen::VectorXd> d1;
  for (int a = 0; a < g.dim(); ++a) {
    d1.push_back(axis_derivative(g, u, a));
    total += sq(d1.back());
    total += sq(axis_second_derivative(g, u, a));
  }
  for (int a = 0; a < g.dim(); ++a)
    for (int c = a + 1; c < g.dim(); ++c) total += 2.0 * sq(axis_derivative(g, d1[static_cast<size_t>(a)], c));
  return std::sqrt(total);
}

std::vector<double> h2_diagnostic(const SpectralDataset& ds, const RobinOperator& op) {
  if (!ds.has_phis()) throw ValidationError("h2_diagnostic: dataset has no interior eigenfields");
  require_same_grid(*ds.grid, *op.grid(), "h2_diagnostic");
  std::vector<double> out;
  for (int k = 0; k < ds.K(); ++k)
    out.push_back(h2_norm(*ds.grid, ds.phis.col(k)) / (1.0 + std::abs(ds.lambdas[k])));
  return out;
}

SpectralDataset align(const SpectralDataset& ds, const SpectralDataset& ref, double gap_tol) {
  if (ds.K() != ref.K()) throw ValidationError("align: K mismatch");
  require_same_grid(*ds.grid, *ref.grid, "align");
  SpectralDataset out = ds;
  const Eigen::VectorXd& bw = ds.grid->boundary_weights();
  int start = 0;
  while (start < ds.K()) {
    int end = start + 1;
    while (end < ds.K() &&
           ds.lambdas[end] - ds.lambdas[end - 1] < gap_tol * (1.0 + std::abs(ds.lambdas[end - 1])))
      ++end;
    const int size = end - start;
    const Eigen::MatrixXd cross =
        ds.psis.middleCols(start, size).transpose() * bw.asDiagonal() * ref.psis.middleCols(start, size);
    Eigen::MatrixXd rot;
    if (size == 1) {
      rot = Eigen::MatrixXd::Constant(1, 1, cross(0, 0) < 0.0 ? -1.0 : 1.0);
    } else {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
      rot = svd.matrixU() * svd.matrixV().transpose();
      if ((rot - Eigen::MatrixXd::Identity(size, size)).cwiseAbs().maxCoeff() <= 1e-10)
        rot = Eigen::MatrixXd::Identity(size, size);
    }
    if (!rot.isIdentity(0.0)) {
      out.psis.middleCols(start, size) = ds.psis.middleCols(start, size) * rot;
      if (ds.has_phis()) out.phis.middleCols(start, size) = ds.phis.middleCols(start, size) * rot;
    }
    start = end;
  }
  out.aligned_to = ref.operator_hash;
  return out;
}

void write_dataset(const std::string& path, const SpectralDataset& ds) {
  nlohmann::json h;
  h["K"] = ds.K();
  h["grid"] = grid_to_json(*ds.grid);
  h["lambdas"] = std::vector<double>(ds.lambdas.data(), ds.lambdas.data() + ds.lambdas.size());
  h["has_phis"] = ds.has_phis();
  h["has_alpha"] = ds.alpha.size() > 0;
  h["operator_hash"] = ds.operator_hash;
  h["aligned_to"] = ds.aligned_to;
  h["meta"] = ds.meta;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open for writing: " + path);
  out << h.dump() << '\n';
  auto write_block = [&](const Eigen::MatrixXd& m) {
    std::vector<cplx> buf(static_cast<size_t>(m.rows()));
    for (Index k = 0; k < m.cols(); ++k) {
      for (Index i = 0; i < m.rows(); ++i) buf[static_cast<size_t>(i)] = cplx(m(i, k), 0.0);
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(cplx)));
    }
  };
  write_block(ds.psis);
  if (ds.has_phis()) write_block(ds.phis);
  if (ds.alpha.size() > 0) write_block(ds.alpha);
  if (!out) throw ValidationError("write failed: " + path);
}

SpectralDataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset: " + path);
  std::string line;
  std::getline(in, line);
  SpectralDataset ds;
  int K = 0;
  bool has_phis = false;
  bool has_alpha = false;
  try {
    const auto h = nlohmann::json::parse(line);
    K = h.at("K").get<int>();
    ds.grid = grid_from_json(h.at("grid"));
    const auto l = h.at("lambdas").get<std::vector<double>>();
    if (static_cast<int>(l.size()) != K) throw ValidationError(path + ": lambda count differs from K");
    ds.lambdas = Eigen::Map<const Eigen::VectorXd>(l.data(), K);
    has_phis = h.at("has_phis").get<bool>();
    has_alpha = h.value("has_alpha", false);
    ds.operator_hash = h.value("operator_hash", "");
    ds.aligned_to = h.value("aligned_to", "");
    ds.meta = h.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad dataset header in " + path + ": " + e.what());
  }
  auto read_block = [&](Index rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    std::vector<cplx> buf(static_cast<size_t>(rows));
    for (int k = 0; k < cols; ++k) {
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(cplx)));
      if (in.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(cplx)))
        throw ValidationError(path + ": truncated data block");
      for (Index i = 0; i < rows; ++i) m(i, k) = buf[static_cast<size_t>(i)].real();
    }
    return m;
  };
  ds.psis = read_block(ds.grid->boundary_count(), K);
  if (has_phis) ds.phis = read_block(ds.grid->node_count(), K);
  if (has_alpha) ds.alpha = read_block(ds.grid->boundary_count(), 1).col(0);
  return ds;
}

}  // namespace bllab
