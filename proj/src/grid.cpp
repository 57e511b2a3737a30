#include "bllab/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bllab/errors.hpp"

namespace bllab {

namespace {

double trapezoid_1d(int i, int count, double h) {
  return (i == 0 || i == count - 1) ? 0.5 * h : h;
}

}  // namespace

std::shared_ptr<const Grid> Grid::build(int n, std::vector<double> side_lengths,
                                        std::vector<int> nodes_per_axis) {
  if (n < 1 || n > 3) throw ValidationError("grid dimension must be 1, 2 or 3, got " + std::to_string(n));
  if (static_cast<int>(side_lengths.size()) != n || static_cast<int>(nodes_per_axis.size()) != n)
    throw ValidationError("grid: side_lengths and nodes_per_axis need one entry per axis");
  for (int d = 0; d < n; ++d) {
    if (!(side_lengths[static_cast<size_t>(d)] > 0.0)) throw ValidationError("grid: side lengths must be positive");
    if (nodes_per_axis[static_cast<size_t>(d)] < 3) throw ValidationError("grid: need at least 3 nodes per axis");
  }

  std::shared_ptr<Grid> g(new Grid());
  g->n_ = n;
  g->sides_ = std::move(side_lengths);
  g->counts_ = std::move(nodes_per_axis);
  g->spacing_.resize(static_cast<size_t>(n));
  g->node_count_ = 1;
  for (int d = 0; d < n; ++d) {
    g->spacing_[static_cast<size_t>(d)] = g->sides_[static_cast<size_t>(d)] / (g->counts_[static_cast<size_t>(d)] - 1);
    g->node_count_ *= g->counts_[static_cast<size_t>(d)];
  }

  g->weights_.resize(g->node_count_);
  for (Index i = 0; i < g->node_count_; ++i) {
    const auto ijk = g->node_ijk(i);
    double w = 1.0;
    for (int d = 0; d < n; ++d)
      w *= trapezoid_1d(ijk[static_cast<size_t>(d)], g->counts_[static_cast<size_t>(d)], g->spacing_[static_cast<size_t>(d)]);
    g->weights_[i] = w;
  }

  for (Index i = 0; i < g->node_count_; ++i) {
    const auto ijk = g->node_ijk(i);
    for (int axis = 0; axis < n; ++axis) {
      if (ijk[static_cast<size_t>(axis)] + 1 >= g->counts_[static_cast<size_t>(axis)]) continue;
      double w = 1.0 / g->spacing_[static_cast<size_t>(axis)];
      for (int d = 0; d < n; ++d)
        if (d != axis)
          w *= trapezoid_1d(ijk[static_cast<size_t>(d)], g->counts_[static_cast<size_t>(d)], g->spacing_[static_cast<size_t>(d)]);
      auto next = ijk;
      next[static_cast<size_t>(axis)] += 1;
      g->edges_.push_back({i, g->node_index(next), w});
    }
  }

  for (int axis = 0; axis < n; ++axis) {
    for (int side = 0; side < 2; ++side) {
      Face f;
      f.axis = axis;
      f.side = side;
      f.normal[static_cast<size_t>(axis)] = side == 0 ? -1.0 : 1.0;
      std::array<int, 2> other{-1, -1};
      int m = 0;
      for (int d = 0; d < n; ++d)
        if (d != axis) other[static_cast<size_t>(m++)] = d;
      const int c0 = m > 0 ? g->counts_[static_cast<size_t>(other[0])] : 1;
      const int c1 = m > 1 ? g->counts_[static_cast<size_t>(other[1])] : 1;
      const int fixed = side == 0 ? 0 : g->counts_[static_cast<size_t>(axis)] - 1;
      for (int b = 0; b < c1; ++b) {
        for (int a = 0; a < c0; ++a) {
          std::array<int, 3> ijk{0, 0, 0};
          ijk[static_cast<size_t>(axis)] = fixed;
          double w = 1.0;
          if (m > 0) {
            ijk[static_cast<size_t>(other[0])] = a;
            w *= trapezoid_1d(a, c0, g->spacing_[static_cast<size_t>(other[0])]);
          }
          if (m > 1) {
            ijk[static_cast<size_t>(other[1])] = b;
            w *= trapezoid_1d(b, c1, g->spacing_[static_cast<size_t>(other[1])]);
          }
          f.nodes.push_back(g->node_index(ijk));
          f.weights.push_back(w);
        }
      }
      g->faces_.push_back(std::move(f));
    }
  }

  Index total = 0;
  for (const auto& f : g->faces_) {
    g->face_offsets_.push_back(total);
    total += static_cast<Index>(f.nodes.size());
  }
  g->bweights_.resize(total);
  Index e = 0;
  for (const auto& f : g->faces_) {
    for (size_t k = 0; k < f.nodes.size(); ++k, ++e) {
      g->bnodes_.push_back(f.nodes[k]);
      g->bweights_[e] = f.weights[k];
      g->bnormals_.push_back(f.normal);
    }
  }
  return g;
}

double Grid::max_spacing() const { return *std::max_element(spacing_.begin(), spacing_.end()); }

Index Grid::node_index(const std::array<int, 3>& ijk) const {
  Index idx = 0;
  Index stride = 1;
  for (int d = 0; d < n_; ++d) {
    idx += stride * ijk[static_cast<size_t>(d)];
    stride *= counts_[static_cast<size_t>(d)];
  }
  return idx;
}

std::array<int, 3> Grid::node_ijk(Index node) const {
  std::array<int, 3> ijk{0, 0, 0};
  for (int d = 0; d < n_; ++d) {
    const int c = counts_[static_cast<size_t>(d)];
    ijk[static_cast<size_t>(d)] = static_cast<int>(node % c);
    node /= c;
  }
  return ijk;
}

Point Grid::coord(Index node) const {
  const auto ijk = node_ijk(node);
  Point x{0.0, 0.0, 0.0};
  for (int d = 0; d < n_; ++d)
    x[static_cast<size_t>(d)] = ijk[static_cast<size_t>(d)] * spacing_[static_cast<size_t>(d)];
  return x;
}

Point Grid::center() const {
  Point c{0.0, 0.0, 0.0};
  for (int d = 0; d < n_; ++d) c[static_cast<size_t>(d)] = 0.5 * sides_[static_cast<size_t>(d)];
  return c;
}

double Grid::volume() const {
  double v = 1.0;
  for (double s : sides_) v *= s;
  return v;
}

double Grid::surface_area() const {
  if (n_ == 1) return 2.0;
  double total = 0.0;
  for (int d = 0; d < n_; ++d) total += 2.0 * volume() / sides_[static_cast<size_t>(d)];
  return total;
}

bool Grid::same_as(const Grid& other) const {
  return this == &other || (n_ == other.n_ && sides_ == other.sides_ && counts_ == other.counts_);
}

void require_same_grid(const Grid& a, const Grid& b, const char* what) {
  if (!a.same_as(b)) throw ValidationError(std::string(what) + ": grid mismatch");
}

ScalarField::ScalarField(GridPtr g) : grid(std::move(g)), values(Eigen::VectorXcd::Zero(grid->node_count())) {}

ScalarField::ScalarField(GridPtr g, Eigen::VectorXcd v) : grid(std::move(g)), values(std::move(v)) {
  if (values.size() != grid->node_count()) throw ValidationError("ScalarField: value count differs from node count");
}

bool ScalarField::is_real(double tol) const { return values.imag().cwiseAbs().maxCoeff() <= tol; }

BoundaryFunction::BoundaryFunction(GridPtr g)
    : grid(std::move(g)), values(Eigen::VectorXcd::Zero(grid->boundary_count())) {}

BoundaryFunction::BoundaryFunction(GridPtr g, Eigen::VectorXcd v) : grid(std::move(g)), values(std::move(v)) {
  if (values.size() != grid->boundary_count())
    throw ValidationError("BoundaryFunction: value count differs from boundary entry count");
}

BoundaryFunction trace(const ScalarField& u) {
  BoundaryFunction out(u.grid);
  const auto& nodes = u.grid->boundary_nodes();
  for (Index e = 0; e < out.values.size(); ++e) out.values[e] = u.values[nodes[static_cast<size_t>(e)]];
  return out;
}

Eigen::VectorXd trace(const Grid& grid, const Eigen::VectorXd& nodal) {
  const auto& nodes = grid.boundary_nodes();
  Eigen::VectorXd out(grid.boundary_count());
  for (Index e = 0; e < out.size(); ++e) out[e] = nodal[nodes[static_cast<size_t>(e)]];
  return out;
}

}  // namespace bllab
