#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

namespace bllab {

using cplx = std::complex<double>;
using Index = std::int64_t;
using Point = std::array<double, 3>;

/// One face of the box: nodes listed row-major over the remaining axes
/// (lowest remaining axis fastest), with trapezoidal surface weights.
struct Face {
  int axis = 0;
  int side = 0;  // 0 = min, 1 = max
  Point normal{0.0, 0.0, 0.0};
  std::vector<Index> nodes;
  std::vector<double> weights;
};

/// Grid edge (a, a + e_axis) with stiffness weight
/// (product of the trapezoid weights of the other axes) / h_axis.
struct Edge {
  Index a = 0;
  Index b = 0;
  double w = 0.0;
};

/// Vertex-centered axis-aligned box [0, L_0] x ... x [0, L_{n-1}].
///
/// Nodes are numbered with axis 0 fastest. Boundary quantities live on the
/// concatenation of the 2n faces in the order x_min, x_max, y_min, y_max,
/// z_min, z_max; edge and corner nodes therefore appear once per face that
/// contains them.
class Grid {
 public:
  static std::shared_ptr<const Grid> build(int n, std::vector<double> side_lengths,
                                           std::vector<int> nodes_per_axis);

  int dim() const { return n_; }
  const std::vector<double>& side_lengths() const { return sides_; }
  const std::vector<int>& nodes_per_axis() const { return counts_; }
  const std::vector<double>& spacing() const { return spacing_; }
  double max_spacing() const;

  Index node_count() const { return node_count_; }
  Index boundary_count() const { return static_cast<Index>(bnodes_.size()); }

  Index node_index(const std::array<int, 3>& ijk) const;
  std::array<int, 3> node_ijk(Index node) const;
  Point coord(Index node) const;
  Point center() const;

  /// Trapezoidal volume weights per node; they sum to the box volume.
  const Eigen::VectorXd& weights() const { return weights_; }
  const std::vector<Face>& faces() const { return faces_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Face-ordered boundary entries: node id, surface weight, outward normal.
  const std::vector<Index>& boundary_nodes() const { return bnodes_; }
  const Eigen::VectorXd& boundary_weights() const { return bweights_; }
  const std::vector<Point>& boundary_normals() const { return bnormals_; }
  /// Offset of face f inside the boundary entry list.
  Index face_offset(int f) const { return face_offsets_[static_cast<size_t>(f)]; }

  double volume() const;
  double surface_area() const;

  bool same_as(const Grid& other) const;

 private:
  Grid() = default;

  int n_ = 0;
  std::vector<double> sides_;
  std::vector<int> counts_;
  std::vector<double> spacing_;
  Index node_count_ = 0;
  Eigen::VectorXd weights_;
  std::vector<Face> faces_;
  std::vector<Edge> edges_;
  std::vector<Index> bnodes_;
  Eigen::VectorXd bweights_;
  std::vector<Point> bnormals_;
  std::vector<Index> face_offsets_;
};

using GridPtr = std::shared_ptr<const Grid>;

/// Complex values on every node (interior and boundary) of a grid.
struct ScalarField {
  GridPtr grid;
  Eigen::VectorXcd values;

  ScalarField() = default;
  explicit ScalarField(GridPtr g);
  ScalarField(GridPtr g, Eigen::VectorXcd v);

  template <class F>
  static ScalarField from_function(GridPtr g, F&& f) {
    ScalarField out(g);
    for (Index i = 0; i < g->node_count(); ++i) out.values[i] = cplx(f(g->coord(i)));
    return out;
  }

  bool is_real(double tol = 0.0) const;
};

/// Complex values on the face-ordered boundary entries of a grid.
struct BoundaryFunction {
  GridPtr grid;
  Eigen::VectorXcd values;

  BoundaryFunction() = default;
  explicit BoundaryFunction(GridPtr g);
  BoundaryFunction(GridPtr g, Eigen::VectorXcd v);

  template <class F>
  static BoundaryFunction from_function(GridPtr g, F&& f) {
    BoundaryFunction out(g);
    const auto& nodes = g->boundary_nodes();
    const auto& normals = g->boundary_normals();
    for (Index e = 0; e < g->boundary_count(); ++e)
      out.values[e] = cplx(f(g->coord(nodes[static_cast<size_t>(e)]), normals[static_cast<size_t>(e)]));
    return out;
  }
};

/// Restriction u|_Γ in face order.
BoundaryFunction trace(const ScalarField& u);
Eigen::VectorXd trace(const Grid& grid, const Eigen::VectorXd& nodal);

void require_same_grid(const Grid& a, const Grid& b, const char* what);

}  // namespace bllab
