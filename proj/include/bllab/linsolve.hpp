#pragma once

#include <memory>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "bllab/grid.hpp"

namespace bllab {

using SparseReal = Eigen::SparseMatrix<double>;
using SparseComplex = Eigen::SparseMatrix<cplx>;

/// Sparse Cholesky factorization of a symmetric positive definite matrix.
class SpdFactor {
 public:
  SpdFactor();
  explicit SpdFactor(const SparseReal& a);
  ~SpdFactor();
  SpdFactor(SpdFactor&&) noexcept;
  SpdFactor& operator=(SpdFactor&&) noexcept;

  /// Returns false (instead of throwing) when the matrix is not positive definite.
  bool compute(const SparseReal& a);
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;
  Eigen::VectorXcd solve(const Eigen::VectorXcd& b) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Sparse LU factorization of a general complex matrix.
class ComplexFactor {
 public:
  ComplexFactor();
  explicit ComplexFactor(const SparseComplex& a);
  ~ComplexFactor();
  ComplexFactor(ComplexFactor&&) noexcept;
  ComplexFactor& operator=(ComplexFactor&&) noexcept;

  Eigen::VectorXcd solve(const Eigen::VectorXcd& b) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bllab
