#include "bllab/linsolve.hpp"

#include <Eigen/CholmodSupport>
#include <Eigen/UmfPackSupport>

#include "bllab/errors.hpp"

namespace bllab {

struct SpdFactor::Impl {
  Impl() {
    auto& c = llt.cholmod();
    c.nmethods = 1;
    c.method[0].ordering = CHOLMOD_METIS;
    c.postorder = 1;
  }
  Eigen::CholmodSupernodalLLT<SparseReal> llt;
};

SpdFactor::SpdFactor() : impl_(std::make_unique<Impl>()) {}
SpdFactor::SpdFactor(const SparseReal& a) : SpdFactor() {
  if (!compute(a)) throw NumericalError("Cholesky factorization failed: matrix not positive definite");
}
SpdFactor::~SpdFactor() = default;
SpdFactor::SpdFactor(SpdFactor&&) noexcept = default;
SpdFactor& SpdFactor::operator=(SpdFactor&&) noexcept = default;

bool SpdFactor::compute(const SparseReal& a) {
  impl_->llt.compute(a);
  return impl_->llt.info() == Eigen::Success;
}

Eigen::VectorXd SpdFactor::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd x = impl_->llt.solve(b);
  if (impl_->llt.info() != Eigen::Success) throw NumericalError("Cholesky solve failed");
  return x;
}

Eigen::MatrixXd SpdFactor::solve(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd x = impl_->llt.solve(b);
  if (impl_->llt.info() != Eigen::Success) throw NumericalError("Cholesky solve failed");
  return x;
}

Eigen::VectorXcd SpdFactor::solve(const Eigen::VectorXcd& b) const {
  Eigen::MatrixXd rhs(b.size(), 2);
  rhs.col(0) = b.real();
  rhs.col(1) = b.imag();
  const Eigen::MatrixXd x = solve(rhs);
  Eigen::VectorXcd out(b.size());
  out.real() = x.col(0);
  out.imag() = x.col(1);
  return out;
}

struct ComplexFactor::Impl {
  SparseComplex matrix;  // the solver keeps a reference to it
  Eigen::UmfPackLU<SparseComplex> lu;
};

ComplexFactor::ComplexFactor() : impl_(std::make_unique<Impl>()) {}
ComplexFactor::ComplexFactor(const SparseComplex& a) : ComplexFactor() {
  impl_->matrix = a;
  impl_->matrix.makeCompressed();
  impl_->lu.compute(impl_->matrix);
  if (impl_->lu.info() != Eigen::Success) throw NumericalError("sparse LU factorization failed (singular system)");
}
ComplexFactor::~ComplexFactor() = default;
ComplexFactor::ComplexFactor(ComplexFactor&&) noexcept = default;
ComplexFactor& ComplexFactor::operator=(ComplexFactor&&) noexcept = default;

Eigen::VectorXcd ComplexFactor::solve(const Eigen::VectorXcd& b) const {
  Eigen::VectorXcd x(b.size());
  x = impl_->lu.solve(b);
  if (impl_->lu.info() != Eigen::Success) throw NumericalError("sparse LU solve failed");
  return x;
}

}  // namespace bllab
