#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>

namespace uscme {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

inline constexpr Complex imag_unit{0.0, 1.0};

/// Dense complex operator on a finite-dimensional Hilbert space.
/// Squareness is enforced at construction; everything downstream may assume
/// rows == cols == dim. Frequencies are angular with hbar = 1, so Hamiltonian
/// entries are in the same units as the rates and temperatures they meet.
class Operator {
 public:
  Operator() = default;
  explicit Operator(Matrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols())
      throw std::invalid_argument("Operator: matrix must be square, got " +
                                  std::to_string(m_.rows()) + "x" +
                                  std::to_string(m_.cols()));
  }

  static Operator zero(int dim) { return Operator(Matrix::Zero(dim, dim)); }
  static Operator identity(int dim) {
    return Operator(Matrix::Identity(dim, dim));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& mat() const { return m_; }
  Complex operator()(int r, int c) const { return m_(r, c); }

  Operator& operator+=(const Operator& o) {
    check_dim(o);
    m_ += o.m_;
    return *this;
  }
  Operator& operator-=(const Operator& o) {
    check_dim(o);
    m_ -= o.m_;
    return *this;
  }
  Operator& operator*=(Complex z) {
    m_ *= z;
    return *this;
  }

  friend Operator operator+(Operator a, const Operator& b) { return a += b; }
  friend Operator operator-(Operator a, const Operator& b) { return a -= b; }
  friend Operator operator*(Complex z, Operator a) { return a *= z; }
  friend Operator operator*(Operator a, Complex z) { return a *= z; }
  friend Operator operator*(const Operator& a, const Operator& b) {
    a.check_dim(b);
    return Operator(a.m_ * b.m_);
  }

  void check_dim(const Operator& o) const {
    if (o.dim() != dim())
      throw std::invalid_argument("Operator: dimension mismatch (" +
                                  std::to_string(dim()) + " vs " +
                                  std::to_string(o.dim()) + ")");
  }

 private:
  Matrix m_;
};

/// Kronecker product; subsystem `a` carries the slow (outer) index.
inline Operator kron(const Operator& a, const Operator& b) {
  return Operator(Eigen::kroneckerProduct(a.mat(), b.mat()).eval());
}

inline Operator adjoint(const Operator& a) {
  return Operator(a.mat().adjoint().eval());
}

inline Operator commutator(const Operator& a, const Operator& b) {
  a.check_dim(b);
  return Operator(a.mat() * b.mat() - b.mat() * a.mat());
}

/// Tr(op * rho). Callers keep rho normalized; only dimensions are checked.
inline Complex expectation(const Operator& op, const Operator& rho) {
  op.check_dim(rho);
  return (op.mat() * rho.mat()).trace();
}

inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

/// Max-norm deviation from Hermiticity, relative to the largest entry.
inline double hermiticity_error(const Matrix& m) {
  double scale = std::max(max_abs(m), 1e-300);
  return max_abs(m - m.adjoint()) / scale;
}

// Bosonic ladder operators on a `dim`-level truncated Fock space.
inline Operator destroy(int dim) {
  Matrix a = Matrix::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(double(n));
  return Operator(a);
}

inline Operator create(int dim) { return adjoint(destroy(dim)); }

inline Operator number_op(int dim) {
  Matrix n = Matrix::Zero(dim, dim);
  for (int k = 0; k < dim; ++k) n(k, k) = double(k);
  return Operator(n);
}

/// Eigendecomposition of a Hermitian operator: the dressed basis.
/// energies ascending; vectors unitary, one eigenvector per column, with the
/// global phase of each column fixed so its largest-magnitude component is
/// real and positive.
struct EigenSystem {
  RealVector energies;
  Matrix vectors;

  int dim() const { return static_cast<int>(energies.size()); }
  double max_energy_scale() const {
    return energies.size() == 0 ? 0.0 : energies.cwiseAbs().maxCoeff();
  }

  /// V^dag X V: the matrix of X in the eigenbasis.
  Matrix to_eigenbasis(const Matrix& x) const {
    return vectors.adjoint() * x * vectors;
  }
  /// V X V^dag: back from the eigenbasis.
  Matrix from_eigenbasis(const Matrix& x) const {
    return vectors * x * vectors.adjoint();
  }
};

inline EigenSystem eigh(const Operator& h, double herm_tol = 1e-10) {
  if (hermiticity_error(h.mat()) > herm_tol)
    throw std::invalid_argument(
        "eigh: input is not Hermitian within tolerance");

  // Symmetrize to scrub roundoff-level asymmetry before the solver.
  Matrix hs = 0.5 * (h.mat() + h.mat().adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(hs);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eigh: eigensolver failed to converge");

  EigenSystem eig;
  eig.energies = solver.eigenvalues();  // ascending by construction
  eig.vectors = solver.eigenvectors();

  // Deterministic global phases: largest-magnitude component real positive,
  // first occurrence winning ties.
  for (int k = 0; k < eig.dim(); ++k) {
    int imax = 0;
    double best = 0.0;
    for (int i = 0; i < eig.dim(); ++i) {
      double a = std::abs(eig.vectors(i, k));
      if (a > best) {
        best = a;
        imax = i;
      }
    }
    Complex v = eig.vectors(imax, k);
    if (std::abs(v) > 0.0) eig.vectors.col(k) *= std::conj(v) / std::abs(v);
  }
  return eig;
}

}  // namespace uscme
