#pragma once

#include "operator_algebra.hpp"

#include <stdexcept>
#include <vector>

namespace uscme {

/// One matrix element of a coupling quadrature between energy eigenstates:
/// j indexes the lower level, k the higher (or equal), delta = E_k - E_j >= 0,
/// element = <j|(s + s^dag)|k> in the dressed basis.
struct Transition {
  int j = 0;
  int k = 0;
  double delta = 0.0;
  Complex element{};
};

/// The full S(omega) decomposition of one coupling operator: every (j, k)
/// pair with a non-negligible matrix element, exactly once. Entries with
/// delta <= zero_tol are the zero-frequency class.
struct TransitionTable {
  std::vector<Transition> transitions;
  int dim = 0;
  double zero_tol = 0.0;

  bool is_zero_frequency(const Transition& t) const {
    return t.delta <= zero_tol;
  }
};

inline double default_zero_tol(const EigenSystem& eig) {
  return 1e-9 * eig.max_energy_scale();
}

// Matrix elements smaller than this are dropped outright; they contribute
// nothing and inflate the pair loop of the generalized dissipator.
inline constexpr double kElementDropTol = 1e-14;

inline TransitionTable build_transition_table(const Operator& s,
                                              const EigenSystem& eig,
                                              double zero_tol) {
  if (s.dim() != eig.dim())
    throw std::invalid_argument(
        "build_transition_table: operator and eigensystem dimensions differ");
  if (zero_tol < 0.0)
    throw std::invalid_argument("build_transition_table: zero_tol must be >= 0");

  Matrix quad = eig.to_eigenbasis(s.mat() + s.mat().adjoint());

  TransitionTable table;
  table.dim = eig.dim();
  table.zero_tol = zero_tol;
  for (int j = 0; j < eig.dim(); ++j) {
    for (int k = j; k < eig.dim(); ++k) {
      Complex c = quad(j, k);
      if (std::abs(c) <= kElementDropTol) continue;
      table.transitions.push_back(
          Transition{j, k, eig.energies(k) - eig.energies(j), c});
    }
  }
  return table;
}

inline TransitionTable build_transition_table(const Operator& s,
                                              const EigenSystem& eig) {
  return build_transition_table(s, eig, default_zero_tol(eig));
}

/// S^(+) = sum over positive frequencies of S(omega): lowers energy. The
/// returned operator lives in the dressed basis.
inline Operator assemble_s_plus(const TransitionTable& table,
                                const EigenSystem& eig) {
  Matrix m = Matrix::Zero(table.dim, table.dim);
  for (const Transition& t : table.transitions)
    if (!table.is_zero_frequency(t)) m(t.j, t.k) += t.element;
  (void)eig;
  return Operator(m);
}

inline Operator assemble_s_minus(const TransitionTable& table,
                                 const EigenSystem& eig) {
  return adjoint(assemble_s_plus(table, eig));
}

/// S^(0): the zero-frequency class, Hermitian by construction (diagonal
/// elements plus both orientations of near-degenerate pairs).
inline Operator assemble_s_zero(const TransitionTable& table,
                                const EigenSystem& eig) {
  Matrix m = Matrix::Zero(table.dim, table.dim);
  for (const Transition& t : table.transitions) {
    if (!table.is_zero_frequency(t)) continue;
    m(t.j, t.k) += t.element;
    if (t.k != t.j) m(t.k, t.j) += std::conj(t.element);
  }
  (void)eig;
  return Operator(m);
}

/// Dressed excitation-number observable S^(-) S^(+); for a decoupled mode it
/// reduces to the bare number operator.
inline Operator dressed_number(const TransitionTable& table,
                               const EigenSystem& eig) {
  Operator sp = assemble_s_plus(table, eig);
  return adjoint(sp) * sp;
}

}  // namespace uscme
