#pragma once

#include "baths.hpp"
#include "dressed.hpp"
#include "superoperator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace uscme {

// ---------------------------------------------------------------------------
// Standard master equation (bare operators, bare frequencies)
// ---------------------------------------------------------------------------

struct StandardCoupling {
  Operator s;      // bare lowering operator on the composite space
  BathSpec bath;
  double omega0;   // bare frequency at which s rotates
};

/// L_bare = sum_i gamma_i [1 + n(w_i, T_i)] D[s_i] + gamma_i n(w_i, T_i) D[s_i^dag].
/// With `frame` supplied (the energies making the propagation Hamiltonian
/// diagonal), entries carry their interaction-picture rotations.
inline GeneratorTerms standard_lindblad(const std::vector<StandardCoupling>& ops,
                                        RealVector frame = {}) {
  if (ops.empty()) throw std::invalid_argument("standard_lindblad: no couplings");
  const int dim = ops.front().s.dim();
  GeneratorTerms terms =
      frame.size() > 0 ? GeneratorTerms(dim, std::move(frame)) : GeneratorTerms(dim);

  for (const StandardCoupling& c : ops) {
    c.bath.validate();
    if (c.s.dim() != dim)
      throw std::invalid_argument("standard_lindblad: dimension mismatch");
    if (!(c.omega0 > 0.0))
      throw std::invalid_argument("standard_lindblad: omega0 must be > 0");
    double n = c.bath.temperature > 0.0 ? thermal_n(c.omega0, c.bath.temperature)
                                        : 0.0;
    terms.add_dissipator(c.s.mat(), c.bath.gamma * (1.0 + n));
    if (n > 0.0) terms.add_dissipator(c.s.mat().adjoint(), c.bath.gamma * n);
  }
  terms.finalize();
  return terms;
}

// ---------------------------------------------------------------------------
// Dressed master equations
// ---------------------------------------------------------------------------

struct DressedCoupling {
  TransitionTable table;
  BathSpec bath;
};

/// Secular dressed Lindbladian: per positive-frequency transition,
/// Gamma^{jk} = Gamma(Delta_jk) |C_jk|^2 with downward rate Gamma(1+n) on
/// |j><k| and upward rate Gamma n on |k><j|. Zero-frequency entries are
/// excluded (the parity assumption of the secular derivation).
inline GeneratorTerms dressed_secular_lindblad(
    const std::vector<DressedCoupling>& couplings, const EigenSystem& eig) {
  GeneratorTerms terms(eig.dim(), eig.energies);

  for (const DressedCoupling& c : couplings) {
    c.bath.validate();
    if (c.table.dim != eig.dim())
      throw std::invalid_argument("dressed_secular_lindblad: dimension mismatch");
    for (const Transition& t : c.table.transitions) {
      if (c.table.is_zero_frequency(t)) continue;
      double rate = ohmic_rate(c.bath, t.delta) * std::norm(t.element);
      double n = c.bath.temperature > 0.0 ? thermal_n(t.delta, c.bath.temperature)
                                          : 0.0;
      // D[|j><k|], downward
      double down = rate * (1.0 + n);
      terms.add_sandwich_rank1(t.j, t.k, Complex(down), t.k, t.j, Complex(1.0));
      terms.add_left_rank1(t.k, t.k, Complex(-0.5 * down));
      terms.add_right_rank1(t.k, t.k, Complex(-0.5 * down));
      // D[|k><j|], upward
      if (n > 0.0) {
        double up = rate * n;
        terms.add_sandwich_rank1(t.k, t.j, Complex(up), t.j, t.k, Complex(1.0));
        terms.add_left_rank1(t.j, t.j, Complex(-0.5 * up));
        terms.add_right_rank1(t.j, t.j, Complex(-0.5 * up));
      }
    }
  }
  terms.finalize();
  return terms;
}

// ---------------------------------------------------------------------------
// Generalized master equation
// ---------------------------------------------------------------------------

enum class GmeMode { reduced, full };

struct GmeOptions {
  FilterSpec filter = FilterSpec::none();
  bool include_dephasing = false;
  GmeMode mode = GmeMode::reduced;
  // Transition pairs whose combined element weight falls below this relative
  // cutoff are skipped; they sit far below every tolerance in play but
  // dominate the pair count at large dimensions.
  double pair_prune_tol = 1e-13;
};

namespace detail {

// alpha |p><q|
struct Rank1 {
  int p;
  int q;
  Complex alpha;
};

// One S(f) eigenoperator of a coupling quadrature: f > 0 lowers energy,
// f < 0 raises, f == 0 is the dephasing class.
struct SignedCluster {
  double freq = 0.0;
  std::vector<Rank1> comps;
};

/// Split a table into positive-frequency clusters (transition frequencies
/// agreeing within zero_tol share one S(omega)) and the zero-frequency class.
inline void split_clusters(const TransitionTable& table,
                           std::vector<SignedCluster>& plus,
                           SignedCluster& zero) {
  std::vector<const Transition*> pos;
  for (const Transition& t : table.transitions) {
    if (table.is_zero_frequency(t)) {
      zero.comps.push_back(Rank1{t.j, t.k, t.element});
      if (t.k != t.j)
        zero.comps.push_back(Rank1{t.k, t.j, std::conj(t.element)});
    } else {
      pos.push_back(&t);
    }
  }
  std::sort(pos.begin(), pos.end(),
            [](const Transition* a, const Transition* b) {
              return a->delta < b->delta;
            });

  double prev = -1.0, sum = 0.0;
  int count = 0;
  auto close_cluster = [&] {
    if (count > 0) plus.back().freq = sum / count;
  };
  for (const Transition* t : pos) {
    if (plus.empty() || t->delta - prev > table.zero_tol) {
      close_cluster();
      plus.push_back(SignedCluster{});
      sum = 0.0;
      count = 0;
    }
    plus.back().comps.push_back(Rank1{t->j, t->k, t->element});
    sum += t->delta;
    ++count;
    prev = t->delta;
  }
  close_cluster();
}

/// The four Born-Markov term classes for one ordered pair of eigenoperators
/// (O_a at signed frequency f_a, O_b at f_b), with Gamma and n vanishing at
/// non-positive arguments. Covers every class of the unreduced dissipator:
/// (+,-) pairs give the Lindblad-like terms, (+,+)/(-,-) the photon-pair-like
/// fast classes, and pairs with a zero-frequency member the mixed classes.
inline void add_pair_terms(GeneratorTerms& terms, const SignedCluster& a,
                           const SignedCluster& b, const BathSpec& bath,
                           double weight, double prune_abs) {
  auto rate = [&](double f) { return f > 0.0 ? ohmic_rate(bath, f) : 0.0; };
  auto occ = [&](double f) {
    return (f > 0.0 && bath.temperature > 0.0) ? thermal_n(f, bath.temperature)
                                               : 0.0;
  };

  const double w1 = 0.5 * weight * rate(-b.freq) * occ(-b.freq);
  const double w2 = 0.5 * weight * rate(a.freq) * occ(a.freq);
  const double w3 = 0.5 * weight * rate(a.freq) * (occ(a.freq) + 1.0);
  const double w4 = 0.5 * weight * rate(-b.freq) * (occ(-b.freq) + 1.0);
  if (w1 == 0.0 && w2 == 0.0 && w3 == 0.0 && w4 == 0.0) return;

  for (const Rank1& x : a.comps) {
    for (const Rank1& y : b.comps) {
      const Complex v = x.alpha * y.alpha;
      if (std::abs(v) < prune_abs) continue;

      // O_b rho O_a sandwiches (terms 1 and 2 share the structure)
      if (w1 + w2 != 0.0)
        terms.add_sandwich_rank1(y.p, y.q, (w1 + w2) * y.alpha, x.p, x.q,
                                 x.alpha);
      // O_a rho O_b sandwiches (terms 3 and 4)
      if (w3 + w4 != 0.0)
        terms.add_sandwich_rank1(x.p, x.q, (w3 + w4) * x.alpha, y.p, y.q,
                                 y.alpha);
      // products O_a O_b = x . y and O_b O_a = y . x
      if (x.q == y.p) {
        if (w1 != 0.0) terms.add_left_rank1(x.p, y.q, -w1 * v);
        if (w2 != 0.0) terms.add_right_rank1(x.p, y.q, -w2 * v);
      }
      if (y.q == x.p) {
        if (w3 != 0.0) terms.add_left_rank1(y.p, x.q, -w3 * v);
        if (w4 != 0.0) terms.add_right_rank1(y.p, x.q, -w4 * v);
      }
    }
  }
}

}  // namespace detail

/// The generalized dressed Liouvillian. Reduced mode keeps the slowly
/// rotating classes (positive-frequency pairs plus the S0 dephasing terms);
/// full mode assembles every class of the unreduced Born-Markov dissipator.
/// The filter window applies to the oscillation frequency of each pair, so
/// the secular diagonal always survives.
inline GeneratorTerms gme_liouvillian(const std::vector<DressedCoupling>& couplings,
                                      const EigenSystem& eig,
                                      const GmeOptions& opts = {}) {
  opts.filter.validate();
  GeneratorTerms terms(eig.dim(), eig.energies);

  for (const DressedCoupling& c : couplings) {
    c.bath.validate();
    if (c.table.dim != eig.dim())
      throw std::invalid_argument("gme_liouvillian: dimension mismatch");

    std::vector<detail::SignedCluster> plus;
    detail::SignedCluster zero;
    detail::split_clusters(c.table, plus, zero);

    double alpha_max = 0.0;
    for (const auto& cl : plus)
      for (const auto& r : cl.comps)
        alpha_max = std::max(alpha_max, std::abs(r.alpha));
    for (const auto& r : zero.comps)
      alpha_max = std::max(alpha_max, std::abs(r.alpha));
    const double prune_abs = opts.pair_prune_tol * alpha_max * alpha_max;

    // Assemble the signed eigenoperator list for this coupling.
    std::vector<detail::SignedCluster> signed_ops;
    signed_ops.reserve(2 * plus.size() + 1);
    for (const auto& cl : plus) signed_ops.push_back(cl);  // S^(+)
    for (const auto& cl : plus) {                          // S^(-)
      detail::SignedCluster m;
      m.freq = -cl.freq;
      m.comps.reserve(cl.comps.size());
      for (const auto& r : cl.comps)
        m.comps.push_back(detail::Rank1{r.q, r.p, std::conj(r.alpha)});
      signed_ops.push_back(std::move(m));
    }
    const bool full = opts.mode == GmeMode::full;
    if (full && !zero.comps.empty()) signed_ops.push_back(zero);

    for (const auto& a : signed_ops) {
      for (const auto& b : signed_ops) {
        if (!full && !(a.freq > 0.0 && b.freq < 0.0)) continue;
        if (full && a.freq == 0.0 && b.freq == 0.0) continue;  // handled below
        double w = filter_weight_abs(std::abs(a.freq + b.freq), opts.filter);
        if (w == 0.0) continue;
        detail::add_pair_terms(terms, a, b, c.bath, w, prune_abs);
      }
    }

    // Pure dephasing: the four Omega-weighted S0 terms, which collapse to
    // Omega(T) [2 S0 rho S0 - S0 S0 rho - rho S0 S0] for Ohmic baths.
    if (opts.include_dephasing && !zero.comps.empty()) {
      double om = dephasing_rate(c.bath);
      if (om > 0.0) {
        for (const detail::Rank1& x : zero.comps) {
          for (const detail::Rank1& y : zero.comps) {
            const Complex v = x.alpha * y.alpha;
            if (std::abs(v) < prune_abs) continue;
            terms.add_sandwich_rank1(x.p, x.q, 2.0 * om * x.alpha, y.p, y.q,
                                     y.alpha);
            if (x.q == y.p) {
              terms.add_left_rank1(x.p, y.q, -om * v);
              terms.add_right_rank1(x.p, y.q, -om * v);
            }
          }
        }
      }
    }
  }
  terms.finalize();
  return terms;
}

/// Spec-shaped convenience overload.
inline GeneratorTerms gme_liouvillian(const std::vector<DressedCoupling>& couplings,
                                      const EigenSystem& eig,
                                      const FilterSpec& filter,
                                      bool include_dephasing,
                                      GmeMode mode = GmeMode::reduced) {
  GmeOptions opts;
  opts.filter = filter;
  opts.include_dephasing = include_dephasing;
  opts.mode = mode;
  return gme_liouvillian(couplings, eig, opts);
}

/// The dressed-state master equation of the optomechanical comparison: a
/// secular dressed Lindbladian built in the eigenbasis of the
/// photon-conserving Hamiltonian H_0 + V_om. Propagated together with the
/// full coherent Hamiltonian (V_DCE included) it reproduces the documented
/// spurious heating of the true ground state.
inline GeneratorTerms hu_style_optomech(
    const std::vector<DressedCoupling>& couplings_om,
    const EigenSystem& eig_om) {
  return dressed_secular_lindblad(couplings_om, eig_om);
}

}  // namespace uscme
