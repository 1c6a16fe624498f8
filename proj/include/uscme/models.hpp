#pragma once

#include "operator_algebra.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace uscme {

// ---------------------------------------------------------------------------
// Circuit QED: generalized quantum Rabi model
// ---------------------------------------------------------------------------

/// Flux qubit inputs: energy gap and persistent-current energy 2*Ip*dPhi_x,
/// both in angular-frequency units of the scenario reference.
struct FluxQubitParams {
  double gap = 0.0;
  double persistent_energy = 0.0;

  void validate() const {
    if (!(gap > 0.0)) throw std::invalid_argument("FluxQubitParams: gap must be > 0");
    if (persistent_energy < 0.0)
      throw std::invalid_argument(
          "FluxQubitParams: persistent_energy must be >= 0");
  }
};

struct QubitFrequency {
  double omega_q;
  double theta;
};

/// omega_q = sqrt(gap^2 + eps^2), cos(theta) = gap / omega_q.
inline QubitFrequency flux_qubit_frequency(const FluxQubitParams& p) {
  p.validate();
  double wq = std::hypot(p.gap, p.persistent_energy);
  return {wq, std::acos(p.gap / wq)};
}

struct RabiParams {
  double omega_c = 1.0;  // cavity frequency
  double omega_q = 1.0;  // qubit frequency
  double g = 0.0;        // coupling strength
  double theta = 0.0;    // mixing angle, radians
  int n_max = 2;         // photon truncation (levels 0..n_max)

  int dim() const { return 2 * (n_max + 1); }

  void validate() const {
    if (!(omega_c > 0.0) || !(omega_q > 0.0))
      throw std::invalid_argument("RabiParams: frequencies must be > 0");
    if (!(theta >= 0.0) || !(theta < M_PI))
      throw std::invalid_argument("RabiParams: theta must lie in [0, pi)");
    if (n_max < 2) throw std::invalid_argument("RabiParams: n_max must be >= 2");
  }
};

/// Qubit (slow index, basis 0 = ground, 1 = excited) tensor cavity.
struct RabiModel {
  RabiParams params;
  Operator hamiltonian;
  Operator cavity_lowering;  // a on the composite space
  Operator qubit_lowering;   // sigma_- on the composite space
  Operator qubit_x;          // sigma_x, the pulse target
};

inline RabiModel build_rabi(const RabiParams& p) {
  p.validate();
  const int nc = p.n_max + 1;

  Matrix sz = Matrix::Zero(2, 2), sx = Matrix::Zero(2, 2),
         sm = Matrix::Zero(2, 2);
  sz(0, 0) = -1.0;
  sz(1, 1) = 1.0;
  sx(0, 1) = 1.0;
  sx(1, 0) = 1.0;
  sm(0, 1) = 1.0;  // |g><e|

  Operator i2 = Operator::identity(2), ic = Operator::identity(nc);
  Operator a = destroy(nc);
  Operator x = a + create(nc);

  Operator h = 0.5 * p.omega_q * kron(Operator(sz), ic) +
               p.omega_c * kron(i2, number_op(nc)) +
               p.g * (kron(std::cos(p.theta) * Operator(sx) +
                               std::sin(p.theta) * Operator(sz),
                           x));

  RabiModel m{p, h, kron(i2, a), kron(Operator(sm), ic),
              kron(Operator(sx), ic)};
  return m;
}

inline Operator rabi_hamiltonian(const RabiParams& p) {
  return build_rabi(p).hamiltonian;
}

// ---------------------------------------------------------------------------
// Optomechanics: radiation pressure plus the photon-pair (DCE) term
// ---------------------------------------------------------------------------

struct OptomechParams {
  double omega_c = 1.0;  // cavity frequency
  double omega_m = 1.0;  // mechanical frequency
  double g = 0.0;        // optomechanical coupling
  int n_c = 2;           // photon truncation
  int n_m = 2;           // phonon truncation
  bool include_dce = true;

  int dim() const { return (n_c + 1) * (n_m + 1); }

  void validate() const {
    if (!(omega_c > 0.0) || !(omega_m > 0.0))
      throw std::invalid_argument("OptomechParams: frequencies must be > 0");
    if (n_c < 2 || n_m < 2)
      throw std::invalid_argument("OptomechParams: truncations must be >= 2");
  }
};

/// Cavity (slow index) tensor mechanics; kets read |photons, phonons>.
struct OptomechModel {
  OptomechParams params;
  Operator h0;      // omega_c a^dag a + omega_m b^dag b
  Operator v_om;    // g a^dag a (b + b^dag)
  Operator v_dce;   // (g/2) (a^2 + a^dag^2)(b + b^dag)
  Operator hamiltonian;
  Operator cavity_lowering;  // a
  Operator mech_lowering;    // b
};

inline OptomechModel build_optomech(const OptomechParams& p) {
  p.validate();
  const int dc = p.n_c + 1, dm = p.n_m + 1;
  Operator ic = Operator::identity(dc), im = Operator::identity(dm);
  Operator a = destroy(dc), b = destroy(dm);
  Operator xb = b + create(dm);
  Operator a2 = a * a;

  Operator h0 = p.omega_c * kron(number_op(dc), im) +
                p.omega_m * kron(ic, number_op(dm));
  Operator vom = p.g * kron(number_op(dc), xb);
  Operator vdce = 0.5 * p.g * kron(a2 + adjoint(a2), xb);

  Operator h = h0 + vom;
  if (p.include_dce) h += vdce;

  return OptomechModel{p, h0, vom, vdce, h, kron(a, im), kron(ic, b)};
}

inline Operator optomech_hamiltonian(const OptomechParams& p) {
  return build_optomech(p).hamiltonian;
}

// ---------------------------------------------------------------------------
// Drives
// ---------------------------------------------------------------------------

struct DriveSpec {
  enum class Kind { gaussian_pulse, continuous };

  Kind kind = Kind::gaussian_pulse;
  double amplitude = 0.0;  // pulse area (gaussian) or drive strength
  double carrier = 0.0;    // carrier angular frequency
  double center = 0.0;     // gaussian center t0
  double width = 1.0;      // gaussian standard deviation tau
  std::string target;      // which subsystem operator the drive couples to

  void validate() const {
    if (amplitude < 0.0)
      throw std::invalid_argument("DriveSpec: amplitude must be >= 0");
    if (kind == Kind::gaussian_pulse && !(width > 0.0))
      throw std::invalid_argument("DriveSpec: gaussian width must be > 0");
  }
};

/// Normalized gaussian envelope; integrates to `amplitude` over all time.
inline double gaussian_envelope(const DriveSpec& d, double t) {
  double u = (t - d.center) / d.width;
  return d.amplitude * std::exp(-0.5 * u * u) /
         (d.width * std::sqrt(2.0 * M_PI));
}

/// Instantaneous lab-frame drive operator. `target` is the resolved coupling
/// operator: a Hermitian quadrature for the gaussian pulse, a lowering
/// operator for the continuous drive.
inline Operator drive_hamiltonian(const DriveSpec& d, double t,
                                  const Operator& target) {
  d.validate();
  if (!std::isfinite(t))
    throw std::invalid_argument("drive_hamiltonian: time must be finite");
  switch (d.kind) {
    case DriveSpec::Kind::gaussian_pulse:
      return gaussian_envelope(d, t) * std::cos(d.carrier * t) * target;
    case DriveSpec::Kind::continuous: {
      Complex ph = std::exp(-imag_unit * d.carrier * t);
      return d.amplitude * (ph * target + std::conj(ph) * adjoint(target));
    }
  }
  throw std::logic_error("drive_hamiltonian: unknown drive kind");
}

}  // namespace uscme
