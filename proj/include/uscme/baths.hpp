#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace uscme {

/// One Ohmic reservoir: spectral density g(nu)|alpha(nu)|^2 = gamma*nu/(2*pi*f),
/// giving the rate Gamma(omega) = gamma*omega/f. Temperatures are energies
/// (k_B = 1) in the same angular-frequency units as everything else.
struct BathSpec {
  double gamma = 0.0;        // damping rate at the reference frequency
  double ref_freq = 0.0;     // reference frequency f
  double temperature = 0.0;  // T >= 0

  void validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("BathSpec: gamma must be > 0");
    if (!(ref_freq > 0.0))
      throw std::invalid_argument("BathSpec: ref_freq must be > 0");
    if (!(temperature >= 0.0))
      throw std::invalid_argument("BathSpec: temperature must be >= 0");
  }
};

/// Rectangular frequency-difference window for the generalized dissipator.
/// bandwidth == infinity means no filtering.
struct FilterSpec {
  double bandwidth = std::numeric_limits<double>::infinity();

  static FilterSpec none() { return FilterSpec{}; }
  static FilterSpec window(double lambda) { return FilterSpec{lambda}; }
  bool bounded() const { return std::isfinite(bandwidth); }

  void validate() const {
    if (std::isnan(bandwidth) || bandwidth < 0.0)
      throw std::invalid_argument("FilterSpec: bandwidth must be >= 0");
  }
};

/// Bose-Einstein occupation n(omega, T). Zero at T = 0; rejects omega <= 0
/// (occupations are only ever needed at positive transition frequencies).
inline double thermal_n(double omega, double temperature) {
  if (!(omega > 0.0)) throw std::invalid_argument("thermal_n: omega must be > 0");
  if (temperature == 0.0) return 0.0;
  if (!(temperature > 0.0))
    throw std::invalid_argument("thermal_n: temperature must be >= 0");
  // expm1 keeps small omega/T free of cancellation.
  return 1.0 / std::expm1(omega / temperature);
}

/// Gamma(omega) = gamma * omega / f.
inline double ohmic_rate(const BathSpec& bath, double omega) {
  if (!(omega > 0.0)) throw std::invalid_argument("ohmic_rate: omega must be > 0");
  return bath.gamma * omega / bath.ref_freq;
}

/// Pure-dephasing rate of an Ohmic bath: gamma * T / (4 f). All four dephasing
/// integrals collapse to this value in the Ohmic case.
inline double dephasing_rate(const BathSpec& bath) {
  return bath.gamma * bath.temperature / (4.0 * bath.ref_freq);
}

/// Window on an absolute frequency difference; the diagonal always passes,
/// the upper edge |d| == Lambda is excluded.
inline double filter_weight_abs(double abs_diff, const FilterSpec& filt) {
  if (!filt.bounded()) return 1.0;
  return (abs_diff == 0.0 || abs_diff < filt.bandwidth) ? 1.0 : 0.0;
}

/// F(omega, omega') = Theta(|w - w'|) - Theta(|w - w'| - Lambda) with the
/// Theta(0) = 1 convention, so secular pairs survive any bandwidth > 0.
inline double filter_weight(double omega, double omega_prime,
                            const FilterSpec& filt) {
  if (std::isnan(omega) || std::isnan(omega_prime))
    throw std::invalid_argument("filter_weight: frequencies must be finite");
  return filter_weight_abs(std::abs(omega - omega_prime), filt);
}

}  // namespace uscme
