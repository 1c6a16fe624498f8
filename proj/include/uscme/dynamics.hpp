#pragma once

#include "models.hpp"
#include "operator_algebra.hpp"
#include "superoperator.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace uscme {

/// Numerical failure during propagation or steady-state extraction; carries
/// the simulation time at which the abort happened when applicable.
class PropagationError : public std::runtime_error {
 public:
  PropagationError(const std::string& what, double t = std::nan(""))
      : std::runtime_error(what), time(t) {}
  double time;
};

struct TimeGrid {
  double t_end = 1.0;
  int n_samples = 100;  // samples at k * t_end / n_samples, k = 0..n_samples

  void validate() const {
    if (!(t_end > 0.0)) throw std::invalid_argument("TimeGrid: t_end must be > 0");
    if (n_samples < 1)
      throw std::invalid_argument("TimeGrid: n_samples must be >= 1");
  }
  double spacing() const { return t_end / n_samples; }
};

/// One time-dependent coherent term coeff(t) * (-i)[op, rho]. The summed
/// drive Hamiltonian must be Hermitian; a single Hermitian op with real
/// coefficient or a lowering/raising pair both qualify.
struct DriveTerm {
  Operator op;
  std::function<Complex(double)> coeff;
  double support_lo = -std::numeric_limits<double>::infinity();
  double support_hi = std::numeric_limits<double>::infinity();
};

/// Resolve a DriveSpec against its target operator into propagator terms.
inline std::vector<DriveTerm> make_drive_terms(const DriveSpec& d,
                                               const Operator& target) {
  d.validate();
  std::vector<DriveTerm> out;
  switch (d.kind) {
    case DriveSpec::Kind::gaussian_pulse: {
      // Numerically zero beyond 8.5 sigma (envelope < 2e-16 of peak).
      double half = 8.5 * d.width;
      DriveSpec spec = d;
      out.push_back(DriveTerm{
          target,
          [spec](double t) {
            return Complex(gaussian_envelope(spec, t) *
                           std::cos(spec.carrier * t));
          },
          d.center - half, d.center + half});
      break;
    }
    case DriveSpec::Kind::continuous: {
      // Co-rotating with the target mode (b evolves as e^{-i w t}, so the
      // lowering operator carries e^{+i w t}); a resonant drive then pumps a
      // steady coherent amplitude instead of averaging away.
      double amp = d.amplitude, w = d.carrier;
      out.push_back(DriveTerm{
          target, [amp, w](double t) { return amp * std::exp(imag_unit * (w * t)); }});
      out.push_back(DriveTerm{adjoint(target), [amp, w](double t) {
                                return amp * std::exp(-imag_unit * (w * t));
                              }});
      break;
    }
  }
  return out;
}

struct Observable {
  std::string name;
  Operator op;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<std::string> names;
  std::vector<std::vector<double>> series;  // series[i][k], one row per name
  std::vector<Matrix> states;               // filled when record_states

  const std::vector<double>& find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return series[i];
    throw std::out_of_range("Trajectory: no observable named " + name);
  }
};

struct PropagateOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  // Dense matrix-exponential stepping for drive-free stretches is worthwhile
  // up to moderate dimensions; beyond that the adaptive stepper wins.
  int expm_dim_limit = 36;
  bool record_states = false;
  bool track_positivity = false;  // record min eigenvalue of rho(t)
  double trace_drift_abort = 1e-6;
  std::vector<Observable> observables;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
struct Dopri5 {
  static constexpr double c[7] = {0.0,     1.0 / 5, 3.0 / 10, 4.0 / 5,
                                  8.0 / 9, 1.0,     1.0};
  static constexpr double a2[1] = {1.0 / 5};
  static constexpr double a3[2] = {3.0 / 40, 9.0 / 40};
  static constexpr double a4[3] = {44.0 / 45, -56.0 / 15, 32.0 / 9};
  static constexpr double a5[4] = {19372.0 / 6561, -25360.0 / 2187,
                                   64448.0 / 6561, -212.0 / 729};
  static constexpr double a6[5] = {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247,
                                   49.0 / 176, -5103.0 / 18656};
  static constexpr double b5[7] = {35.0 / 384,     0.0,         500.0 / 1113,
                                   125.0 / 192,    -2187.0 / 6784, 11.0 / 84,
                                   0.0};
  static constexpr double b4[7] = {5179.0 / 57600,   0.0,
                                   7571.0 / 16695,   393.0 / 640,
                                   -92097.0 / 339200, 187.0 / 2100,
                                   1.0 / 40};
};

/// Generator evaluation context for the rotated-frame ODE
/// y' = G(t) y, where the diagonal phases of h have been absorbed.
struct RotatedRhs {
  const GeneratorTerms* terms = nullptr;  // static dissipative + coherent part
  struct DriveEntry {
    GeneratorTerms comm;  // (-i)[op, .] with frame rotations
    const DriveTerm* src;
  };
  std::vector<DriveEntry> drives;

  void operator()(double t, const Vector& y, Vector& out) const {
    out.setZero();
    terms->accumulate_rotated(t, y, out);
    for (const auto& d : drives) {
      if (t < d.src->support_lo || t > d.src->support_hi) continue;
      Complex c = d.src->coeff(t);
      if (c != Complex{}) d.comm.accumulate_rotated(t, y, out, c);
    }
  }
};

}  // namespace detail

/// Propagate rho through the vectorized master equation
///   d/dt rho = -i [h_static + H_drive(t), rho] + (dissipator) rho
/// sampling observables on the uniform grid. Drive-free stretches of a
/// time-independent generator advance by cached matrix exponentials when the
/// dimension allows; everything else runs through an adaptive embedded
/// Dormand-Prince 5(4) stepper in the interaction picture of diag(h_static),
/// which keeps step sizes tied to physical rates instead of bare phases.
class Propagator {
 public:
  Propagator(const Operator& h_static, std::vector<DriveTerm> drives,
             const GeneratorTerms& dissipator, PropagateOptions opts = {})
      : h_(h_static), drives_(std::move(drives)), opts_(std::move(opts)) {
    const int d = h_.dim();
    if (dissipator.dim() != d)
      throw std::invalid_argument("Propagator: dissipator dimension mismatch");
    for (const auto& dt : drives_)
      if (dt.op.dim() != d)
        throw std::invalid_argument("Propagator: drive dimension mismatch");

    const Matrix& hm = h_.mat();
    if (hermiticity_error(hm) > 1e-10)
      throw std::invalid_argument("Propagator: h_static must be Hermitian");

    RealVector hdiag = hm.diagonal().real();
    Matrix hod = hm;
    hod.diagonal().setZero();

    if (dissipator.has_frame()) {
      double scale = std::max(1.0, hdiag.cwiseAbs().maxCoeff());
      if ((dissipator.frame() - hdiag).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw std::invalid_argument(
            "Propagator: dissipator frame does not match diag(h_static)");
      frame_ = hdiag;
      work_ = dissipator;
      if (max_abs(hod) > 0.0) work_.add_commutator(hod, -imag_unit);
    } else {
      // Lab-frame fallback: no phase absorption, full commutator in the terms.
      frame_ = RealVector::Zero(d);
      work_ = dissipator;
      work_.add_commutator(hm, -imag_unit);
      plain_ = true;
    }
    work_.finalize();

    rhs_.terms = &work_;
    for (const DriveTerm& dt : drives_) {
      detail::RotatedRhs::DriveEntry e{plain_ ? GeneratorTerms(d)
                                              : GeneratorTerms(d, frame_),
                                       &dt};
      e.comm.add_commutator(dt.op.mat(), -imag_unit);
      e.comm.finalize();
      rhs_.drives.push_back(std::move(e));
    }
  }

  Trajectory run(const Operator& rho0, TimeGrid grid) {
    grid.validate();
    validate_state(rho0);
    const int d = h_.dim();
    const int n = grid.n_samples;
    const double dt = grid.spacing();

    Trajectory traj;
    traj.times.resize(n + 1);
    for (int k = 0; k <= n; ++k) traj.times[k] = k * dt;
    obs_vecs_.clear();
    for (const auto& ob : opts_.observables) {
      traj.names.push_back(ob.name);
      // tr(A rho) = sum_{r,c} A(r,c) rho(c,r) = <conj(vec(A^T)), vec(rho)>.
      obs_vecs_.push_back(
          vec_density(ob.op.mat().transpose().eval()).conjugate());
    }
    if (opts_.track_positivity) traj.names.push_back("min_eig");
    traj.series.assign(traj.names.size(), std::vector<double>(n + 1, 0.0));

    // Mark driven sample intervals.
    std::vector<char> driven(n, 0);
    for (const DriveTerm& dr : drives_) {
      double lo = std::max(0.0, dr.support_lo);
      double hi = std::min(grid.t_end, dr.support_hi);
      if (lo > grid.t_end || hi < 0.0) continue;
      int k0 = std::max(0, int(std::floor(lo / dt)));
      int k1 = std::min(n - 1, int(std::ceil(hi / dt)));
      for (int k = k0; k <= k1; ++k) driven[k] = 1;
    }
    const bool can_expm = d <= opts_.expm_dim_limit;

    Vector v = vec_density(rho0.mat());
    record(traj, 0, v, d);

    int k = 0;
    while (k < n) {
      if (!driven[k] && can_expm) {
        const Matrix& estep = expm_step(dt);
        while (k < n && !driven[k]) {
          v = estep * v;
          ++k;
          record(traj, k, v, d);
        }
      } else {
        int kend = k;
        while (kend < n && (driven[kend] || !can_expm)) ++kend;
        integrate_segment(v, traj, k, kend, dt, d);
        k = kend;
      }
    }

    if (opts_.record_states == false) states_.clear();
    traj.states = std::move(states_);
    return traj;
  }

 private:
  void validate_state(const Operator& rho0) const {
    if (rho0.dim() != h_.dim())
      throw std::invalid_argument("Propagator: rho0 dimension mismatch");
    if (hermiticity_error(rho0.mat()) > 1e-10)
      throw std::invalid_argument("Propagator: rho0 must be Hermitian");
    if (std::abs(rho0.mat().trace() - Complex(1.0)) > 1e-8)
      throw std::invalid_argument("Propagator: rho0 must have unit trace");
    Eigen::SelfAdjointEigenSolver<Matrix> es(
        0.5 * (rho0.mat() + rho0.mat().adjoint()));
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw std::invalid_argument("Propagator: rho0 must be positive semidefinite");
  }

  const Matrix& expm_step(double dt) {
    if (expm_cache_dt_ != dt) {
      Matrix l = lab_liouvillian();
      expm_cache_ = (l * dt).exp();
      expm_cache_dt_ = dt;
    }
    return expm_cache_;
  }

  Matrix lab_liouvillian() const {
    const int d = h_.dim();
    Superoperator s = work_.to_super();
    Matrix l = s.entries();
    if (!plain_) {
      // Add back the absorbed coherent diagonal -i (E_r - E_c).
      for (int c = 0; c < d; ++c)
        for (int r = 0; r < d; ++r)
          l(c * d + r, c * d + r) += -imag_unit * (frame_(r) - frame_(c));
    }
    return l;
  }

  // Advance v across samples [k0, k1] with the adaptive stepper.
  void integrate_segment(Vector& v, Trajectory& traj, int k0, int k1,
                         double dt, int d) {
    using T = detail::Dopri5;
    const Eigen::Index nvec = v.size();
    double t = k0 * dt;

    // Into the rotated frame: y_m = e^{+i Delta_m t} v_m.
    Vector y(nvec);
    to_rotated(v, t, y, d);

    std::array<Vector, 7> kst;
    for (auto& kv : kst) kv.resize(nvec);
    Vector ytmp(nvec), y5(nvec), y4(nvec);

    rhs_(t, y, kst[0]);
    double h = initial_step(dt);
    const double hmin = 1e-13 * std::max(1.0, (k1 - k0) * dt);

    for (int k = k0; k < k1; ++k) {
      const double t_target = (k + 1) * dt;
      while (t < t_target - 1e-12 * dt) {
        bool clipped = false;
        if (t + h >= t_target) {
          h = t_target - t;
          clipped = true;
        }

        // Stages.
        ytmp = y + h * T::a2[0] * kst[0];
        rhs_(t + T::c[1] * h, ytmp, kst[1]);
        ytmp = y + h * (T::a3[0] * kst[0] + T::a3[1] * kst[1]);
        rhs_(t + T::c[2] * h, ytmp, kst[2]);
        ytmp = y + h * (T::a4[0] * kst[0] + T::a4[1] * kst[1] +
                        T::a4[2] * kst[2]);
        rhs_(t + T::c[3] * h, ytmp, kst[3]);
        ytmp = y + h * (T::a5[0] * kst[0] + T::a5[1] * kst[1] +
                        T::a5[2] * kst[2] + T::a5[3] * kst[3]);
        rhs_(t + T::c[4] * h, ytmp, kst[4]);
        ytmp = y + h * (T::a6[0] * kst[0] + T::a6[1] * kst[1] +
                        T::a6[2] * kst[2] + T::a6[3] * kst[3] +
                        T::a6[4] * kst[4]);
        rhs_(t + h, ytmp, kst[5]);
        y5 = y + h * (T::b5[0] * kst[0] + T::b5[2] * kst[2] +
                      T::b5[3] * kst[3] + T::b5[4] * kst[4] +
                      T::b5[5] * kst[5]);
        rhs_(t + h, y5, kst[6]);
        y4 = y + h * (T::b4[0] * kst[0] + T::b4[2] * kst[2] +
                      T::b4[3] * kst[3] + T::b4[4] * kst[4] +
                      T::b4[5] * kst[5] + T::b4[6] * kst[6]);

        // Weighted RMS error.
        double err2 = 0.0;
        for (Eigen::Index i = 0; i < nvec; ++i) {
          double sc = opts_.atol +
                      opts_.rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
          double e = std::abs(y5[i] - y4[i]) / sc;
          err2 += e * e;
        }
        double err = std::sqrt(err2 / double(nvec));

        if (err <= 1.0) {
          t += h;
          y.swap(y5);
          kst[0].swap(kst[6]);  // FSAL: stage 7 is the derivative at (t, y)
          double grow = 0.9 * std::pow(std::max(err, 1e-10), -0.2);
          h *= std::clamp(grow, 0.2, 5.0);
        } else {
          // Rejected: y and t unchanged, kst[0] still valid.
          h *= std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9);
        }
        (void)clipped;
        if (h < hmin)
          throw PropagationError("propagate: step size underflow", t);
      }
      t = t_target;
      from_rotated(y, t, v, d);
      record(traj, k + 1, v, d);
    }
  }

  double initial_step(double dt) const {
    // Start conservatively; the controller finds its own scale quickly.
    return std::min(dt, 1e-2 / std::max(1.0, frame_.cwiseAbs().maxCoeff()));
  }

  void to_rotated(const Vector& v, double t, Vector& y, int d) const {
    for (int c = 0; c < d; ++c)
      for (int r = 0; r < d; ++r) {
        double delta = frame_(r) - frame_(c);
        y[c * d + r] = std::exp(imag_unit * (delta * t)) * v[c * d + r];
      }
  }

  void from_rotated(const Vector& y, double t, Vector& v, int d) const {
    for (int c = 0; c < d; ++c)
      for (int r = 0; r < d; ++r) {
        double delta = frame_(r) - frame_(c);
        v[c * d + r] = std::exp(-imag_unit * (delta * t)) * y[c * d + r];
      }
  }

  void record(Trajectory& traj, int k, const Vector& v, int d) {
    Complex tr{};
    for (int i = 0; i < d; ++i) tr += v[i * d + i];
    if (std::abs(tr - Complex(1.0)) > opts_.trace_drift_abort)
      throw PropagationError(
          "propagate: trace drifted to " + std::to_string(std::abs(tr)) +
              " at t = " + std::to_string(traj.times[k]),
          traj.times[k]);

    std::size_t i = 0;
    for (; i < obs_vecs_.size(); ++i) {
      Complex val = obs_vecs_[i].dot(v);  // dot conjugates its left argument
      traj.series[i][k] = val.real();
    }
    if (opts_.track_positivity) {
      Matrix rho = unvec_density(v, d);
      Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (rho + rho.adjoint()),
                                               Eigen::EigenvaluesOnly);
      traj.series[i][k] = es.eigenvalues().minCoeff();
    }
    if (opts_.record_states) {
      if (states_.size() <= std::size_t(k)) states_.resize(k + 1);
      states_[k] = unvec_density(v, d);
    }
  }

  Operator h_;
  std::vector<DriveTerm> drives_;
  PropagateOptions opts_;
  RealVector frame_;
  GeneratorTerms work_;
  bool plain_ = false;
  detail::RotatedRhs rhs_;
  std::vector<Vector> obs_vecs_;
  std::vector<Matrix> states_;
  Matrix expm_cache_;
  double expm_cache_dt_ = -1.0;
};

/// One-call form of the propagation entry point.
inline Trajectory propagate(const Operator& h_static,
                            std::vector<DriveTerm> drives,
                            const GeneratorTerms& dissipator,
                            const Operator& rho0, TimeGrid grid,
                            PropagateOptions opts = {}) {
  Propagator prop(h_static, std::move(drives), dissipator, std::move(opts));
  return prop.run(rho0, grid);
}

/// Dense-superoperator overload; rotations are reconstructed from diag(h)
/// when h is diagonal, otherwise the plain stepper integrates lab-frame.
inline Trajectory propagate(const Operator& h_static,
                            std::vector<DriveTerm> drives,
                            const Superoperator& dissipator,
                            const Operator& rho0, TimeGrid grid,
                            PropagateOptions opts = {}) {
  Matrix hod = h_static.mat();
  hod.diagonal().setZero();
  bool diag = max_abs(hod) <= 1e-12 * std::max(1.0, max_abs(h_static.mat()));
  GeneratorTerms terms =
      diag ? GeneratorTerms(h_static.dim(), h_static.mat().diagonal().real())
           : GeneratorTerms(h_static.dim());
  terms.add_dense(dissipator.entries());
  terms.finalize();
  return propagate(h_static, std::move(drives), terms, rho0, grid,
                   std::move(opts));
}

// ---------------------------------------------------------------------------
// Steady states and thermal states
// ---------------------------------------------------------------------------

/// Null-space density matrix of the full Liouvillian -i[h, .] + dissipator,
/// by shifted inverse iteration on the dense superoperator. A second,
/// deflated iteration guards against silently averaging a degenerate kernel.
inline Operator steady_state(const Operator& h, const GeneratorTerms& diss) {
  const int d = h.dim();
  if (diss.dim() != d)
    throw std::invalid_argument("steady_state: dimension mismatch");

  Superoperator s = diss.to_super();
  Matrix l = s.entries();
  {
    Superoperator comm(d);
    comm.add_commutator(h.mat(), -imag_unit);
    l += comm.entries();
  }
  const double scale = std::max(max_abs(l), 1e-300);
  const Eigen::Index nvec = l.rows();

  Matrix shifted = l;
  shifted.diagonal().array() -= Complex(1e-13 * scale, 1e-13 * scale);
  Eigen::PartialPivLU<Matrix> lu(shifted);

  auto iterate = [&](Vector x, const Vector* deflate) {
    for (int it = 0; it < 50; ++it) {
      if (deflate) x -= (*deflate) * deflate->dot(x);
      x = lu.solve(x);
      if (deflate) x -= (*deflate) * deflate->dot(x);
      x /= x.norm();
      double res = (l * x).norm();
      if (res <= 1e-12 * scale) return std::pair<Vector, double>(x, res);
    }
    double res = (l * x).norm();
    return std::pair<Vector, double>(x, res);
  };

  Vector x0 = vec_density(Matrix::Identity(d, d) / double(d));
  auto [x, res] = iterate(x0, nullptr);
  if (res > 1e-10 * scale)
    throw PropagationError("steady_state: inverse iteration did not converge");

  // Deterministic pseudo-random start for the deflated probe.
  Vector probe(nvec);
  std::uint64_t state = 0x9e3779b97f4a7c15ull;
  for (Eigen::Index i = 0; i < nvec; ++i) {
    state = state * 6364136223846793005ull + 1442695040888963407ull;
    double re = double((state >> 11) & 0xFFFF) / 65536.0 - 0.5;
    double im = double((state >> 27) & 0xFFFF) / 65536.0 - 0.5;
    probe[i] = Complex(re, im);
  }
  probe -= x * x.dot(probe);
  probe /= probe.norm();
  auto [x2, res2] = iterate(probe, &x);
  if (res2 <= 1e-10 * scale)
    throw PropagationError(
        "steady_state: Liouvillian kernel is degenerate (dimension > 1)");

  Matrix rho = unvec_density(x, d);
  Complex tr = rho.trace();
  if (std::abs(tr) < 1e-10)
    throw PropagationError("steady_state: kernel vector is traceless");
  rho /= tr;
  rho = 0.5 * (rho + rho.adjoint()).eval();
  return Operator(rho);
}

inline Operator steady_state(const Operator& h, const Superoperator& diss) {
  GeneratorTerms terms(h.dim());
  terms.add_dense(diss.entries());
  terms.finalize();
  return steady_state(h, terms);
}

/// Boltzmann weights over a sorted energy ladder; ground projector at T = 0.
inline RealVector gibbs_weights(const RealVector& energies, double temperature) {
  const int n = static_cast<int>(energies.size());
  RealVector w = RealVector::Zero(n);
  double e0 = energies.minCoeff();
  if (temperature == 0.0) {
    double tol = 1e-12 * std::max(1.0, energies.cwiseAbs().maxCoeff());
    int count = 0;
    for (int i = 0; i < n; ++i)
      if (energies(i) - e0 <= tol) ++count;
    for (int i = 0; i < n; ++i)
      if (energies(i) - e0 <= tol) w(i) = 1.0 / count;
    return w;
  }
  if (!(temperature > 0.0))
    throw std::invalid_argument("gibbs_weights: temperature must be >= 0");
  for (int i = 0; i < n; ++i) w(i) = std::exp(-(energies(i) - e0) / temperature);
  w /= w.sum();
  return w;
}

/// exp(-H/T)/Z via the eigendecomposition; ground-state projector at T = 0.
inline Operator gibbs_state(const Operator& h, double temperature) {
  EigenSystem eig = eigh(h);
  RealVector w = gibbs_weights(eig.energies, temperature);
  Matrix rho = eig.vectors * w.asDiagonal().toDenseMatrix().cast<Complex>() *
               eig.vectors.adjoint();
  return Operator(rho);
}

/// Half the trace norm of rho1 - rho2.
inline double trace_distance(const Operator& a, const Operator& b) {
  a.check_dim(b);
  Matrix diff = a.mat() - b.mat();
  diff = 0.5 * (diff + diff.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(diff, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// Equal-time correlation functions
// ---------------------------------------------------------------------------

struct G2Result {
  double unnormalized = 0.0;  // <M M P P>
  double normalized = 0.0;    // <M M P P> / <M P>^2 when the denominator holds
  bool normalized_valid = false;
};

inline G2Result g2_equal_time(const Operator& minus, const Operator& plus,
                              const Operator& rho) {
  minus.check_dim(plus);
  minus.check_dim(rho);
  if (max_abs(plus.mat() - minus.mat().adjoint()) >
      1e-12 * std::max(1.0, max_abs(minus.mat())))
    throw std::invalid_argument("g2_equal_time: plus must be adjoint(minus)");

  G2Result r;
  Operator mmpp = minus * minus * plus * plus;
  r.unnormalized = expectation(mmpp, rho).real();
  double denom = expectation(minus * plus, rho).real();
  if (denom > 1e-12) {
    r.normalized = r.unnormalized / (denom * denom);
    r.normalized_valid = true;
  } else {
    r.normalized = r.unnormalized;
    r.normalized_valid = false;
  }
  return r;
}

}  // namespace uscme
