#include <catch2/catch_amalgamated.hpp>

#include <uscme/dissipators.hpp>
#include <uscme/models.hpp>

#include <cmath>
#include <random>

using namespace uscme;

namespace {

Matrix random_hermitian_unit_trace(int dim, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) m(r, c) = Complex(dist(rng), dist(rng));
  Matrix rho = 0.5 * (m + m.adjoint());
  rho /= rho.trace();
  return rho;
}

RabiParams paper_rabi(double theta_scale = 1.0, int n_max = 10) {
  RabiParams p;
  p.omega_c = 1.0;
  p.omega_q = 7.97 / 4.0;
  p.g = 0.157;
  p.theta = theta_scale * std::acos(2.25 / 7.97);
  p.n_max = n_max;
  return p;
}

std::vector<DressedCoupling> rabi_couplings(const RabiModel& m,
                                            const EigenSystem& eig, double temp,
                                            double gamma = 3.75e-4) {
  BathSpec cavity{gamma, m.params.omega_c, temp};
  BathSpec qubit{gamma, m.params.omega_q, temp};
  return {DressedCoupling{build_transition_table(m.cavity_lowering, eig), cavity},
          DressedCoupling{build_transition_table(m.qubit_lowering, eig), qubit}};
}

}  // namespace

TEST_CASE("standard lindblad damps a bare cavity") {
  const int d = 5;
  const double gamma = 0.2, wc = 1.0;
  GeneratorTerms l =
      standard_lindblad({StandardCoupling{destroy(d), {gamma, wc, 0.0}, wc}});
  Superoperator s = l.to_super();

  // One-photon population decays at gamma.
  Matrix fock1 = Matrix::Zero(d, d);
  fock1(1, 1) = 1.0;
  Matrix drho = s.apply(fock1);
  CHECK(drho(1, 1).real() == Catch::Approx(-gamma).epsilon(1e-12));
  CHECK(drho(0, 0).real() == Catch::Approx(gamma).epsilon(1e-12));

  // At T > 0 the gain/loss ratio obeys detailed balance on the ladder.
  double temp = 0.5;
  GeneratorTerms lt =
      standard_lindblad({StandardCoupling{destroy(d), {gamma, wc, temp}, wc}});
  Matrix vac = Matrix::Zero(d, d);
  vac(0, 0) = 1.0;
  Matrix dvac = lt.to_super().apply(vac);
  double n = thermal_n(wc, temp);
  CHECK(dvac(1, 1).real() == Catch::Approx(gamma * n).epsilon(1e-12));
}

TEST_CASE("standard lindblad excites the dressed ground state in USC") {
  // The textbook artifact: with bare dissipators, the interacting ground
  // state is not stationary even at T = 0.
  RabiModel m = build_rabi(paper_rabi());
  EigenSystem eig = eigh(m.hamiltonian);

  Matrix a_d = eig.to_eigenbasis(m.cavity_lowering.mat());
  Matrix sm_d = eig.to_eigenbasis(m.qubit_lowering.mat());
  GeneratorTerms l = standard_lindblad(
      {StandardCoupling{Operator(a_d), {3.75e-4, 1.0, 0.0}, m.params.omega_c},
       StandardCoupling{Operator(sm_d), {3.75e-4, m.params.omega_q, 0.0},
                        m.params.omega_q}},
      eig.energies);

  Matrix ground = Matrix::Zero(eig.dim(), eig.dim());
  ground(0, 0) = 1.0;
  Matrix drho = l.to_super().apply(ground);
  CHECK(max_abs(drho) > 1e-7);  // pumps the ground state

  // The same couplings through the generalized dissipator leave it dark.
  GeneratorTerms gme = gme_liouvillian(rabi_couplings(m, eig, 0.0), eig);
  CHECK(max_abs(gme.to_super().apply(ground)) < 1e-12 * gme.to_super().max_abs_entry());
}

TEST_CASE("dressed secular lindblad matches standard on ladder populations") {
  // For a decoupled cavity the dressed basis is the bare basis. The secular
  // per-transition dissipator reproduces the standard one on populations and
  // on each coherence decay rate; its superoperator differs only in
  // coherence-transfer entries between exactly degenerate transitions.
  const int d = 6;
  const double gamma = 0.15, wc = 1.0, temp = 0.4;
  Operator h = wc * number_op(d);
  EigenSystem eig = eigh(h);

  GeneratorTerms dressed = dressed_secular_lindblad(
      {DressedCoupling{build_transition_table(destroy(d), eig),
                       {gamma, wc, temp}}},
      eig);
  GeneratorTerms standard = standard_lindblad(
      {StandardCoupling{destroy(d), {gamma, wc, temp}, wc}}, eig.energies);

  Superoperator sd = dressed.to_super(), ss = standard.to_super();
  for (int k = 0; k < d; ++k) {
    Matrix fock = Matrix::Zero(d, d);
    fock(k, k) = 1.0;
    CHECK(max_abs(sd.apply(fock) - ss.apply(fock)) < 1e-12);
  }
  for (int k = 0; k + 1 < d; ++k) {
    Matrix coh = Matrix::Zero(d, d);
    coh(k, k + 1) = 1.0;
    Matrix dd = sd.apply(coh), ds = ss.apply(coh);
    CHECK(dd(k, k + 1).real() == Catch::Approx(ds(k, k + 1).real()).margin(1e-12));
  }
}

TEST_CASE("gme reduces to the standard master equation at g = 0") {
  RabiParams p = paper_rabi();
  p.g = 0.0;
  p.n_max = 8;
  RabiModel m = build_rabi(p);
  EigenSystem eig = eigh(m.hamiltonian);
  double temp = 0.6;

  GeneratorTerms gme = gme_liouvillian(rabi_couplings(m, eig, temp, 0.02), eig);

  Matrix a_d = eig.to_eigenbasis(m.cavity_lowering.mat());
  Matrix sm_d = eig.to_eigenbasis(m.qubit_lowering.mat());
  GeneratorTerms standard = standard_lindblad(
      {StandardCoupling{Operator(a_d), {0.02, p.omega_c, temp}, p.omega_c},
       StandardCoupling{Operator(sm_d), {0.02, p.omega_q, temp}, p.omega_q}},
      eig.energies);

  Matrix diff = gme.to_super().entries() - standard.to_super().entries();
  double scale = standard.to_super().max_abs_entry();
  CHECK(max_abs(diff) < 1e-10 * scale);
}

TEST_CASE("gme ground state is dark at zero temperature") {
  for (double theta_scale : {0.0, 1.0}) {
    RabiModel m = build_rabi(paper_rabi(theta_scale));
    EigenSystem eig = eigh(m.hamiltonian);
    GeneratorTerms gme = gme_liouvillian(rabi_couplings(m, eig, 0.0), eig,
                                         GmeOptions{FilterSpec::none(), true,
                                                    GmeMode::reduced, 1e-13});
    Matrix ground = Matrix::Zero(eig.dim(), eig.dim());
    ground(0, 0) = 1.0;
    Superoperator s = gme.to_super();
    CHECK(max_abs(s.apply(ground)) < 1e-12 * s.max_abs_entry());
  }
}

TEST_CASE("gme preserves trace and hermiticity") {
  RabiModel m = build_rabi(paper_rabi(1.0, 8));
  EigenSystem eig = eigh(m.hamiltonian);

  for (auto mode : {GmeMode::reduced, GmeMode::full}) {
    for (double lambda :
         {std::numeric_limits<double>::infinity(), 0.5, 0.0}) {
      GmeOptions opts;
      opts.filter = std::isfinite(lambda) ? FilterSpec::window(lambda)
                                          : FilterSpec::none();
      opts.include_dephasing = true;
      opts.mode = mode;
      GeneratorTerms gme = gme_liouvillian(rabi_couplings(m, eig, 0.7), eig, opts);
      Superoperator s = gme.to_super();

      for (unsigned seed = 0; seed < 25; ++seed) {
        Matrix rho = random_hermitian_unit_trace(eig.dim(), 100 + seed);
        Matrix drho = s.apply(rho);
        CHECK(std::abs(drho.trace()) < 1e-10 * max_abs(rho));
        CHECK(max_abs(drho - drho.adjoint()) < 1e-10 * max_abs(drho));
      }
    }
  }
}

TEST_CASE("gme equals the secular dressed equation when the filter isolates") {
  // Anharmonic parity-symmetric point: every transition frequency isolated,
  // so a zero-width filter leaves only the secular diagonal.
  RabiParams p;
  p.omega_c = 1.0;
  p.omega_q = 0.77;
  p.g = 0.3;
  p.theta = 0.0;
  p.n_max = 6;
  RabiModel m = build_rabi(p);
  EigenSystem eig = eigh(m.hamiltonian);

  auto couplings = rabi_couplings(m, eig, 0.45, 0.01);

  // Premise check: distinct positive frequencies are truly separated.
  for (const auto& c : couplings) {
    std::vector<double> freqs;
    for (const Transition& t : c.table.transitions)
      if (!c.table.is_zero_frequency(t)) freqs.push_back(t.delta);
    std::sort(freqs.begin(), freqs.end());
    for (std::size_t i = 1; i < freqs.size(); ++i)
      REQUIRE(freqs[i] - freqs[i - 1] > 1e-6);
  }

  GeneratorTerms gme =
      gme_liouvillian(couplings, eig,
                      GmeOptions{FilterSpec::window(0.0), false,
                                 GmeMode::reduced, 0.0});
  GeneratorTerms dressed = dressed_secular_lindblad(couplings, eig);

  Matrix diff = gme.to_super().entries() - dressed.to_super().entries();
  CHECK(max_abs(diff) < 1e-10 * dressed.to_super().max_abs_entry());
}

TEST_CASE("gme dephasing terms act at the Ohmic rate") {
  // A pure-dephasing toy: qubit whose coupling quadrature is diagonal in the
  // energy basis. The S0 block then damps coherences at Omega (c00 - c11)^2.
  Matrix h = Matrix::Zero(2, 2);
  h.diagonal() << -0.5, 0.5;
  Matrix s = Matrix::Zero(2, 2);
  s.diagonal() << 0.35, -0.15;  // coupling operator, (s + s^dag) diagonal
  EigenSystem eig = eigh(Operator(h));
  BathSpec bath{0.08, 1.0, 1.3};

  GeneratorTerms gme = gme_liouvillian(
      {DressedCoupling{build_transition_table(Operator(s), eig), bath}}, eig,
      GmeOptions{FilterSpec::none(), true, GmeMode::reduced, 0.0});

  Matrix coh = Matrix::Zero(2, 2);
  coh(0, 1) = 1.0;
  Matrix dcoh = gme.to_super().apply(coh);
  double c00 = 2 * 0.35, c11 = 2 * -0.15;  // quadrature doubles the diagonal
  double expected = -dephasing_rate(bath) * (c00 - c11) * (c00 - c11);
  CHECK(dcoh(0, 1).real() == Catch::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(dcoh(0, 0)) < 1e-15);

  // Dephasing off: nothing happens at all (no positive-frequency elements).
  GeneratorTerms off = gme_liouvillian(
      {DressedCoupling{build_transition_table(Operator(s), eig), bath}}, eig,
      GmeOptions{FilterSpec::none(), false, GmeMode::reduced, 0.0});
  CHECK(off.to_super().max_abs_entry() < 1e-15);
}

TEST_CASE("full mode adds the fast classes and stays trace preserving") {
  RabiModel m = build_rabi(paper_rabi(1.0, 6));
  EigenSystem eig = eigh(m.hamiltonian);
  auto couplings = rabi_couplings(m, eig, 0.5, 0.03);

  GeneratorTerms reduced =
      gme_liouvillian(couplings, eig,
                      GmeOptions{FilterSpec::none(), true, GmeMode::reduced, 0.0});
  GeneratorTerms full =
      gme_liouvillian(couplings, eig,
                      GmeOptions{FilterSpec::none(), true, GmeMode::full, 0.0});

  // The extra classes are there and they are not small bookkeeping noise.
  Matrix extra = full.to_super().entries() - reduced.to_super().entries();
  CHECK(max_abs(extra) > 1e-8);

  // With a tight filter the fast classes disappear again.
  GeneratorTerms full_filtered =
      gme_liouvillian(couplings, eig,
                      GmeOptions{FilterSpec::window(1e-4), true, GmeMode::full, 0.0});
  GeneratorTerms reduced_filtered =
      gme_liouvillian(couplings, eig,
                      GmeOptions{FilterSpec::window(1e-4), true,
                                 GmeMode::reduced, 0.0});
  CHECK(max_abs(full_filtered.to_super().entries() -
                reduced_filtered.to_super().entries()) < 1e-14);
}

TEST_CASE("hu-style optomech dissipator is stationary in its own basis") {
  OptomechParams p;
  p.omega_c = 1.016;
  p.omega_m = 1.0;
  p.g = 0.1;
  p.n_c = 4;
  p.n_m = 4;
  p.include_dce = false;
  OptomechModel m = build_optomech(p);

  EigenSystem eig_om = eigh(m.h0 + m.v_om);
  std::vector<DressedCoupling> couplings = {
      DressedCoupling{build_transition_table(m.cavity_lowering, eig_om),
                      {0.025, p.omega_c, 0.0}},
      DressedCoupling{build_transition_table(m.mech_lowering, eig_om),
                      {0.05, p.omega_m, 0.0}}};
  GeneratorTerms hu = hu_style_optomech(couplings, eig_om);

  // Ground state of H_0 + V_om is exactly stationary when V_DCE is absent
  // from the dynamics.
  Matrix ground = Matrix::Zero(eig_om.dim(), eig_om.dim());
  ground(0, 0) = 1.0;
  Superoperator s = hu.to_super();
  CHECK(max_abs(s.apply(ground)) < 1e-12 * s.max_abs_entry());
}
