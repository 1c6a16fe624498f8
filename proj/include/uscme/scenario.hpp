#pragma once

#include "dissipators.hpp"
#include "dynamics.hpp"
#include "models.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace uscme {

inline constexpr const char* kToolVersion = "0.1.0";

enum class SolverMethod { standard, dressed, gme, gme_full, hu };

inline std::string to_string(SolverMethod m) {
  switch (m) {
    case SolverMethod::standard: return "standard";
    case SolverMethod::dressed: return "dressed";
    case SolverMethod::gme: return "gme";
    case SolverMethod::gme_full: return "gme-full";
    case SolverMethod::hu: return "hu";
  }
  return "?";
}

inline SolverMethod solver_from_string(const std::string& s) {
  if (s == "standard") return SolverMethod::standard;
  if (s == "dressed") return SolverMethod::dressed;
  if (s == "gme") return SolverMethod::gme;
  if (s == "gme-full") return SolverMethod::gme_full;
  if (s == "hu") return SolverMethod::hu;
  throw std::invalid_argument("unknown solver method '" + s + "'");
}

struct SolverSpec {
  SolverMethod method = SolverMethod::gme;
  bool dephasing = false;
};

struct BathEntry {
  std::string target;  // "cavity" | "qubit" | "mech"
  BathSpec spec;       // temperature overridden by the sweep value
};

struct ScenarioConfig {
  std::string scenario;  // rabi-temp-sweep | rabi-compare | dce | hu-failure | custom
  std::string model_type;  // "rabi" | "optomech"
  RabiParams rabi;
  OptomechParams optomech;
  std::vector<BathEntry> baths;
  FilterSpec filter = FilterSpec::none();
  std::optional<DriveSpec> drive;
  std::vector<SolverSpec> solvers;
  TimeGrid grid{1.0, 100};
  std::vector<double> temperatures;
  std::string initial = "ground";  // ground | gibbs
  std::string output_dir;
  double rtol = 1e-8;
  double atol = 1e-10;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Presets: the paper's operating points in units of the scenario reference
// frequency (omega_c for circuit QED, omega_m for optomechanics).
// ---------------------------------------------------------------------------

inline ScenarioConfig preset_config(const std::string& name) {
  ScenarioConfig c;
  c.scenario = name;

  auto rabi_base = [&] {
    c.model_type = "rabi";
    c.rabi.omega_c = 1.0;
    c.rabi.omega_q = 7.97 / 4.0;
    c.rabi.g = 0.157;
    c.rabi.theta = std::acos(2.25 / 7.97);
    c.rabi.n_max = 14;
    c.baths = {{"cavity", {3.75e-4, 1.0, 0.0}},
               {"qubit", {3.75e-4, 7.97 / 4.0, 0.0}}};
    c.filter = FilterSpec::none();
    DriveSpec d;
    d.kind = DriveSpec::Kind::gaussian_pulse;
    d.amplitude = M_PI / 3.0 * 0.1;
    d.carrier = 0.0;  // resolved against the spectrum at build time
    d.width = 0.0;    // likewise
    d.center = 0.0;
    d.target = "qubit";
    c.drive = d;
    c.grid = TimeGrid{3600.0, 1200};
  };
  auto optomech_base = [&] {
    c.model_type = "optomech";
    c.optomech.omega_m = 1.0;
    c.optomech.omega_c = 1.016;
    c.optomech.g = 0.1;
    c.optomech.n_c = 7;
    c.optomech.n_m = 7;
    c.optomech.include_dce = true;
    c.baths = {{"cavity", {0.025, 1.016, 0.0}}, {"mech", {0.05, 1.0, 0.0}}};
    c.filter = FilterSpec::window(10 * 0.05);
  };

  if (name == "rabi-temp-sweep") {
    rabi_base();
    c.solvers = {{SolverMethod::gme, false}};
    c.temperatures = {0.0, 0.25, 0.5, 0.75};
  } else if (name == "rabi-compare") {
    rabi_base();
    c.solvers = {{SolverMethod::gme, false}, {SolverMethod::dressed, false}};
    c.temperatures = {0.75};
  } else if (name == "dce") {
    optomech_base();
    DriveSpec d;
    d.kind = DriveSpec::Kind::continuous;
    d.amplitude = 0.05 / 2.0;
    d.carrier = 1.0;
    d.target = "mech";
    c.drive = d;
    c.solvers = {{SolverMethod::gme, false}};
    c.temperatures = {0.0, 0.5};
    c.initial = "gibbs";  // collapses to the ground state at T = 0
    c.grid = TimeGrid{160.0, 800};
  } else if (name == "hu-failure") {
    optomech_base();
    c.solvers = {{SolverMethod::hu, false}, {SolverMethod::gme, false}};
    c.temperatures = {0.0};
    c.grid = TimeGrid{100.0, 400};
  } else if (name == "custom") {
    // everything comes from the config file
  } else {
    throw std::invalid_argument("unknown scenario '" + name + "'");
  }
  return c;
}

// ---------------------------------------------------------------------------
// JSON configuration (strict: unknown keys are rejected, every offending
// field is reported)
// ---------------------------------------------------------------------------

namespace detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& where, std::vector<std::string>& errs) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      errs.push_back(where + ": unknown key '" + it.key() + "'");
}

template <typename T>
void read_field(const json& j, const char* key, T& out,
                const std::string& where, std::vector<std::string>& errs) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const std::exception& e) {
    errs.push_back(where + "." + key + ": " + e.what());
  }
}

}  // namespace detail

/// Overlay a JSON document onto a config (typically a preset). Throws
/// std::invalid_argument listing every offending field.
inline void apply_config_json(ScenarioConfig& c, const nlohmann::json& j) {
  using detail::check_keys;
  using detail::read_field;
  std::vector<std::string> errs;

  check_keys(j,
             {"scenario", "model", "baths", "filter", "drive", "solver",
              "solvers", "grid", "temperatures", "initial", "output",
              "tolerances"},
             "config", errs);

  read_field(j, "scenario", c.scenario, "config", errs);
  read_field(j, "initial", c.initial, "config", errs);
  read_field(j, "output", c.output_dir, "config", errs);
  read_field(j, "temperatures", c.temperatures, "config", errs);

  if (j.contains("model") && j.at("model").is_object()) {
    const auto& m = j.at("model");
    check_keys(m,
               {"type", "omega_c", "omega_q", "omega_m", "g", "theta", "n_max",
                "n_c", "n_m", "include_dce", "flux_gap",
                "flux_persistent_energy"},
               "model", errs);
    read_field(m, "type", c.model_type, "model", errs);
    if (c.model_type == "rabi") {
      read_field(m, "omega_c", c.rabi.omega_c, "model", errs);
      read_field(m, "omega_q", c.rabi.omega_q, "model", errs);
      read_field(m, "g", c.rabi.g, "model", errs);
      read_field(m, "theta", c.rabi.theta, "model", errs);
      read_field(m, "n_max", c.rabi.n_max, "model", errs);
      // Alternative qubit parameterization: gap + persistent-current energy.
      if (m.contains("flux_gap")) {
        FluxQubitParams fq;
        read_field(m, "flux_gap", fq.gap, "model", errs);
        read_field(m, "flux_persistent_energy", fq.persistent_energy, "model",
                   errs);
        if (errs.empty()) {
          auto q = flux_qubit_frequency(fq);
          c.rabi.omega_q = q.omega_q;
          c.rabi.theta = q.theta;
        }
      }
    } else if (c.model_type == "optomech") {
      read_field(m, "omega_c", c.optomech.omega_c, "model", errs);
      read_field(m, "omega_m", c.optomech.omega_m, "model", errs);
      read_field(m, "g", c.optomech.g, "model", errs);
      read_field(m, "n_c", c.optomech.n_c, "model", errs);
      read_field(m, "n_m", c.optomech.n_m, "model", errs);
      read_field(m, "include_dce", c.optomech.include_dce, "model", errs);
    } else {
      errs.push_back("model.type: must be 'rabi' or 'optomech'");
    }
  }

  if (j.contains("baths")) {
    if (!j.at("baths").is_array()) {
      errs.push_back("baths: must be an array");
    } else {
      c.baths.clear();
      int idx = 0;
      for (const auto& b : j.at("baths")) {
        std::string where = "baths[" + std::to_string(idx++) + "]";
        check_keys(b, {"target", "gamma", "ref_freq", "temperature"}, where,
                   errs);
        BathEntry e;
        read_field(b, "target", e.target, where, errs);
        read_field(b, "gamma", e.spec.gamma, where, errs);
        read_field(b, "ref_freq", e.spec.ref_freq, where, errs);
        read_field(b, "temperature", e.spec.temperature, where, errs);
        c.baths.push_back(e);
      }
    }
  }

  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    check_keys(f, {"bandwidth"}, "filter", errs);
    if (f.contains("bandwidth")) {
      if (f.at("bandwidth").is_null())
        c.filter = FilterSpec::none();
      else {
        double bw = 0.0;
        read_field(f, "bandwidth", bw, "filter", errs);
        c.filter = FilterSpec::window(bw);
      }
    }
  }

  if (j.contains("drive")) {
    if (j.at("drive").is_null()) {
      c.drive.reset();
    } else {
      const auto& d = j.at("drive");
      check_keys(d, {"kind", "amplitude", "carrier", "center", "width", "target"},
                 "drive", errs);
      DriveSpec ds = c.drive.value_or(DriveSpec{});
      std::string kind = ds.kind == DriveSpec::Kind::continuous
                             ? "continuous"
                             : "gaussian_pulse";
      read_field(d, "kind", kind, "drive", errs);
      if (kind == "gaussian_pulse")
        ds.kind = DriveSpec::Kind::gaussian_pulse;
      else if (kind == "continuous")
        ds.kind = DriveSpec::Kind::continuous;
      else
        errs.push_back("drive.kind: must be 'gaussian_pulse' or 'continuous'");
      read_field(d, "amplitude", ds.amplitude, "drive", errs);
      read_field(d, "carrier", ds.carrier, "drive", errs);
      read_field(d, "center", ds.center, "drive", errs);
      read_field(d, "width", ds.width, "drive", errs);
      read_field(d, "target", ds.target, "drive", errs);
      c.drive = ds;
    }
  }

  auto parse_solver = [&](const nlohmann::json& s, const std::string& where) {
    check_keys(s, {"method", "dephasing"}, where, errs);
    SolverSpec sp;
    std::string method = "gme";
    read_field(s, "method", method, where, errs);
    try {
      sp.method = solver_from_string(method);
    } catch (const std::exception& e) {
      errs.push_back(where + ".method: " + e.what());
    }
    read_field(s, "dephasing", sp.dephasing, where, errs);
    return sp;
  };
  if (j.contains("solver")) {
    c.solvers = {parse_solver(j.at("solver"), "solver")};
  }
  if (j.contains("solvers")) {
    if (!j.at("solvers").is_array()) {
      errs.push_back("solvers: must be an array");
    } else {
      c.solvers.clear();
      int idx = 0;
      for (const auto& s : j.at("solvers"))
        c.solvers.push_back(
            parse_solver(s, "solvers[" + std::to_string(idx++) + "]"));
    }
  }

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    check_keys(g, {"t_end", "n_samples"}, "grid", errs);
    read_field(g, "t_end", c.grid.t_end, "grid", errs);
    read_field(g, "n_samples", c.grid.n_samples, "grid", errs);
  }

  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    check_keys(t, {"rtol", "atol"}, "tolerances", errs);
    read_field(t, "rtol", c.rtol, "tolerances", errs);
    read_field(t, "atol", c.atol, "tolerances", errs);
  }

  if (!errs.empty()) {
    std::string msg = "configuration errors:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw std::invalid_argument(msg);
  }
}

inline ScenarioConfig load_config(const std::string& scenario_name,
                                  const std::string& config_path = "") {
  nlohmann::json doc;
  std::string name = scenario_name;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::invalid_argument("cannot open config file " + config_path);
    try {
      in >> doc;
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("config parse error: ") + e.what());
    }
    if (name.empty() && doc.contains("scenario"))
      name = doc.at("scenario").get<std::string>();
  }
  if (name.empty())
    throw std::invalid_argument("no scenario given (flag or config field)");
  ScenarioConfig c = preset_config(name);
  if (!doc.is_null() && !doc.empty()) apply_config_json(c, doc);
  c.validate();
  return c;
}

inline void ScenarioConfig::validate() const {
  std::vector<std::string> errs;
  auto note = [&](const std::string& s) { errs.push_back(s); };

  static const std::set<std::string> known_scenarios = {
      "rabi-temp-sweep", "rabi-compare", "dce", "hu-failure", "custom"};
  if (!known_scenarios.count(scenario))
    note("scenario: unknown name '" + scenario + "'");

  if (model_type != "rabi" && model_type != "optomech")
    note("model.type: must be 'rabi' or 'optomech'");
  try {
    if (model_type == "rabi") rabi.validate();
    if (model_type == "optomech") optomech.validate();
  } catch (const std::exception& e) {
    note(std::string("model: ") + e.what());
  }

  if (baths.empty()) note("baths: at least one reservoir required");
  for (const auto& b : baths) {
    bool target_ok = b.target == "cavity" ||
                     (model_type == "rabi" && b.target == "qubit") ||
                     (model_type == "optomech" && b.target == "mech");
    if (!target_ok)
      note("baths: target '" + b.target + "' invalid for model " + model_type);
    try {
      b.spec.validate();
    } catch (const std::exception& e) {
      note(std::string("baths(") + b.target + "): " + e.what());
    }
  }

  try {
    filter.validate();
  } catch (const std::exception& e) {
    note(std::string("filter: ") + e.what());
  }
  if (drive) {
    // width/carrier/center of 0 mean "resolve against the spectrum".
    if (drive->amplitude < 0.0) note("drive.amplitude: must be >= 0");
    if (drive->kind == DriveSpec::Kind::gaussian_pulse && drive->width < 0.0)
      note("drive.width: must be >= 0 (0 resolves automatically)");
    bool target_ok = drive->target == "qubit" || drive->target == "cavity" ||
                     drive->target == "mech";
    if (!target_ok) note("drive.target: unknown target '" + drive->target + "'");
    if (drive->target == "qubit" && model_type != "rabi")
      note("drive.target: qubit drive requires the rabi model");
    if (drive->target == "mech" && model_type != "optomech")
      note("drive.target: mech drive requires the optomech model");
  }

  if (solvers.empty()) note("solver: at least one solver required");
  for (const auto& s : solvers)
    if (s.method == SolverMethod::hu && model_type != "optomech")
      note("solver: method 'hu' requires the optomech model");

  try {
    grid.validate();
  } catch (const std::exception& e) {
    note(std::string("grid: ") + e.what());
  }
  for (double t : temperatures)
    if (!(t >= 0.0)) note("temperatures: values must be >= 0");
  if (initial != "ground" && initial != "gibbs")
    note("initial: must be 'ground' or 'gibbs'");
  if (!(rtol > 0.0) || !(atol > 0.0))
    note("tolerances: rtol and atol must be > 0");

  if (!errs.empty()) {
    std::string msg = "configuration errors:";
    for (const auto& e : errs) msg += "\n  - " + e;
    throw std::invalid_argument(msg);
  }
}

// ---------------------------------------------------------------------------
// Model assembly shared by run/spectrum
// ---------------------------------------------------------------------------

/// Everything derived from the scenario model at one truncation: the dressed
/// frame, transition tables, observables, and drive targets.
struct ScenarioSystem {
  int dim = 0;
  Operator h_dressed;       // diag(E) in the dressed frame
  EigenSystem eig;
  std::vector<std::string> bath_targets;
  std::vector<TransitionTable> tables;      // one per bath, dressed frame
  std::vector<Operator> bare_lowering;      // per bath, dressed frame
  std::vector<double> bare_freqs;           // per bath
  Operator drive_target;                    // dressed frame (if any drive)
  std::vector<Observable> observables;

  // Optomech extras for the hu solver and for labeling.
  std::optional<EigenSystem> eig_om;        // eigenbasis of H0 + Vom
  Operator h_om_frame;                      // full H in that basis
  std::vector<TransitionTable> tables_om;
  Matrix om_from_dressed;  // change of basis: om-frame = M^dag dressed M? see use
};

inline ScenarioSystem build_system(const ScenarioConfig& c) {
  ScenarioSystem sys;

  if (c.model_type == "rabi") {
    RabiModel m = build_rabi(c.rabi);
    sys.eig = eigh(m.hamiltonian);
    sys.dim = sys.eig.dim();
    Matrix hd = Matrix::Zero(sys.dim, sys.dim);
    hd.diagonal() = sys.eig.energies.cast<Complex>();
    sys.h_dressed = Operator(hd);

    for (const auto& b : c.baths) {
      sys.bath_targets.push_back(b.target);
      const Operator& s = b.target == "cavity" ? m.cavity_lowering
                                               : m.qubit_lowering;
      sys.tables.push_back(build_transition_table(s, sys.eig));
      sys.bare_lowering.push_back(Operator(sys.eig.to_eigenbasis(s.mat())));
      sys.bare_freqs.push_back(b.target == "cavity" ? c.rabi.omega_c
                                                    : c.rabi.omega_q);
    }
    if (c.drive) {
      const Operator& t =
          c.drive->target == "qubit" ? m.qubit_x : m.cavity_lowering;
      sys.drive_target = Operator(sys.eig.to_eigenbasis(t.mat()));
    }

    TransitionTable ta = build_transition_table(m.cavity_lowering, sys.eig);
    Operator ap = assemble_s_plus(ta, sys.eig);
    Operator am = assemble_s_minus(ta, sys.eig);
    sys.observables = {{"nA", dressed_number(ta, sys.eig)},
                       {"G2A", am * am * ap * ap}};
  } else {
    OptomechModel m = build_optomech(c.optomech);
    sys.eig = eigh(m.hamiltonian);
    sys.dim = sys.eig.dim();
    Matrix hd = Matrix::Zero(sys.dim, sys.dim);
    hd.diagonal() = sys.eig.energies.cast<Complex>();
    sys.h_dressed = Operator(hd);

    for (const auto& b : c.baths) {
      sys.bath_targets.push_back(b.target);
      const Operator& s = b.target == "cavity" ? m.cavity_lowering
                                               : m.mech_lowering;
      sys.tables.push_back(build_transition_table(s, sys.eig));
      sys.bare_lowering.push_back(Operator(sys.eig.to_eigenbasis(s.mat())));
      sys.bare_freqs.push_back(b.target == "cavity" ? c.optomech.omega_c
                                                    : c.optomech.omega_m);
    }
    if (c.drive) {
      const Operator& t =
          c.drive->target == "mech" ? m.mech_lowering : m.cavity_lowering;
      sys.drive_target = Operator(sys.eig.to_eigenbasis(t.mat()));
    }

    TransitionTable ta = build_transition_table(m.cavity_lowering, sys.eig);
    TransitionTable tb = build_transition_table(m.mech_lowering, sys.eig);
    Operator ap = assemble_s_plus(ta, sys.eig);
    Operator am = assemble_s_minus(ta, sys.eig);
    Operator bp = assemble_s_plus(tb, sys.eig);
    Operator bm = assemble_s_minus(tb, sys.eig);
    sys.observables = {{"nA", dressed_number(ta, sys.eig)},
                       {"nB", dressed_number(tb, sys.eig)},
                       {"G2A", am * am * ap * ap},
                       {"G2B", bm * bm * bp * bp}};

    bool wants_hu = false;
    for (const auto& s : c.solvers)
      if (s.method == SolverMethod::hu) wants_hu = true;
    if (wants_hu) {
      sys.eig_om = eigh(m.h0 + m.v_om);
      sys.h_om_frame = Operator(sys.eig_om->to_eigenbasis(m.hamiltonian.mat()));
      for (const auto& b : c.baths) {
        const Operator& s = b.target == "cavity" ? m.cavity_lowering
                                                 : m.mech_lowering;
        sys.tables_om.push_back(build_transition_table(s, *sys.eig_om));
      }
      // Populations of the lowest full-H excited states, labelled by their
      // dominant bare character (one phonon, one photon).
      Matrix p1 = Matrix::Zero(sys.dim, sys.dim);
      p1(1, 1) = 1.0;
      Matrix p2 = Matrix::Zero(sys.dim, sys.dim);
      p2(2, 2) = 1.0;
      sys.observables.push_back({"rho11", Operator(p1)});
      sys.observables.push_back({"rho22", Operator(p2)});
    }
  }
  return sys;
}

/// Resolve preset drive placeholders (carrier at the doublet midpoint, width
/// tied to the observed splitting) once the spectrum is known.
inline DriveSpec resolve_drive(const ScenarioConfig& c, const ScenarioSystem& sys) {
  DriveSpec d = *c.drive;
  if (d.kind == DriveSpec::Kind::gaussian_pulse) {
    const auto& e = sys.eig.energies;
    if (d.carrier == 0.0) d.carrier = 0.5 * (e(3) + e(2)) - e(0);
    if (d.width == 0.0) {
      double splitting = std::max(e(3) - e(2), 1e-12);
      // Broad against the doublet splitting, selective against the ~unit
      // distance to other transitions, short against 1/gamma.
      d.width = 0.15 / splitting;
    }
    if (d.center == 0.0) d.center = 5.0 * d.width;
  } else if (d.carrier == 0.0) {
    d.carrier = c.model_type == "optomech" ? c.optomech.omega_m : 1.0;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Run orchestration
// ---------------------------------------------------------------------------

struct RunUnit {
  // A sweep value overrides every bath temperature (the figure convention
  // T_gamma = T_kappa); without one the per-bath config temperatures stand.
  std::optional<double> temperature;
  SolverSpec solver;
};

struct RunResult {
  RunUnit unit;
  std::string csv_path;
  double wall_seconds = 0.0;
  Trajectory trajectory;
};

inline std::vector<BathEntry> baths_at_temperature(
    const std::vector<BathEntry>& baths, std::optional<double> temp) {
  std::vector<BathEntry> out = baths;
  if (temp)
    for (auto& b : out) b.spec.temperature = *temp;
  return out;
}

/// Assemble the requested dissipator in the dressed frame (om frame for hu).
inline GeneratorTerms build_dissipator(const ScenarioConfig& c,
                                       const ScenarioSystem& sys,
                                       const SolverSpec& solver,
                                       std::optional<double> temp) {
  std::vector<BathEntry> baths = baths_at_temperature(c.baths, temp);

  if (solver.method == SolverMethod::standard) {
    std::vector<StandardCoupling> ops;
    for (std::size_t i = 0; i < baths.size(); ++i)
      ops.push_back(StandardCoupling{sys.bare_lowering[i], baths[i].spec,
                                     sys.bare_freqs[i]});
    return standard_lindblad(ops, sys.eig.energies);
  }

  if (solver.method == SolverMethod::hu) {
    std::vector<DressedCoupling> cpl;
    for (std::size_t i = 0; i < baths.size(); ++i)
      cpl.push_back(DressedCoupling{sys.tables_om[i], baths[i].spec});
    return hu_style_optomech(cpl, *sys.eig_om);
  }

  std::vector<DressedCoupling> cpl;
  for (std::size_t i = 0; i < baths.size(); ++i)
    cpl.push_back(DressedCoupling{sys.tables[i], baths[i].spec});

  if (solver.method == SolverMethod::dressed)
    return dressed_secular_lindblad(cpl, sys.eig);

  GmeOptions opts;
  opts.filter = c.filter;
  opts.include_dephasing = solver.dephasing;
  opts.mode = solver.method == SolverMethod::gme_full ? GmeMode::full
                                                      : GmeMode::reduced;
  return gme_liouvillian(cpl, sys.eig, opts);
}

inline Operator initial_state(const ScenarioConfig& c, const ScenarioSystem& sys,
                              std::optional<double> temp) {
  Matrix rho = Matrix::Zero(sys.dim, sys.dim);
  double t0 = temp.value_or(c.baths.front().spec.temperature);
  if (c.initial == "gibbs" && t0 > 0.0) {
    RealVector w = gibbs_weights(sys.eig.energies, t0);
    rho.diagonal() = w.cast<Complex>();
  } else {
    rho(0, 0) = 1.0;
  }
  return Operator(rho);
}

/// Execute one (temperature, solver) unit and return its trajectory. All
/// propagation happens in the dressed frame of the full Hamiltonian, except
/// the hu solver which runs in the eigenbasis of H0 + Vom with the DCE term
/// carried as a coherent off-diagonal block.
inline RunResult run_unit(const ScenarioConfig& c, const ScenarioSystem& sys,
                          const RunUnit& unit) {
  auto t0 = std::chrono::steady_clock::now();

  GeneratorTerms diss = build_dissipator(c, sys, unit.solver, unit.temperature);

  PropagateOptions opts;
  opts.rtol = c.rtol;
  opts.atol = c.atol;

  std::vector<DriveTerm> drives;
  std::optional<DriveSpec> drive;
  if (c.drive) drive = resolve_drive(c, sys);

  Operator rho0 = initial_state(c, sys, unit.temperature);
  Trajectory traj;

  if (unit.solver.method == SolverMethod::hu) {
    // Transform state, drive, and observables into the om frame.
    const EigenSystem& om = *sys.eig_om;
    auto to_om = [&](const Matrix& dressed_frame) {
      return om.to_eigenbasis(sys.eig.from_eigenbasis(dressed_frame));
    };
    for (const auto& ob : sys.observables)
      opts.observables.push_back({ob.name, Operator(to_om(ob.op.mat()))});
    if (drive) {
      Operator target_om(to_om(sys.drive_target.mat()));
      drives = make_drive_terms(*drive, target_om);
    }
    Operator rho0_om(to_om(rho0.mat()));
    traj = propagate(sys.h_om_frame, std::move(drives), diss, rho0_om,
                     c.grid, opts);
  } else {
    opts.observables = sys.observables;
    if (drive) drives = make_drive_terms(*drive, sys.drive_target);
    traj = propagate(sys.h_dressed, std::move(drives), diss, rho0, c.grid,
                     opts);
  }

  auto t1 = std::chrono::steady_clock::now();
  RunResult r;
  r.unit = unit;
  r.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  r.trajectory = std::move(traj);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// CSV with header t,<obs...>; normalized g2 columns are appended for
/// optomech runs, blank where the population denominator vanishes.
inline void write_trajectory_csv(const Trajectory& traj,
                                 const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);

  bool has_g2 = false;
  for (const auto& n : traj.names)
    if (n == "G2A") has_g2 = true;
  bool has_b = false;
  for (const auto& n : traj.names)
    if (n == "G2B") has_b = true;

  out << "t";
  for (const auto& n : traj.names) out << "," << n;
  if (has_g2) out << ",g2A";
  if (has_b) out << ",g2B";
  out << "\n";

  auto normalized = [&](const char* g2, const char* nn, std::size_t k,
                        std::string& cell) {
    double num = traj.find(g2)[k], den = traj.find(nn)[k];
    if (den > 1e-12)
      cell = format_g17(num / (den * den));
    else
      cell.clear();
  };

  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    out << format_g17(traj.times[k]);
    for (std::size_t i = 0; i < traj.names.size(); ++i)
      out << "," << format_g17(traj.series[i][k]);
    if (has_g2) {
      std::string cell;
      normalized("G2A", "nA", k, cell);
      out << "," << cell;
    }
    if (has_b) {
      std::string cell;
      normalized("G2B", "nB", k, cell);
      out << "," << cell;
    }
    out << "\n";
  }
}

inline nlohmann::json config_to_json(const ScenarioConfig& c,
                                     const std::optional<DriveSpec>& resolved) {
  nlohmann::json j;
  j["scenario"] = c.scenario;
  nlohmann::json m;
  m["type"] = c.model_type;
  if (c.model_type == "rabi") {
    m["omega_c"] = c.rabi.omega_c;
    m["omega_q"] = c.rabi.omega_q;
    m["g"] = c.rabi.g;
    m["theta"] = c.rabi.theta;
    m["n_max"] = c.rabi.n_max;
  } else {
    m["omega_c"] = c.optomech.omega_c;
    m["omega_m"] = c.optomech.omega_m;
    m["g"] = c.optomech.g;
    m["n_c"] = c.optomech.n_c;
    m["n_m"] = c.optomech.n_m;
    m["include_dce"] = c.optomech.include_dce;
  }
  j["model"] = m;
  j["baths"] = nlohmann::json::array();
  for (const auto& b : c.baths)
    j["baths"].push_back({{"target", b.target},
                          {"gamma", b.spec.gamma},
                          {"ref_freq", b.spec.ref_freq},
                          {"temperature", b.spec.temperature}});
  j["filter"]["bandwidth"] =
      c.filter.bounded() ? nlohmann::json(c.filter.bandwidth)
                         : nlohmann::json(nullptr);
  if (resolved) {
    const DriveSpec& d = *resolved;
    j["drive"] = {{"kind", d.kind == DriveSpec::Kind::continuous
                               ? "continuous"
                               : "gaussian_pulse"},
                  {"amplitude", d.amplitude},
                  {"carrier", d.carrier},
                  {"center", d.center},
                  {"width", d.width},
                  {"target", d.target}};
  } else {
    j["drive"] = nullptr;
  }
  j["solvers"] = nlohmann::json::array();
  for (const auto& s : c.solvers)
    j["solvers"].push_back(
        {{"method", to_string(s.method)}, {"dephasing", s.dephasing}});
  j["grid"] = {{"t_end", c.grid.t_end}, {"n_samples", c.grid.n_samples}};
  j["temperatures"] = c.temperatures;
  j["initial"] = c.initial;
  j["tolerances"] = {{"rtol", c.rtol}, {"atol", c.atol}};
  return j;
}

struct RunOptions {
  int jobs = 1;
  bool check_convergence = false;
};

struct RunReport {
  std::vector<std::string> csv_paths;
  std::string manifest_path;
};

inline std::string temp_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t);
  return buf;
}

/// Run every (temperature x solver) combination of a scenario, write one CSV
/// per combination plus a manifest that fully reproduces the run.
inline RunReport run_scenario(const ScenarioConfig& c,
                              const RunOptions& ropts = {}) {
  namespace fs = std::filesystem;
  c.validate();
  std::string outdir = c.output_dir.empty() ? "out" : c.output_dir;
  fs::create_directories(outdir);

  ScenarioSystem sys = build_system(c);
  std::optional<DriveSpec> resolved;
  if (c.drive) resolved = resolve_drive(c, sys);

  std::vector<RunUnit> units;
  if (c.temperatures.empty()) {
    for (const auto& s : c.solvers) units.push_back(RunUnit{std::nullopt, s});
  } else {
    for (double t : c.temperatures)
      for (const auto& s : c.solvers) units.push_back(RunUnit{t, s});
  }

  std::vector<RunResult> results(units.size());
  auto work = [&](std::size_t i) { results[i] = run_unit(c, sys, units[i]); };
  if (ropts.jobs <= 1) {
    for (std::size_t i = 0; i < units.size(); ++i) work(i);
  } else {
    std::vector<std::future<void>> futs;
    std::size_t next = 0;
    while (next < units.size() || !futs.empty()) {
      while (int(futs.size()) < ropts.jobs && next < units.size())
        futs.push_back(std::async(std::launch::async, work, next++));
      futs.front().get();
      futs.erase(futs.begin());
    }
  }

  RunReport report;
  nlohmann::json manifest;
  manifest["tool"] = "uscme";
  manifest["version"] = kToolVersion;
  manifest["config"] = config_to_json(c, resolved);
  manifest["dim"] = sys.dim;
  manifest["zero_tol"] = default_zero_tol(sys.eig);
  manifest["runs"] = nlohmann::json::array();

  for (std::size_t i = 0; i < units.size(); ++i) {
    std::string tlabel = units[i].temperature
                             ? "T" + temp_label(*units[i].temperature)
                             : "Tcfg";
    std::string name = c.scenario + "_" + to_string(units[i].solver.method) +
                       "_" + tlabel + ".csv";
    std::string path = (fs::path(outdir) / name).string();
    write_trajectory_csv(results[i].trajectory, path);
    report.csv_paths.push_back(path);
    nlohmann::json rj = {{"file", name},
                         {"solver", to_string(units[i].solver.method)},
                         {"dephasing", units[i].solver.dephasing},
                         {"wall_seconds", results[i].wall_seconds}};
    rj["temperature"] = units[i].temperature
                            ? nlohmann::json(*units[i].temperature)
                            : nlohmann::json(nullptr);
    manifest["runs"].push_back(rj);
  }

  // Truncation check: raise each truncation by 2 and compare every series.
  if (ropts.check_convergence) {
    ScenarioConfig raised = c;
    if (c.model_type == "rabi")
      raised.rabi.n_max += 2;
    else {
      raised.optomech.n_c += 2;
      raised.optomech.n_m += 2;
    }
    ScenarioSystem rsys = build_system(raised);
    nlohmann::json deltas = nlohmann::json::array();
    for (std::size_t i = 0; i < units.size(); ++i) {
      RunResult rres = run_unit(raised, rsys, units[i]);
      nlohmann::json d;
      d["file"] = manifest["runs"][i]["file"];
      for (std::size_t s = 0; s < results[i].trajectory.names.size(); ++s) {
        const auto& base = results[i].trajectory.series[s];
        const auto& fine = rres.trajectory.series[s];
        double scale = 0.0;
        for (double v : base) scale = std::max(scale, std::abs(v));
        double diff = 0.0;
        for (std::size_t k = 0; k < base.size(); ++k)
          diff = std::max(diff, std::abs(base[k] - fine[k]));
        d[results[i].trajectory.names[s]] =
            scale > 0.0 ? diff / scale : 0.0;
      }
      deltas.push_back(d);
    }
    manifest["convergence_deltas"] = deltas;
  } else {
    manifest["convergence_deltas"] = nullptr;
  }

  std::string mpath = (fs::path(outdir) / "manifest.json").string();
  std::ofstream mout(mpath, std::ios::binary);
  mout << manifest.dump(2) << "\n";
  report.manifest_path = mpath;
  return report;
}

// ---------------------------------------------------------------------------
// Spectrum inspection
// ---------------------------------------------------------------------------

/// Eigenvalues, transition tables, and the hybridized doublet of interest,
/// as a JSON document.
inline nlohmann::json spectrum_report(const ScenarioConfig& c) {
  c.validate();
  ScenarioSystem sys = build_system(c);

  nlohmann::json j;
  j["scenario"] = c.scenario;
  j["dim"] = sys.dim;
  j["energies"] = nlohmann::json::array();
  for (int i = 0; i < sys.dim; ++i)
    j["energies"].push_back(sys.eig.energies(i) - sys.eig.energies(0));

  j["tables"] = nlohmann::json::array();
  for (std::size_t i = 0; i < sys.tables.size(); ++i) {
    nlohmann::json tj;
    tj["target"] = sys.bath_targets[i];
    tj["zero_tol"] = sys.tables[i].zero_tol;
    tj["transitions"] = nlohmann::json::array();
    for (const Transition& t : sys.tables[i].transitions)
      tj["transitions"].push_back(
          {{"j", t.j},
           {"k", t.k},
           {"delta", t.delta},
           {"element_sq", std::norm(t.element)},
           {"class", sys.tables[i].is_zero_frequency(t)
                         ? "zero"
                         : "positive"}});
    j["tables"].push_back(tj);
  }

  // Doublet identification: the two dressed states carrying the most weight
  // of the probe bare state (|e,0> for the Rabi model, |0,2> for optomech).
  Vector probe = Vector::Zero(sys.dim);
  if (c.model_type == "rabi") {
    probe[(c.rabi.n_max + 1) + 0] = 1.0;  // |e, 0>
  } else {
    probe[0 * (c.optomech.n_m + 1) + 2] = 1.0;  // |0, 2>
  }
  std::vector<std::pair<double, int>> weights;
  for (int k = 0; k < sys.dim; ++k)
    weights.push_back({std::norm(probe.dot(sys.eig.vectors.col(k))), k});
  std::sort(weights.rbegin(), weights.rend());
  int lo = std::min(weights[0].second, weights[1].second);
  int hi = std::max(weights[0].second, weights[1].second);
  j["doublet"] = {{"states", {lo, hi}},
                  {"splitting", sys.eig.energies(hi) - sys.eig.energies(lo)},
                  {"weights", {weights[1].first, weights[0].first}}};

  // Smallest adjacent gap, for quick degeneracy inspection.
  int min_k = 0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (int k = 0; k + 1 < sys.dim; ++k) {
    double gap = sys.eig.energies(k + 1) - sys.eig.energies(k);
    if (gap < min_gap) {
      min_gap = gap;
      min_k = k;
    }
  }
  j["min_adjacent_gap"] = {{"states", {min_k, min_k + 1}}, {"gap", min_gap}};
  return j;
}

}  // namespace uscme
