#include <catch2/catch_amalgamated.hpp>

#include <uscme/scenario.hpp>

#include <filesystem>
#include <fstream>

using namespace uscme;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("uscme_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A fast, small configuration for pipeline tests.
ScenarioConfig tiny_rabi() {
  ScenarioConfig c = preset_config("rabi-temp-sweep");
  c.rabi.n_max = 4;
  c.grid = TimeGrid{40.0, 20};
  c.temperatures = {0.0, 0.5};
  return c;
}

}  // namespace

TEST_CASE("presets carry the paper operating points") {
  ScenarioConfig rabi = preset_config("rabi-temp-sweep");
  CHECK(rabi.rabi.g == Catch::Approx(0.157));
  CHECK(rabi.rabi.omega_q == Catch::Approx(7.97 / 4.0));
  CHECK(std::cos(rabi.rabi.theta) == Catch::Approx(2.25 / 7.97));
  CHECK(rabi.baths.size() == 2);
  CHECK(rabi.baths[0].spec.gamma == Catch::Approx(3.75e-4));
  CHECK(rabi.temperatures == std::vector<double>{0.0, 0.25, 0.5, 0.75});
  CHECK(rabi.drive.has_value());
  CHECK(rabi.drive->amplitude == Catch::Approx(M_PI / 3.0 * 0.1));
  CHECK_FALSE(rabi.filter.bounded());

  ScenarioConfig dce = preset_config("dce");
  CHECK(dce.optomech.g == Catch::Approx(0.1));
  CHECK(dce.optomech.omega_c == Catch::Approx(1.016));
  CHECK(dce.filter.bounded());
  CHECK(dce.filter.bandwidth == Catch::Approx(0.5));
  CHECK(dce.drive->amplitude == Catch::Approx(0.025));
  CHECK(dce.temperatures == std::vector<double>{0.0, 0.5});

  ScenarioConfig hu = preset_config("hu-failure");
  REQUIRE(hu.solvers.size() == 2);
  CHECK(hu.solvers[0].method == SolverMethod::hu);
  CHECK(hu.solvers[1].method == SolverMethod::gme);

  CHECK_THROWS_AS(preset_config("nonsense"), std::invalid_argument);
}

TEST_CASE("config json overlays and strict key checking") {
  ScenarioConfig c = preset_config("rabi-temp-sweep");
  nlohmann::json j = {
      {"model", {{"type", "rabi"}, {"n_max", 6}}},
      {"grid", {{"t_end", 10.0}, {"n_samples", 5}}},
      {"temperatures", {0.0}},
  };
  apply_config_json(c, j);
  CHECK(c.rabi.n_max == 6);
  CHECK(c.grid.t_end == 10.0);
  CHECK(c.temperatures == std::vector<double>{0.0});

  // Unknown keys anywhere are collected and reported together.
  nlohmann::json bad = {
      {"grdi", {{"t_end", 10.0}}},
      {"model", {{"type", "rabi"}, {"n_mxa", 6}}},
  };
  try {
    apply_config_json(c, bad);
    FAIL("expected config error");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("grdi") != std::string::npos);
    CHECK(msg.find("n_mxa") != std::string::npos);
  }
}

TEST_CASE("flux-qubit parameterization feeds the rabi model") {
  ScenarioConfig c = preset_config("rabi-temp-sweep");
  double gap = 2.25 / 4.0;
  double eps = std::sqrt(std::pow(7.97 / 4.0, 2) - gap * gap);
  nlohmann::json j = {{"model",
                       {{"type", "rabi"},
                        {"flux_gap", gap},
                        {"flux_persistent_energy", eps}}}};
  apply_config_json(c, j);
  CHECK(c.rabi.omega_q == Catch::Approx(7.97 / 4.0).epsilon(1e-12));
  CHECK(std::cos(c.rabi.theta) == Catch::Approx(2.25 / 7.97).epsilon(1e-12));
}

TEST_CASE("validation rejects inconsistent configurations") {
  // hu solver on the rabi model
  ScenarioConfig c = preset_config("rabi-temp-sweep");
  c.solvers = {{SolverMethod::hu, false}};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  // bath target mismatched to the model
  c = preset_config("rabi-temp-sweep");
  c.baths.push_back({"mech", {0.1, 1.0, 0.0}});
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  // negative sweep temperature
  c = preset_config("dce");
  c.temperatures = {-0.5};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  // every failure is listed
  c = preset_config("dce");
  c.temperatures = {-0.5};
  c.initial = "wrong";
  c.grid.t_end = -1.0;
  try {
    c.validate();
    FAIL("expected config error");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("temperatures") != std::string::npos);
    CHECK(msg.find("initial") != std::string::npos);
    CHECK(msg.find("grid") != std::string::npos);
  }
}

TEST_CASE("run writes one csv per unit plus a manifest") {
  TempDir dir("run");
  ScenarioConfig c = tiny_rabi();
  c.output_dir = dir.path.string();

  RunReport report = run_scenario(c);
  REQUIRE(report.csv_paths.size() == 2);
  CHECK(fs::exists(report.csv_paths[0]));
  CHECK(fs::exists(report.csv_paths[1]));
  CHECK(fs::exists(report.manifest_path));

  // Header and row count.
  std::string csv = slurp(report.csv_paths[0]);
  CHECK(csv.rfind("t,nA,G2A", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 22);  // header + 21 samples

  // Manifest references every emitted file and echoes the resolved config.
  nlohmann::json manifest = nlohmann::json::parse(slurp(report.manifest_path));
  CHECK(manifest["runs"].size() == 2);
  CHECK(manifest["config"]["model"]["n_max"] == 4);
  CHECK(manifest["config"]["drive"]["width"].get<double>() > 0.0);
  for (const auto& r : manifest["runs"])
    CHECK(fs::exists(dir.path / r["file"].get<std::string>()));
}

TEST_CASE("identical configs reproduce byte-identical csv output") {
  TempDir dir1("det1"), dir2("det2");
  ScenarioConfig c = tiny_rabi();
  c.temperatures = {0.5};

  c.output_dir = dir1.path.string();
  RunReport r1 = run_scenario(c);
  c.output_dir = dir2.path.string();
  RunReport r2 = run_scenario(c);

  CHECK(slurp(r1.csv_paths[0]) == slurp(r2.csv_paths[0]));
}

TEST_CASE("parallel sweep execution matches serial") {
  TempDir dir1("par1"), dir2("par2");
  ScenarioConfig c = tiny_rabi();

  c.output_dir = dir1.path.string();
  RunReport serial = run_scenario(c, RunOptions{1, false});
  c.output_dir = dir2.path.string();
  RunReport parallel = run_scenario(c, RunOptions{2, false});

  REQUIRE(serial.csv_paths.size() == parallel.csv_paths.size());
  for (std::size_t i = 0; i < serial.csv_paths.size(); ++i)
    CHECK(slurp(serial.csv_paths[i]) == slurp(parallel.csv_paths[i]));
}

TEST_CASE("convergence deltas are recorded on request") {
  TempDir dir("conv");
  ScenarioConfig c = tiny_rabi();
  c.temperatures = {0.0};
  c.output_dir = dir.path.string();

  RunReport report = run_scenario(c, RunOptions{1, true});
  nlohmann::json manifest = nlohmann::json::parse(slurp(report.manifest_path));
  REQUIRE(manifest["convergence_deltas"].is_array());
  // n_max = 4 -> 6 is already well converged for this quick grid.
  for (const auto& d : manifest["convergence_deltas"])
    CHECK(d["nA"].get<double>() < 0.01);
}

TEST_CASE("spectrum report flags the anticrossing doublet") {
  ScenarioConfig c = preset_config("rabi-temp-sweep");
  nlohmann::json j = spectrum_report(c);

  CHECK(j["dim"] == 30);
  CHECK(j["doublet"]["states"][0] == 2);
  CHECK(j["doublet"]["states"][1] == 3);
  CHECK(j["doublet"]["splitting"].get<double>() ==
        Catch::Approx(0.03606347986831).epsilon(1e-6));

  // Decoupled cavity: equally spaced ladder, all positive deltas equal.
  ScenarioConfig free_cav = preset_config("rabi-temp-sweep");
  free_cav.rabi.g = 1e-30;  // validation wants > 0; physically decoupled
  free_cav.rabi.n_max = 5;
  nlohmann::json jf = spectrum_report(free_cav);
  const auto& table = jf["tables"][0];  // cavity coupling
  double delta0 = -1.0;
  int counted = 0;
  for (const auto& t : table["transitions"]) {
    if (t["class"] != "positive") continue;
    // Ignore eigensolver-noise elements (|C| ~ 1e-14 from the untouched
    // near-degenerate qubit sector); the ladder proper has |C| >= 1.
    if (t["element_sq"].get<double>() < 1e-20) continue;
    if (delta0 < 0) delta0 = t["delta"].get<double>();
    CHECK(t["delta"].get<double>() == Catch::Approx(delta0).margin(1e-9));
    ++counted;
  }
  CHECK(counted == 2 * free_cav.rabi.n_max);  // both qubit branches

  // Optomech: |0,2>/|2,0_2> doublet flagged.
  nlohmann::json jo = spectrum_report(preset_config("dce"));
  CHECK(jo["doublet"]["states"][0] == 3);
  CHECK(jo["doublet"]["states"][1] == 5);
}

TEST_CASE("custom scenario with unequal bath temperatures") {
  ScenarioConfig c = preset_config("custom");
  nlohmann::json j = {
      {"model", {{"type", "optomech"}, {"omega_c", 1.016}, {"omega_m", 1.0},
                 {"g", 0.1}, {"n_c", 3}, {"n_m", 3}}},
      {"baths", nlohmann::json::array(
                    {{{"target", "cavity"}, {"gamma", 0.025},
                      {"ref_freq", 1.016}, {"temperature", 0.2}},
                     {{"target", "mech"}, {"gamma", 0.05},
                      {"ref_freq", 1.0}, {"temperature", 0.7}}})},
      {"solver", {{"method", "gme"}}},
      {"grid", {{"t_end", 5.0}, {"n_samples", 10}}},
      {"temperatures", nlohmann::json::array()},
  };
  apply_config_json(c, j);
  c.validate();

  TempDir dir("custom");
  c.output_dir = dir.path.string();
  RunReport report = run_scenario(c);
  REQUIRE(report.csv_paths.size() == 1);
  // With no sweep, the (unequal) bath temperatures are used as given.
  nlohmann::json manifest = nlohmann::json::parse(slurp(report.manifest_path));
  CHECK(manifest["runs"][0]["temperature"].is_null());
  CHECK(manifest["config"]["baths"][0]["temperature"].get<double>() == 0.2);
  CHECK(manifest["config"]["baths"][1]["temperature"].get<double>() == 0.7);
}
