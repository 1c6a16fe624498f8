// Scenario runner: parse a JSON config (or a named preset), build the model
// and dissipator, propagate, and emit CSV series plus a JSON manifest.

#include <uscme/scenario.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string default_outdir() {
  if (const char* env = std::getenv("USCME_OUT")) return env;
  return "";
}

uscme::ScenarioConfig load(const std::string& scenario,
                           const std::string& config, const std::string& out) {
  uscme::ScenarioConfig c = uscme::load_config(scenario, config);
  if (!out.empty()) c.output_dir = out;
  if (c.output_dir.empty()) {
    std::string env = default_outdir();
    c.output_dir = env.empty() ? "out" : env;
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uscme: dissipative dynamics of ultrastrongly coupled systems"};
  app.require_subcommand(1);

  std::string scenario, config, out;
  int jobs = 1;
  bool check_convergence = false;

  CLI::App* run = app.add_subcommand("run", "run a scenario and write CSV data");
  run->add_option("--scenario", scenario,
                  "preset name (rabi-temp-sweep, rabi-compare, dce, "
                  "hu-failure, custom)");
  run->add_option("--config", config, "JSON config file");
  run->add_option("--out", out, "output directory (default $USCME_OUT or ./out)");
  run->add_option("--jobs", jobs, "concurrent sweep points")
      ->check(CLI::PositiveNumber);
  run->add_flag("--check-convergence", check_convergence,
                "re-run at raised truncation and record deltas");

  CLI::App* spec = app.add_subcommand("spectrum",
                                      "dump eigenvalues and transition tables");
  spec->add_option("--scenario", scenario, "preset name");
  spec->add_option("--config", config, "JSON config file");
  spec->add_option("--out", out, "output directory");

  CLI::App* val = app.add_subcommand("validate", "validate a config file");
  val->add_option("--scenario", scenario, "preset name");
  val->add_option("--config", config, "JSON config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(run)) {
      uscme::ScenarioConfig c = load(scenario, config, out);
      uscme::RunOptions ropts;
      ropts.jobs = jobs;
      ropts.check_convergence = check_convergence;
      uscme::RunReport report = uscme::run_scenario(c, ropts);
      for (const auto& p : report.csv_paths) std::cout << p << "\n";
      std::cout << report.manifest_path << "\n";
    } else if (app.got_subcommand(spec)) {
      uscme::ScenarioConfig c = load(scenario, config, out);
      nlohmann::json j = uscme::spectrum_report(c);
      std::filesystem::create_directories(c.output_dir);
      std::string path =
          (std::filesystem::path(c.output_dir) / (c.scenario + "_spectrum.json"))
              .string();
      std::ofstream f(path, std::ios::binary);
      f << j.dump(2) << "\n";
      std::cout << path << "\n";
    } else if (app.got_subcommand(val)) {
      uscme::ScenarioConfig c = uscme::load_config(scenario, config);
      (void)c;
      std::cout << "ok\n";
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const uscme::PropagationError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}
