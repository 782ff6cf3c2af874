// optisync: validate, run and sweep simulation scenarios.
//
// Exit codes: 0 success, 2 invalid scenario or arguments, 3 runtime failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "optisync/error.hpp"
#include "optisync/runner.hpp"
#include "optisync/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitRuntime = 3;

std::string default_out_dir() {
  const char* env = std::getenv("OPTISYNC_OUT_DIR");
  return env && *env ? env : "out";
}

std::vector<std::string> split_values(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw) {
    std::size_t pos = 0;
    while (pos <= item.size()) {
      const std::size_t comma = item.find(',', pos);
      std::string v = item.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      if (!v.empty()) out.push_back(v);
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  return out;
}

int report_invalid(const optisync::ValidationFailed& e) {
  std::cerr << "invalid scenario (" << e.issues().size() << " problem" << (e.issues().size() == 1 ? "" : "s")
            << "):\n";
  for (const auto& issue : e.issues()) std::cerr << "  " << issue << '\n';
  return kExitInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optical switching and time synchronization simulator"};
  app.require_subcommand(1);

  std::string file;
  std::string out_dir = default_out_dir();
  std::optional<std::uint64_t> seed;
  std::string param;
  std::vector<std::string> values;

  auto* validate = app.add_subcommand("validate", "Load a scenario and report every validation problem");
  validate->add_option("file", file, "Scenario JSON file")->required();

  auto* run = app.add_subcommand("run", "Run a scenario and write CSV reports");
  run->add_option("file", file, "Scenario JSON file")->required();
  run->add_option("--out", out_dir, "Output directory (default $OPTISYNC_OUT_DIR or ./out)");
  run->add_option("--seed", seed, "Override the scenario root seed");

  auto* sw = app.add_subcommand("sweep", "Run one scenario per parameter value");
  sw->add_option("file", file, "Scenario JSON file")->required();
  sw->add_option("--param", param, "Dotted parameter path, e.g. control.scheduling_overhead")->required();
  sw->add_option("--values", values, "Comma- or space-separated values")->required();
  sw->add_option("--out", out_dir, "Output directory (default $OPTISYNC_OUT_DIR or ./out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  try {
    const optisync::Scenario scenario = optisync::load_scenario(file);
    if (*validate) {
      std::cout << "ok: " << scenario.id << " (" << optisync::to_string(scenario.kind) << ", hash "
                << scenario.fingerprint() << ")\n";
      return kExitOk;
    }
    if (*run) {
      const auto report = optisync::run_scenario(scenario, out_dir, seed);
      optisync::print_report(std::cout, report);
      return kExitOk;
    }
    const auto reports = optisync::sweep(scenario, param, split_values(values), out_dir);
    for (std::size_t i = 0; i < reports.size(); ++i) {
      std::cout << "[" << param << " = " << split_values(values)[i] << "]\n";
      optisync::print_report(std::cout, reports[i]);
    }
    std::cout << "wrote " << (std::filesystem::path(out_dir) / "summary.csv").string() << '\n';
    return kExitOk;
  } catch (const optisync::ValidationFailed& e) {
    return report_invalid(e);
  } catch (const optisync::Error& e) {
    std::cerr << "error [" << optisync::to_string(e.code()) << "]: " << e.what() << '\n';
    const bool invalid = e.code() == optisync::Errc::ParseError || e.code() == optisync::Errc::ValidationError ||
                         e.code() == optisync::Errc::UnknownParameter;
    return invalid ? kExitInvalid : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
