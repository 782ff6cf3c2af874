#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "optisync/clock.hpp"
#include "optisync/control.hpp"
#include "optisync/engine.hpp"
#include "optisync/fabric.hpp"
#include "optisync/metrics.hpp"
#include "optisync/ptp.hpp"
#include "optisync/scenario.hpp"

namespace optisync {

/// Outcome of one simulated scenario, before anything is written to disk.
struct SimulationResult {
  std::string scenario_id;
  std::uint64_t seed = 0;
  ExperimentKind kind = ExperimentKind::jitter_validation;

  EdgeTrace window_edges;  ///< slave minus master rising 50% crossing per repetition
  EdgeTrace pps_edges;     ///< slave minus master PPS edge per repetition
  EyeHistogram eye;        ///< slave edges relative to the master ramp start
  std::vector<RecoveryRecord> recovery;

  SummaryRow summary() const;
};

/// Live component graph for one scenario. Components are heap-allocated and
/// never move, so references handed out stay valid for the testbed's life.
class Testbed {
 public:
  Testbed(const Scenario& scenario, std::uint64_t seed);
  Testbed(const Testbed&) = delete;
  Testbed& operator=(const Testbed&) = delete;
  ~Testbed();

  Engine& engine() { return engine_; }
  const Scenario& scenario() const { return scenario_; }
  std::uint64_t seed() const { return seed_; }

  LocalClock& clock(const std::string& node);
  DelayLink& link(const std::string& id);
  OpticalLink& optical_link(const std::string& id);
  OpticalSwitch& optical_switch(const std::string& id);
  FpgaDriver& fpga(const std::string& switch_id);
  Agent& agent(const std::string& id);
  Controller& controller() { return *controller_; }
  RecoveryProbe& probe() { return probe_; }
  PpsGenerator* pps(const std::string& node);
  PtpSlavePort* ptp_port(const std::string& node);

  const std::vector<std::string>& switch_ids() const { return switch_order_; }

  /// Starts every periodic process, runs to the scenario duration and
  /// collects the experiment's measurements. Call once.
  SimulationResult run();

 private:
  void start_jitter();
  void request_window(const std::string& agent, std::int64_t rep);
  void start_recovery();
  void collect_jitter(SimulationResult& out) const;

  Scenario scenario_;
  std::uint64_t seed_;
  Engine engine_;
  RecoveryProbe probe_;
  std::map<std::string, std::unique_ptr<LocalClock>> clocks_;
  std::map<std::string, std::unique_ptr<DelayLink>> links_;
  std::map<std::string, std::unique_ptr<OpticalLink>> optical_;
  std::map<std::string, std::unique_ptr<OpticalSwitch>> switches_;
  std::map<std::string, std::unique_ptr<FpgaDriver>> fpgas_;
  std::unique_ptr<Controller> controller_;
  std::map<std::string, std::unique_ptr<Agent>> agents_;
  std::map<std::string, std::unique_ptr<PpsGenerator>> pps_;
  std::map<std::string, std::unique_ptr<PtpSlavePort>> ptp_;
  std::vector<std::string> switch_order_;
  bool ran_ = false;
};

/// Builds and runs a testbed. `seed` overrides the scenario's root seed.
SimulationResult simulate(const Scenario& scenario, std::optional<std::uint64_t> seed = std::nullopt);

struct RunReport {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::string scenario_hash;
  double wall_seconds = 0.0;
  SummaryRow summary;
  std::vector<std::pair<std::string, std::string>> headline;  ///< name -> formatted value
  std::vector<std::filesystem::path> csv_paths;
};

/// Runs the scenario and writes trace.csv, summary.csv, transitions-<switch>.csv
/// and, per experiment, edges.csv, pps_edges.csv and eye.csv or recovery.csv.
RunReport run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir,
                       std::optional<std::uint64_t> seed = std::nullopt);

void print_report(std::ostream& os, const RunReport& report);

/// One independent run per value, run i seeded with root_seed + i and written
/// to out_dir/run-<i>. Runs execute in parallel when built with OpenMP.
/// out_dir/summary.csv combines every run. Throws Error(UnknownParameter) for
/// an empty value list or an unresolvable path, ValidationFailed if a value
/// makes the scenario invalid.
std::vector<RunReport> sweep(const Scenario& scenario, const std::string& param,
                             const std::vector<std::string>& values, const std::filesystem::path& out_dir);

}  // namespace optisync
