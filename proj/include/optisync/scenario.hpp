#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "optisync/control.hpp"
#include "optisync/fabric.hpp"
#include "optisync/ptp.hpp"
#include "optisync/time.hpp"

namespace optisync {

enum class NodeRole { grandmaster, agent, controller };
enum class ExperimentKind { jitter_validation, instant_recovery, scheduled_recovery };

std::string_view to_string(NodeRole r);
std::string_view to_string(ExperimentKind k);

struct PtpAttachment {
  std::string master;
  std::string link;
};

struct NodeSpec {
  std::string id;
  NodeRole role = NodeRole::agent;
  ClockState clock;
  std::optional<PtpAttachment> ptp;  ///< agents disciplined by a grandmaster
  std::string switch_id;             ///< agents
  std::string control_link;          ///< agents
  PpsConfig pps;
};

struct LinkSpec {
  std::string id;
  std::string end_a;
  std::string end_b;
  LinkDelayModel model;
};

struct SwitchSpec {
  std::string id;
  Duration rise = kNominalRise;
  int initial_port = 1;
  std::map<int, std::string> ports;  ///< port -> optical link id
  FpgaConfig fpga;
};

struct MonitorSpec {
  std::string agent;
  PhotodiodeMonitor monitor;
};

struct JitterExperiment {
  std::string master_agent;
  std::string slave_agent;
  Duration window_width = nanoseconds(150);
  int on_port = 2;
  int repetitions = 1800;
  Duration warmup = seconds(30);
  Duration eye_bin = nanoseconds(5);
  Duration command_phase = milliseconds(500);  ///< when, within each local second, windows are requested
};

struct RecoveryExperiment {
  std::string failure_link;
  SimTime failure_at;
};

/// A fully validated scenario. `source` keeps the parsed document for
/// fingerprints and parameter sweeps.
struct Scenario {
  std::string id;
  std::uint64_t root_seed = 0;
  Duration duration;
  ExperimentKind kind = ExperimentKind::jitter_validation;
  std::int64_t max_drift_ppb = kDefaultMaxDriftPpb;

  std::vector<NodeSpec> nodes;
  std::vector<LinkSpec> links;
  std::vector<OpticalLink> optical_links;
  std::vector<SwitchSpec> switches;
  std::vector<MonitorSpec> monitors;
  std::vector<BackupPath> backup_paths;
  ControlConfig control;
  PtpPortConfig ptp;

  JitterExperiment jitter;
  RecoveryExperiment recovery;

  nlohmann::json source;

  const NodeSpec* node(std::string_view id) const;
  const LinkSpec* link(std::string_view id) const;
  const SwitchSpec* switch_spec(std::string_view id) const;
  const NodeSpec& controller() const;
  std::string fingerprint() const;  ///< FNV-1a of the canonical document, hex
};

/// Control-plane latency presets. "paper-budget" reproduces a 2.7 ms instant
/// recovery with 1 ms control links, 10 us sampling, debounce 3 and 100 us UART.
std::optional<ControlConfig> named_control_preset(std::string_view name);

/// Throws Error(ParseError) for malformed JSON or a missing file and
/// ValidationFailed listing every problem found.
Scenario load_scenario(const std::filesystem::path& path);
Scenario parse_scenario(const nlohmann::json& doc);
Scenario parse_scenario_text(std::string_view text);

/// Path of a bundled scenario by name, e.g. "fig3b-instant".
std::filesystem::path bundled_scenario_path(std::string_view name);
inline constexpr std::string_view kBundledScenarios[] = {
    "fig2a-standard-ethernet", "fig2a-ptp-enabled", "fig2b-halfhour", "fig3b-instant", "fig3b-scheduled",
};

/// Resolves a dotted parameter path ("control.scheduling_overhead",
/// "links.gm-slave.pdv_scale") to a numeric or duration field. Array
/// elements are addressed by their "id". Throws Error(UnknownParameter).
nlohmann::json& resolve_parameter(nlohmann::json& doc, std::string_view path);

/// Copy of `doc` with the parameter replaced. Numbers stay numbers; duration
/// strings take a duration string. Throws Error(UnknownParameter).
nlohmann::json with_parameter(const nlohmann::json& doc, std::string_view path, std::string_view value);

}  // namespace optisync
