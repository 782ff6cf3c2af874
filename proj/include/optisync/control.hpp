#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "optisync/clock.hpp"
#include "optisync/engine.hpp"
#include "optisync/fabric.hpp"
#include "optisync/metrics.hpp"
#include "optisync/ptp.hpp"
#include "optisync/time.hpp"

namespace optisync {

/// Everything that travels on a control link. Each kind has exactly one
/// controller end; agents never address each other.
enum class ControlMessage {
  ptp_sync,
  ptp_delay_req,
  ptp_delay_resp,
  switch_command,
  command_report,
  failure_notification,
};

enum class Endpoint { controller, agent };

struct Route {
  Endpoint from;
  Endpoint to;
};

inline constexpr std::array kControlMessages = {
    ControlMessage::ptp_sync,       ControlMessage::ptp_delay_req,  ControlMessage::ptp_delay_resp,
    ControlMessage::switch_command, ControlMessage::command_report, ControlMessage::failure_notification,
};

constexpr Route route_of(ControlMessage m) {
  switch (m) {
    case ControlMessage::ptp_sync:
    case ControlMessage::ptp_delay_resp:
    case ControlMessage::switch_command:
      return {Endpoint::controller, Endpoint::agent};
    case ControlMessage::ptp_delay_req:
    case ControlMessage::command_report:
    case ControlMessage::failure_notification:
      return {Endpoint::agent, Endpoint::controller};
  }
  return {Endpoint::controller, Endpoint::agent};
}

std::string_view to_string(ControlMessage m);

struct FailureNotification {
  std::string link_id;
  SimTime detected_at;
  LocalTime detected_at_local;
  std::string agent_id;
};

enum class RecoveryMode { instant, scheduled };
std::string_view to_string(RecoveryMode m);

struct PlannedCommand {
  std::string agent;
  SwitchCommand command;
};

struct RecoveryPlan {
  RecoveryMode mode = RecoveryMode::instant;
  std::string failed_link;
  SimTime issued_at;
  std::optional<LocalTime> fire_at_controller_local;
  std::vector<PlannedCommand> commands;
};

struct BackupPath {
  std::string link;
  std::string backup_link;
  std::vector<std::pair<std::string, int>> ports;  ///< agent -> port carrying the backup link
};

struct ControlConfig {
  Duration processing_latency = microseconds(300);
  Duration scheduling_overhead = milliseconds(10);
  Duration agent_margin = Duration::zero();          ///< agent handling before the UART write
  Duration detection_processing = Duration::zero();  ///< FPGA signal processing after detection
  int offset_exchanges = 8;
  Duration offset_refresh = seconds(10);
  Duration turnaround = kDefaultTurnaround;
  bool perfect_time = false;  ///< translate with true clock offsets instead of estimates
};

/// Omniscient instrumentation for failure-to-restore timelines. Not part of
/// the control protocol; components report instants as they happen.
class RecoveryProbe {
 public:
  void failure(const std::string& link, SimTime t);
  void detected(const std::string& link, SimTime t);
  void notified(const std::string& link, SimTime t);
  void plan_issued(const std::string& link, SimTime t, std::vector<std::string> switches);
  void command_delivered(const std::string& link, SimTime t);
  void actuation(const std::string& link, const std::string& sw, SimTime start, Duration rise);

  /// Records in failure order.
  std::vector<RecoveryRecord> records() const;

 private:
  struct Episode {
    RecoveryRecord record;
    std::vector<std::string> pending_switches;
    SimTime latest_restore{0};
  };
  Episode* find(const std::string& link);

  std::vector<std::pair<std::string, Episode>> episodes_;
};

class Controller;

/// SDN agent: owns the command path to its FPGA, reports failures seen by its
/// photodiode monitors, and answers PTP exchanges from the controller.
class Agent {
 public:
  Agent(Engine& engine, std::string id, LocalClock& clock, FpgaDriver& fpga, const ControlConfig& cfg);

  const std::string& id() const { return id_; }
  LocalClock& clock() { return clock_; }
  FpgaDriver& fpga() { return fpga_; }

  void bind_port(int port, OpticalLink& link);
  /// Link routed on the switch's active port. Throws if the port is unbound.
  const OpticalLink& observed_link() const;

  void attach_controller(Controller& ctrl, DelayLink& link, Direction ctrl_to_agent);
  void attach_monitor(const PhotodiodeMonitor& monitor, SimTime from, SimTime until);
  void set_probe(RecoveryProbe* probe) { probe_ = probe; }

  /// Arrival of a switch_command message from the controller.
  void receive_command(std::uint64_t dispatch, const std::string& episode, SwitchCommand cmd);

 private:
  void send_to_controller(ControlMessage kind, std::string detail, std::function<void()> on_arrival);

  Engine& engine_;
  std::string id_;
  LocalClock& clock_;
  FpgaDriver& fpga_;
  const ControlConfig& cfg_;
  Controller* ctrl_ = nullptr;
  DelayLink* link_ = nullptr;
  Direction ctrl_to_agent_ = Direction::forward;
  RecoveryProbe* probe_ = nullptr;
  std::map<int, OpticalLink*> ports_;
  std::vector<std::unique_ptr<MonitorSampler>> monitors_;
  std::map<std::uint64_t, std::pair<std::uint64_t, std::string>> pending_;  ///< fpga cmd -> (dispatch, episode)
};

enum class CommandOutcome { actuated, rejected };

struct CommandReport {
  std::uint64_t dispatch = 0;
  std::string agent;
  CommandOutcome outcome = CommandOutcome::actuated;
  std::optional<Errc> error;
  SimTime reported_at;
};

struct ReconfigDispatch {
  std::uint64_t id = 0;
  std::vector<std::pair<std::string, LocalTime>> agent_fire_local;
};

class Controller {
 public:
  Controller(Engine& engine, LocalClock& clock, ControlConfig cfg);

  const ControlConfig& config() const { return cfg_; }
  ControlConfig& mutable_config() { return cfg_; }
  LocalClock& clock() { return clock_; }

  void register_agent(Agent& agent, DelayLink& link, Direction ctrl_to_agent);
  void add_backup_path(BackupPath path);
  void set_probe(RecoveryProbe* probe) { probe_ = probe; }
  void set_recovery_mode(RecoveryMode m) { mode_ = m; }

  /// Runs cfg.offset_exchanges exchanges with the agent and keeps the
  /// estimate from the minimum-delay one. Throws Error(LinkDown) if the
  /// control link is already down; a loss mid-run keeps the old estimate and
  /// reports false.
  void measure_agent_offset(const std::string& agent, std::function<void(bool)> done = {});
  /// Measures every agent now and again every cfg.offset_refresh.
  void start_offset_refresh(SimTime from, SimTime until);

  std::optional<std::int64_t> offset_estimate(const std::string& agent) const;
  void set_offset_estimate(const std::string& agent, std::int64_t offset_ps);

  /// agent_local = controller_local + estimate(agent minus controller).
  LocalTime translate_timestamp(const std::string& agent, LocalTime controller_local) const;

  /// Sends one at_local_timestamp command per target. Unknown agents and
  /// missing estimates throw before anything is sent.
  ReconfigDispatch schedule_reconfig(const std::vector<std::pair<std::string, int>>& targets,
                                     LocalTime fire_at_controller_local, const std::string& episode = {});

  /// Plans recovery for a notification and dispatches it after the
  /// processing latency. Throws Error(NoBackupPath).
  RecoveryPlan handle_failure(const FailureNotification& n, RecoveryMode mode);

  /// Arrival of a failure_notification message; uses the configured mode.
  void receive_notification(const FailureNotification& n);
  void receive_report(CommandReport r);

  const std::vector<CommandReport>& reports() const { return reports_; }
  const std::vector<RecoveryPlan>& plans() const { return plans_; }

  /// Delivery lead the controller reserves before a scheduled fire time:
  /// command transport + agent margin + UART latency, worst case over targets.
  Duration command_lead(const std::vector<std::pair<std::string, int>>& targets) const;

 private:
  struct AgentEntry {
    Agent* agent = nullptr;
    DelayLink* link = nullptr;
    Direction ctrl_to_agent = Direction::forward;
    std::optional<std::int64_t> estimate;
    std::optional<SimTime> last_sync;
  };

  AgentEntry& entry(const std::string& agent);
  const AgentEntry& entry(const std::string& agent) const;
  void send_command(AgentEntry& e, std::uint64_t dispatch, const std::string& episode, SwitchCommand cmd);
  void run_exchanges(const std::string& agent, int remaining, std::vector<SyncResult> results,
                     std::function<void(bool)> done);

  Engine& engine_;
  LocalClock& clock_;
  ControlConfig cfg_;
  RecoveryMode mode_ = RecoveryMode::instant;
  RecoveryProbe* probe_ = nullptr;
  std::map<std::string, AgentEntry> agents_;
  std::vector<BackupPath> backups_;
  std::vector<CommandReport> reports_;
  std::vector<RecoveryPlan> plans_;
  std::uint64_t next_dispatch_ = 1;
};

/// Minimum-delay filter over a batch of exchange results.
SyncResult select_min_delay(const std::vector<SyncResult>& results);

}  // namespace optisync
