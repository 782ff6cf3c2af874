#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "optisync/clock.hpp"
#include "optisync/engine.hpp"
#include "optisync/error.hpp"
#include "optisync/ptp.hpp"
#include "optisync/rng.hpp"
#include "optisync/time.hpp"

namespace optisync {

inline constexpr int kSwitchPorts = 4;
inline constexpr Duration kNominalRise = nanoseconds(10);
inline constexpr Duration kMeasuredRise = picoseconds(8'400);

/// "nominal" (10 ns) or "measured"/"fast" (8.4 ns).
std::optional<Duration> rise_preset(std::string_view name);

enum class ActuationMode { immediate, pps_aligned, at_local_timestamp };

std::string_view to_string(ActuationMode mode);
std::optional<ActuationMode> parse_actuation_mode(std::string_view text);

struct SwitchCommand {
  int target_port = 1;
  ActuationMode mode = ActuationMode::immediate;
  std::optional<LocalTime> fire_at_local;

  static SwitchCommand immediate(int port) { return {port, ActuationMode::immediate, std::nullopt}; }
  static SwitchCommand pps_aligned(int port) { return {port, ActuationMode::pps_aligned, std::nullopt}; }
  static SwitchCommand at_local(int port, LocalTime t) { return {port, ActuationMode::at_local_timestamp, t}; }

  /// Throws Error(InvalidArgument) on a bad port or a timestamp/mode mismatch.
  void validate() const;
};

struct Transition {
  int from_port = 1;
  int to_port = 1;
  SimTime start;
  Duration rise;

  SimTime end() const { return start + rise; }
  friend bool operator==(const Transition&, const Transition&) = default;
};

/// 1x4 optical switch. active_port names the port the switch is set to; while
/// a transition is in flight that port is still ramping up.
struct OpticalSwitchState {
  int active_port = 1;
  std::optional<Transition> transition;
  Duration rise_time = kNominalRise;
};

/// Starts a ramp to `to_port` at `at`. An in-flight transition is first
/// snapped to completion. Actuating the already-active port returns the
/// state unchanged.
OpticalSwitchState actuate(const OpticalSwitchState& sw, int to_port, SimTime at);

/// Coupling of `port` at t in [0, 1]: linear ramps during transitions.
double port_transmission(const OpticalSwitchState& sw, int port, SimTime t);

struct EdgeCrossing {
  SimTime at;
  bool rising = true;
};

/// A switch instance with its full transition history.
class OpticalSwitch {
 public:
  OpticalSwitch(std::string id, int initial_port, Duration rise_time);

  const std::string& id() const { return id_; }
  const OpticalSwitchState& state() const { return state_; }
  const std::vector<Transition>& timeline() const { return timeline_; }
  int initial_port() const { return initial_port_; }

  /// Returns false for a no-op (already on to_port).
  bool actuate(int to_port, SimTime at);

  /// Transmission at any past or future t, replayed from the timeline.
  double transmission(int port, SimTime t) const;

  /// 50% crossings of `port` in time order. Ramp midpoints of odd rise times
  /// round half away from zero.
  std::vector<EdgeCrossing> fifty_percent_crossings(int port) const;

  /// Rows (t_start_ps, from, to, rise_ps).
  void write_transitions_csv(std::ostream& os) const;

 private:
  std::string id_;
  int initial_port_;
  OpticalSwitchState state_;
  std::vector<Transition> timeline_;
};

struct FpgaConfig {
  Duration uart_latency = microseconds(100);
  JitterProfile actuation_jitter;  ///< nonnegative delay added to resolved fire instants
  PpsConfig pps;
};

struct CommandHandle {
  std::uint64_t id = 0;
  friend bool operator==(const CommandHandle&, const CommandHandle&) = default;
};

struct WindowHandle {
  CommandHandle open;
  CommandHandle close;
};

/// Local fire time of a command armed at `armed_at`: the arming instant for
/// immediate mode, the next PPS boundary for pps_aligned, the command's
/// timestamp otherwise. Throws TimestampInLocalPast or PpsDisabled.
LocalTime resolve_fire_local(const ClockState& clock, const PpsConfig& pps, const SwitchCommand& cmd,
                             SimTime armed_at);

/// FPGA switch driver. Commands reach it over UART and are armed after
/// uart_latency; armed commands fire against the owning agent's local clock
/// and are re-resolved whenever that clock is corrected.
class FpgaDriver {
 public:
  using ActuatedFn = std::function<void(CommandHandle, int port, SimTime start)>;
  using RejectedFn = std::function<void(CommandHandle, Errc)>;

  FpgaDriver(Engine& engine, std::string id, OpticalSwitch& sw, LocalClock& clock, FpgaConfig cfg,
             RngStream jitter_rng);

  CommandHandle submit_command(const SwitchCommand& cmd, SimTime sent_at);

  /// Opens `on_port` per `base` (mode and timestamp) and returns to the
  /// previous port `width` later on the same local clock.
  WindowHandle generate_window(int on_port, Duration width, const SwitchCommand& base, SimTime sent_at);

  void on_actuated(ActuatedFn fn) { actuated_.push_back(std::move(fn)); }
  void on_rejected(RejectedFn fn) { rejected_.push_back(std::move(fn)); }

  const std::string& id() const { return id_; }
  const FpgaConfig& config() const { return cfg_; }
  OpticalSwitch& optical_switch() { return sw_; }
  std::size_t armed_count() const { return armed_.size(); }

 private:
  struct Armed {
    SwitchCommand cmd;
    LocalTime fire_local;
    Duration jitter;
    std::uint64_t generation = 0;
    std::optional<Duration> close_after;  ///< window: return to previous port after this
    std::uint64_t close_id = 0;
  };

  void arm(std::uint64_t id, SwitchCommand cmd, std::optional<Duration> close_after, std::uint64_t close_id,
           bool internal);
  void schedule_fire(std::uint64_t id);
  void fire(std::uint64_t id, std::uint64_t generation);
  void reject(std::uint64_t id, Errc code, const std::string& why);

  Engine& engine_;
  std::string id_;
  OpticalSwitch& sw_;
  LocalClock& clock_;
  FpgaConfig cfg_;
  RngStream jitter_rng_;
  std::uint64_t next_id_ = 1;
  std::map<std::uint64_t, Armed> armed_;
  std::vector<ActuatedFn> actuated_;
  std::vector<RejectedFn> rejected_;
};

inline constexpr double kFailedFloorDbm = -60.0;

struct OpticalLink {
  std::string id;
  double nominal_power_dbm = 0.0;
  std::optional<SimTime> failed_since;

  double power_dbm(SimTime t) const {
    return (failed_since && t >= *failed_since) ? kFailedFloorDbm : nominal_power_dbm;
  }
};

/// Throws Error(AlreadyFailed) if the link already has a failure.
void inject_failure(OpticalLink& link, SimTime at);

struct PhotodiodeMonitor {
  double threshold_db_below_nominal = 3.0;
  Duration sample_interval = microseconds(10);
  int debounce_samples = 3;

  int consecutive_low = 0;
  bool notified = false;

  void validate() const;
};

struct Detection {
  std::string link_id;
  SimTime at;
};

/// One sample. Fires on the debounce_samples-th consecutive sample below
/// nominal - threshold; once per failure episode.
std::optional<Detection> poll_monitor(PhotodiodeMonitor& monitor, const OpticalLink& link, SimTime t);

/// Drives a monitor on its sampling grid with power-sample events.
class MonitorSampler {
 public:
  using LinkSource = std::function<const OpticalLink&()>;
  using DetectFn = std::function<void(const Detection&)>;

  MonitorSampler(Engine& engine, std::string node, PhotodiodeMonitor monitor, LinkSource observed,
                 DetectFn on_detect);

  /// Samples at from, from + interval, ... up to and including `until`.
  void start(SimTime from, SimTime until);
  const PhotodiodeMonitor& monitor() const { return monitor_; }

 private:
  void sample_at(SimTime t);

  Engine& engine_;
  std::string node_;
  PhotodiodeMonitor monitor_;
  LinkSource observed_;
  DetectFn on_detect_;
  SimTime until_;
};

}  // namespace optisync
