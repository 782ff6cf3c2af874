#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "optisync/clock.hpp"
#include "optisync/engine.hpp"
#include "optisync/rng.hpp"
#include "optisync/time.hpp"

namespace optisync {

enum class PdvKind { none, gaussian, gamma };

/// Per-message random delay component. Samples are truncated to [lo, hi] by
/// rejection (clamped after 64 rejections) and then multiplied by the owning
/// link's pdv_scale.
struct JitterProfile {
  PdvKind kind = PdvKind::none;
  double sigma_ps = 0.0;  ///< gaussian
  double shape = 0.0;     ///< gamma
  double scale_ps = 0.0;  ///< gamma
  std::int64_t lo_ps = 0;
  std::int64_t hi_ps = 0;

  static JitterProfile none() { return {}; }
  static JitterProfile gaussian(double sigma_ps, std::int64_t lo_ps, std::int64_t hi_ps);
  static JitterProfile gamma(double shape, double scale_ps, std::int64_t lo_ps, std::int64_t hi_ps);

  Duration sample(RngStream& rng, double scale = 1.0) const;
};

std::string_view to_string(PdvKind kind);

/// Named link noise profiles shipped with the simulator.
///   "noiseless"          no PDV
///   "standard-ethernet"  heavy-tailed gamma queueing delay
///   "ptp-enabled"        small truncated gaussian
std::optional<JitterProfile> named_link_profile(std::string_view name);

/// Named FPGA actuation jitter presets ("none", "fpga-pps-capture").
std::optional<JitterProfile> named_actuation_profile(std::string_view name);

struct LinkDelayModel {
  Duration fwd_base;
  Duration rev_base;
  JitterProfile fwd_pdv;
  JitterProfile rev_pdv;
  double pdv_scale = 1.0;

  /// Throws Error(InvalidArgument) when an invariant is violated.
  void validate() const;
};

enum class Direction { forward, reverse };

/// A two-ended delay link (PTP or control transport). Delivery is reliable
/// and FIFO per direction unless the link has failed by the arrival instant.
class DelayLink {
 public:
  DelayLink(std::string id, std::string end_a, std::string end_b, LinkDelayModel model,
            RngStream fwd_rng, RngStream rev_rng);

  const std::string& id() const { return id_; }
  const std::string& end_a() const { return end_a_; }
  const std::string& end_b() const { return end_b_; }
  const LinkDelayModel& model() const { return model_; }
  Duration base(Direction dir) const { return dir == Direction::forward ? model_.fwd_base : model_.rev_base; }

  /// Arrival time of a message sent at `sent`, or nullopt if the link is
  /// already down. Receivers check is_up() again on arrival.
  std::optional<SimTime> transit(Direction dir, SimTime sent);

  bool is_up(SimTime t) const { return !failed_since_ || t < *failed_since_; }
  void fail(SimTime at);
  std::optional<SimTime> failed_since() const { return failed_since_; }

 private:
  std::string id_;
  std::string end_a_;
  std::string end_b_;
  LinkDelayModel model_;
  RngStream fwd_rng_;
  RngStream rev_rng_;
  SimTime last_fwd_{0};
  SimTime last_rev_{0};
  std::optional<SimTime> failed_since_;
};

/// Four timestamps of one two-way exchange. t1 and t4 are master-local,
/// t2 and t3 slave-local.
struct PtpTimestamps {
  LocalTime t1;
  LocalTime t2;
  LocalTime t3;
  LocalTime t4;

  friend bool operator==(const PtpTimestamps&, const PtpTimestamps&) = default;
};

struct SyncResult {
  std::int64_t offset_ps = 0;  ///< slave minus master
  std::int64_t delay_ps = 0;   ///< mean one-way path delay

  friend bool operator==(const SyncResult&, const SyncResult&) = default;
};

/// offset = ((t2 - t1) - (t4 - t3)) / 2, delay = ((t2 - t1) + (t4 - t3)) / 2,
/// both rounded half away from zero.
SyncResult estimate_offset(const PtpTimestamps& ts);

/// Batch estimator; parallel over exchanges when built with OpenMP.
std::vector<SyncResult> estimate_offsets(std::span<const PtpTimestamps> batch);

namespace reference {
std::vector<SyncResult> estimate_offsets(std::span<const PtpTimestamps> batch);
}

/// Timestamps produced by an exchange with known transit delays, without an
/// engine. Sync leaves the master at `sync_sent`; the delay request leaves the
/// slave when its clock reads t2 + turnaround.
PtpTimestamps compute_exchange(const ClockState& master, const ClockState& slave, SimTime sync_sent,
                               Duration fwd_delay, Duration rev_delay, Duration turnaround);

struct ServoState {
  double kp = 0.7;
  double ki = 0.3;
  std::int64_t integral_ps = 0;
  std::int64_t max_step_ps = 500'000;
};

/// PI step on a measured offset. Returns the phase step to apply through
/// apply_correction (positive step reduces a positive offset).
std::pair<std::int64_t, ServoState> servo_step(const ServoState& servo, std::int64_t measured_offset_ps);

struct ExchangeRecord {
  PtpTimestamps ts;
  SimTime completed_at;
};

inline constexpr Duration kDefaultTurnaround = microseconds(1);

/// Runs one exchange through the engine: Sync (forward), Delay_Req (reverse)
/// and Delay_Resp (forward). `done` receives the timestamps when Delay_Resp
/// reaches the slave, or nullopt (LinkDown) if any message is lost.
void run_sync_exchange(Engine& engine, LocalClock& master, LocalClock& slave, DelayLink& link,
                       Direction master_to_slave, SimTime start, Duration turnaround,
                       std::function<void(std::optional<ExchangeRecord>)> done);

struct PtpPortConfig {
  Duration interval = seconds(1);
  Duration phase = milliseconds(250);  ///< exchange start within each interval (master-local)
  Duration turnaround = kDefaultTurnaround;
  ServoState servo;
  /// Offsets beyond this are removed with one phase step and the integral is
  /// reset; smaller ones go through the PI servo.
  std::int64_t step_threshold_ps = 1'000'000;
};

/// Slave side of a grandmaster-to-agent disciplining session.
class PtpSlavePort {
 public:
  PtpSlavePort(Engine& engine, LocalClock& master, LocalClock& slave, DelayLink& link,
               Direction master_to_slave, PtpPortConfig cfg);

  void start(SimTime from);

  struct Step {
    SimTime at;
    SyncResult estimate;
    std::int64_t phase_step_ps;
    std::int64_t true_offset_after_ps;
  };
  const std::vector<Step>& history() const { return history_; }
  const ServoState& servo() const { return servo_; }

 private:
  void schedule_next(SimTime after);
  void on_exchange(const ExchangeRecord& rec);

  Engine& engine_;
  LocalClock& master_;
  LocalClock& slave_;
  DelayLink& link_;
  Direction dir_;
  PtpPortConfig cfg_;
  ServoState servo_;
  std::vector<Step> history_;
};

}  // namespace optisync
