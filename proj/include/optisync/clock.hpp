#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "optisync/engine.hpp"
#include "optisync/time.hpp"

namespace optisync {

inline constexpr std::int64_t kDefaultMaxDriftPpb = 100;

/// Local clock with a static offset plus linear drift.
///
/// local(t) = updated_at + offset_ps + (t - updated_at) * (1 + drift_ppb * 1e-9),
/// the drift term rounded half away from zero to a whole picosecond.
struct ClockState {
  std::int64_t offset_ps = 0;  ///< local minus reference at updated_at
  std::int64_t drift_ppb = 0;
  SimTime updated_at{0};

  friend bool operator==(const ClockState&, const ClockState&) = default;
};

struct PpsConfig {
  Duration period = seconds(1);
  bool enabled = true;
};

/// Throws Error(TimeBeforeUpdate) if t < clock.updated_at.
LocalTime local_time(const ClockState& clock, SimTime t);

/// Earliest sim time at which the clock reads at least `local`. Inverse of
/// local_time to within 1 ps. Throws Error(TimeBeforeUpdate) if `local` is
/// earlier than the reading at updated_at.
SimTime sim_time_of_local(const ClockState& clock, LocalTime local);

/// Smallest sim time strictly after `after` at which the local clock reaches
/// the next multiple of cfg.period. Throws Error(PpsDisabled).
SimTime next_pps_edge(const ClockState& clock, const PpsConfig& cfg, SimTime after);

/// Reduces the offset by phase_step_ps at `at`. Drift is unchanged.
ClockState apply_correction(const ClockState& clock, std::int64_t phase_step_ps, SimTime at);

/// local_time(t) - t.
std::int64_t offset_at(const ClockState& clock, SimTime t);

/// A named node clock owned by the simulation. Listeners are told after every
/// correction so anything armed against local time can re-resolve.
class LocalClock {
 public:
  LocalClock(std::string id, ClockState initial) : id_(std::move(id)), state_(initial) {}

  const std::string& id() const { return id_; }
  const ClockState& state() const { return state_; }

  LocalTime now_local(SimTime t) const { return local_time(state_, t); }
  SimTime when(LocalTime local) const { return sim_time_of_local(state_, local); }

  void correct(std::int64_t phase_step_ps, SimTime at);
  void on_change(std::function<void(SimTime)> listener) { listeners_.push_back(std::move(listener)); }

 private:
  std::string id_;
  ClockState state_;
  std::vector<std::function<void(SimTime)>> listeners_;
};

/// Emits a pps-edge event each time a LocalClock crosses a period boundary.
/// Re-resolves the pending edge after corrections without emitting any
/// boundary twice.
class PpsGenerator {
 public:
  using Listener = std::function<void(SimTime edge, std::int64_t index)>;

  PpsGenerator(Engine& engine, LocalClock& clock, PpsConfig cfg);

  /// Begins emitting edges after `from`.
  void start(SimTime from);
  void on_edge(Listener l) { listeners_.push_back(std::move(l)); }

  const PpsConfig& config() const { return cfg_; }
  /// (sim time, edge index) for every emitted edge.
  const std::vector<std::pair<SimTime, std::int64_t>>& edges() const { return edges_; }

 private:
  void arm(SimTime from);

  Engine& engine_;
  LocalClock& clock_;
  PpsConfig cfg_;
  std::vector<Listener> listeners_;
  std::vector<std::pair<SimTime, std::int64_t>> edges_;
  std::int64_t last_index_;
  std::uint64_t generation_ = 0;
  bool started_ = false;
};

}  // namespace optisync
