#include "optisync/clock.hpp"

#include <algorithm>
#include <limits>

#include "optisync/error.hpp"

namespace optisync {

namespace {

constexpr std::int64_t kPpbScale = 1'000'000'000;

std::int64_t drift_term(std::int64_t elapsed_ps, std::int64_t drift_ppb) {
  return div_round_half_away(static_cast<__int128>(elapsed_ps) * drift_ppb, kPpbScale);
}

}  // namespace

LocalTime local_time(const ClockState& clock, SimTime t) {
  if (t < clock.updated_at) {
    throw Error(Errc::TimeBeforeUpdate, "sim time " + std::to_string(t.ps()) +
                                            " ps precedes clock update at " +
                                            std::to_string(clock.updated_at.ps()) + " ps");
  }
  const std::int64_t elapsed = (t - clock.updated_at).ps();
  return LocalTime{t.ps() + clock.offset_ps + drift_term(elapsed, clock.drift_ppb)};
}

SimTime sim_time_of_local(const ClockState& clock, LocalTime local) {
  const LocalTime base = local_time(clock, clock.updated_at);
  if (local < base) {
    throw Error(Errc::TimeBeforeUpdate, "local time " + std::to_string(local.ps()) +
                                            " ps precedes the reading at the last update");
  }
  const std::int64_t local_elapsed = (local - base).ps();
  const std::int64_t guess = div_round_half_away(
      static_cast<__int128>(local_elapsed) * kPpbScale, kPpbScale + clock.drift_ppb);
  SimTime t = clock.updated_at + Duration{guess};
  while (local_time(clock, t) < local) t += Duration{1};
  while (t > clock.updated_at && local_time(clock, t - Duration{1}) >= local) t = t - Duration{1};
  return t;
}

SimTime next_pps_edge(const ClockState& clock, const PpsConfig& cfg, SimTime after) {
  if (!cfg.enabled) throw Error(Errc::PpsDisabled, "1PPS output is disabled");
  if (cfg.period <= Duration::zero()) throw Error(Errc::InvalidArgument, "PPS period must be positive");
  const std::int64_t period = cfg.period.ps();
  const LocalTime now = local_time(clock, after);
  const LocalTime edge{(floor_div(now.ps(), period) + 1) * period};
  return sim_time_of_local(clock, edge);
}

ClockState apply_correction(const ClockState& clock, std::int64_t phase_step_ps, SimTime at) {
  ClockState next = clock;
  next.offset_ps = offset_at(clock, at) - phase_step_ps;
  next.updated_at = at;
  return next;
}

std::int64_t offset_at(const ClockState& clock, SimTime t) {
  return local_time(clock, t).ps() - t.ps();
}

void LocalClock::correct(std::int64_t phase_step_ps, SimTime at) {
  state_ = apply_correction(state_, phase_step_ps, at);
  for (auto& l : listeners_) l(at);
}

PpsGenerator::PpsGenerator(Engine& engine, LocalClock& clock, PpsConfig cfg)
    : engine_(engine), clock_(clock), cfg_(cfg), last_index_(std::numeric_limits<std::int64_t>::min()) {
  if (cfg_.period <= Duration::zero()) throw Error(Errc::InvalidArgument, "PPS period must be positive");
  clock_.on_change([this](SimTime at) {
    if (started_) arm(at);
  });
}

void PpsGenerator::start(SimTime from) {
  if (!cfg_.enabled) throw Error(Errc::PpsDisabled, "1PPS output is disabled on " + clock_.id());
  started_ = true;
  arm(from);
}

void PpsGenerator::arm(SimTime from) {
  const std::uint64_t gen = ++generation_;
  const std::int64_t period = cfg_.period.ps();
  const LocalTime now = clock_.now_local(from);
  std::int64_t index = floor_div(now.ps(), period) + 1;
  if (last_index_ != std::numeric_limits<std::int64_t>::min()) {
    // Next unemitted boundary; older ones skipped by a multi-period jump are dropped.
    index = std::max(last_index_ + 1, index - 1);
  }
  // A correction that jumps local time past an edge emits it immediately.
  const LocalTime edge_local{index * period};
  const SimTime fire = edge_local <= now ? from : clock_.when(edge_local);
  engine_.schedule(fire, EventKind::PpsEdge, clock_.id(), [this, gen, index] {
    if (gen != generation_) return;
    last_index_ = index;
    const SimTime t = engine_.now();
    edges_.emplace_back(t, index);
    for (auto& l : listeners_) l(t, index);
    arm(t);
  }, "edge=" + std::to_string(index));
}

}  // namespace optisync
