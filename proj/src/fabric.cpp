#include "optisync/fabric.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

#include "optisync/error.hpp"

namespace optisync {

std::optional<Duration> rise_preset(std::string_view name) {
  if (name == "nominal") return kNominalRise;
  if (name == "measured" || name == "fast") return kMeasuredRise;
  return std::nullopt;
}

std::string_view to_string(ActuationMode mode) {
  switch (mode) {
    case ActuationMode::immediate: return "immediate";
    case ActuationMode::pps_aligned: return "pps_aligned";
    case ActuationMode::at_local_timestamp: return "at_local_timestamp";
  }
  return "immediate";
}

std::optional<ActuationMode> parse_actuation_mode(std::string_view text) {
  if (text == "immediate") return ActuationMode::immediate;
  if (text == "pps_aligned") return ActuationMode::pps_aligned;
  if (text == "at_local_timestamp") return ActuationMode::at_local_timestamp;
  return std::nullopt;
}

void SwitchCommand::validate() const {
  if (target_port < 1 || target_port > kSwitchPorts)
    throw Error(Errc::InvalidArgument, "target port " + std::to_string(target_port) + " outside 1..4");
  if (fire_at_local.has_value() != (mode == ActuationMode::at_local_timestamp))
    throw Error(Errc::InvalidArgument, "fire_at_local must be present exactly for at_local_timestamp");
}

OpticalSwitchState actuate(const OpticalSwitchState& sw, int to_port, SimTime at) {
  if (to_port < 1 || to_port > kSwitchPorts)
    throw Error(Errc::InvalidArgument, "target port " + std::to_string(to_port) + " outside 1..4");
  if (sw.rise_time <= Duration::zero()) throw Error(Errc::InvalidArgument, "rise time must be positive");
  if (to_port == sw.active_port) return sw;
  OpticalSwitchState next = sw;
  // active_port already names the in-flight target, so snapping is implicit.
  next.transition = Transition{sw.active_port, to_port, at, sw.rise_time};
  next.active_port = to_port;
  return next;
}

double port_transmission(const OpticalSwitchState& sw, int port, SimTime t) {
  if (sw.transition) {
    const Transition& tr = *sw.transition;
    if (t < tr.start) return port == tr.from_port ? 1.0 : 0.0;
    if (t < tr.end()) {
      const double frac = static_cast<double>((t - tr.start).ps()) / static_cast<double>(tr.rise.ps());
      if (port == tr.to_port) return frac;
      if (port == tr.from_port) return 1.0 - frac;
      return 0.0;
    }
  }
  return port == sw.active_port ? 1.0 : 0.0;
}

OpticalSwitch::OpticalSwitch(std::string id, int initial_port, Duration rise_time)
    : id_(std::move(id)), initial_port_(initial_port) {
  if (initial_port < 1 || initial_port > kSwitchPorts)
    throw Error(Errc::InvalidArgument, "initial port outside 1..4");
  if (rise_time <= Duration::zero()) throw Error(Errc::InvalidArgument, "rise time must be positive");
  state_.active_port = initial_port;
  state_.rise_time = rise_time;
}

bool OpticalSwitch::actuate(int to_port, SimTime at) {
  OpticalSwitchState next = optisync::actuate(state_, to_port, at);
  if (!next.transition || (state_.transition && *next.transition == *state_.transition)) return false;
  state_ = next;
  timeline_.push_back(*state_.transition);
  return true;
}

double OpticalSwitch::transmission(int port, SimTime t) const {
  auto it = std::upper_bound(timeline_.begin(), timeline_.end(), t,
                             [](SimTime v, const Transition& tr) { return v < tr.start; });
  if (it == timeline_.begin()) return port == initial_port_ ? 1.0 : 0.0;
  const Transition& tr = *(it - 1);
  SimTime end = tr.end();
  if (it != timeline_.end()) end = std::min(end, it->start);
  const double target = port == tr.to_port ? 1.0 : 0.0;
  if (t >= end) return target;
  const double start_v = port == tr.from_port ? 1.0 : 0.0;
  const double frac = static_cast<double>((t - tr.start).ps()) / static_cast<double>(tr.rise.ps());
  return start_v + (target - start_v) * frac;
}

std::vector<EdgeCrossing> OpticalSwitch::fifty_percent_crossings(int port) const {
  std::vector<EdgeCrossing> out;
  bool high = port == initial_port_;
  for (std::size_t i = 0; i < timeline_.size(); ++i) {
    const Transition& tr = timeline_[i];
    const bool start_high = tr.from_port == port;
    if (start_high != high) out.push_back({tr.start, start_high});
    high = start_high;
    const bool target_high = tr.to_port == port;
    if (target_high == high) continue;
    const SimTime mid = tr.start + Duration{div_round_half_away(tr.rise.ps(), 2)};
    const bool has_next = i + 1 < timeline_.size();
    if (!has_next || mid < timeline_[i + 1].start) {
      out.push_back({mid, target_high});
      high = target_high;
    }
  }
  return out;
}

void OpticalSwitch::write_transitions_csv(std::ostream& os) const {
  os << "t_start_ps,from,to,rise_ps\n";
  for (const auto& tr : timeline_) {
    os << tr.start.ps() << ',' << tr.from_port << ',' << tr.to_port << ',' << tr.rise.ps() << '\n';
  }
}

LocalTime resolve_fire_local(const ClockState& clock, const PpsConfig& pps, const SwitchCommand& cmd,
                             SimTime armed_at) {
  const LocalTime now = local_time(clock, armed_at);
  switch (cmd.mode) {
    case ActuationMode::immediate:
      return now;
    case ActuationMode::pps_aligned: {
      if (!pps.enabled) throw Error(Errc::PpsDisabled, "pps_aligned command with 1PPS disabled");
      const std::int64_t period = pps.period.ps();
      return LocalTime{(floor_div(now.ps(), period) + 1) * period};
    }
    case ActuationMode::at_local_timestamp:
      if (!cmd.fire_at_local) throw Error(Errc::InvalidArgument, "missing fire_at_local");
      if (*cmd.fire_at_local < now) {
        throw Error(Errc::TimestampInLocalPast,
                    "fire_at_local " + std::to_string(cmd.fire_at_local->ps()) + " ps < local " +
                        std::to_string(now.ps()) + " ps at arming");
      }
      return *cmd.fire_at_local;
  }
  return now;
}

FpgaDriver::FpgaDriver(Engine& engine, std::string id, OpticalSwitch& sw, LocalClock& clock, FpgaConfig cfg,
                       RngStream jitter_rng)
    : engine_(engine), id_(std::move(id)), sw_(sw), clock_(clock), cfg_(cfg), jitter_rng_(std::move(jitter_rng)) {
  if (cfg_.uart_latency < Duration::zero()) throw Error(Errc::InvalidArgument, "UART latency must be >= 0");
  if (cfg_.actuation_jitter.kind != PdvKind::none && cfg_.actuation_jitter.lo_ps < 0)
    throw Error(Errc::InvalidArgument, "actuation jitter must be nonnegative");
  clock_.on_change([this](SimTime) {
    for (auto& [aid, a] : armed_) {
      if (a.cmd.mode != ActuationMode::immediate) schedule_fire(aid);
    }
  });
}

CommandHandle FpgaDriver::submit_command(const SwitchCommand& cmd, SimTime sent_at) {
  cmd.validate();
  const std::uint64_t id = next_id_++;
  engine_.schedule(sent_at + cfg_.uart_latency, EventKind::UartDelivery, id_,
                   [this, id, cmd] { arm(id, cmd, std::nullopt, 0, false); },
                   "cmd=" + std::to_string(id) + ";port=" + std::to_string(cmd.target_port) +
                       ";mode=" + std::string(to_string(cmd.mode)));
  return CommandHandle{id};
}

WindowHandle FpgaDriver::generate_window(int on_port, Duration width, const SwitchCommand& base,
                                         SimTime sent_at) {
  if (width <= Duration::zero()) throw Error(Errc::InvalidArgument, "window width must be positive");
  SwitchCommand open = base;
  open.target_port = on_port;
  open.validate();
  const std::uint64_t open_id = next_id_++;
  const std::uint64_t close_id = next_id_++;
  engine_.schedule(sent_at + cfg_.uart_latency, EventKind::UartDelivery, id_,
                   [this, open_id, close_id, open, width] { arm(open_id, open, width, close_id, false); },
                   "cmd=" + std::to_string(open_id) + ";window=" + std::to_string(width.ps()) +
                       ";port=" + std::to_string(on_port) + ";mode=" + std::string(to_string(open.mode)));
  return WindowHandle{CommandHandle{open_id}, CommandHandle{close_id}};
}

void FpgaDriver::arm(std::uint64_t id, SwitchCommand cmd, std::optional<Duration> close_after,
                     std::uint64_t close_id, bool internal) {
  LocalTime fire_local;
  try {
    fire_local = resolve_fire_local(clock_.state(), cfg_.pps, cmd, engine_.now());
  } catch (const Error& e) {
    reject(id, e.code(), e.what());
    return;
  }
  const Duration jitter = internal ? Duration::zero() : cfg_.actuation_jitter.sample(jitter_rng_);
  armed_[id] = Armed{cmd, fire_local, jitter, 0, close_after, close_id};
  schedule_fire(id);
}

void FpgaDriver::schedule_fire(std::uint64_t id) {
  Armed& a = armed_.at(id);
  const std::uint64_t gen = ++a.generation;
  const SimTime now = engine_.now();
  const LocalTime local_now = clock_.now_local(now);
  const SimTime at = (a.fire_local <= local_now ? now : clock_.when(a.fire_local)) + a.jitter;
  engine_.schedule(at, EventKind::Actuation, id_, [this, id, gen] { fire(id, gen); },
                   "cmd=" + std::to_string(id) + ";port=" + std::to_string(a.cmd.target_port));
}

void FpgaDriver::fire(std::uint64_t id, std::uint64_t generation) {
  auto it = armed_.find(id);
  if (it == armed_.end() || it->second.generation != generation) return;
  const Armed a = it->second;
  armed_.erase(it);

  const SimTime now = engine_.now();
  const int previous = sw_.state().active_port;
  const bool moved = sw_.actuate(a.cmd.target_port, now);
  engine_.log(moved ? "switch-transition" : "actuation-noop", sw_.id(),
              "cmd=" + std::to_string(id) + ";from=" + std::to_string(previous) +
                  ";to=" + std::to_string(a.cmd.target_port) + ";rise=" + std::to_string(sw_.state().rise_time.ps()));
  for (auto& fn : actuated_) fn(CommandHandle{id}, a.cmd.target_port, now);

  if (a.close_after) {
    const SwitchCommand close = SwitchCommand::at_local(previous, clock_.now_local(now) + *a.close_after);
    arm(a.close_id, close, std::nullopt, 0, true);
  }
}

void FpgaDriver::reject(std::uint64_t id, Errc code, const std::string& why) {
  engine_.log("command-rejected", id_, "cmd=" + std::to_string(id) + ";error=" + to_string(code));
  (void)why;
  for (auto& fn : rejected_) fn(CommandHandle{id}, code);
}

void inject_failure(OpticalLink& link, SimTime at) {
  if (link.failed_since) throw Error(Errc::AlreadyFailed, "optical link " + link.id + " already failed");
  link.failed_since = at;
}

void PhotodiodeMonitor::validate() const {
  if (debounce_samples < 1) throw Error(Errc::InvalidArgument, "debounce_samples must be >= 1");
  if (sample_interval <= Duration::zero()) throw Error(Errc::InvalidArgument, "sample_interval must be positive");
  if (!(threshold_db_below_nominal > 0.0)) throw Error(Errc::InvalidArgument, "threshold must be positive");
}

std::optional<Detection> poll_monitor(PhotodiodeMonitor& monitor, const OpticalLink& link, SimTime t) {
  const bool low = link.power_dbm(t) < link.nominal_power_dbm - monitor.threshold_db_below_nominal;
  if (!low) {
    monitor.consecutive_low = 0;
    monitor.notified = false;
    return std::nullopt;
  }
  ++monitor.consecutive_low;
  if (monitor.consecutive_low >= monitor.debounce_samples && !monitor.notified) {
    monitor.notified = true;
    return Detection{link.id, t};
  }
  return std::nullopt;
}

MonitorSampler::MonitorSampler(Engine& engine, std::string node, PhotodiodeMonitor monitor, LinkSource observed,
                               DetectFn on_detect)
    : engine_(engine), node_(std::move(node)), monitor_(monitor), observed_(std::move(observed)),
      on_detect_(std::move(on_detect)) {
  monitor_.validate();
}

void MonitorSampler::start(SimTime from, SimTime until) {
  until_ = until;
  sample_at(from);
}

void MonitorSampler::sample_at(SimTime t) {
  if (t > until_) return;
  engine_.schedule(t, EventKind::PowerSample, node_, [this] {
    const SimTime now = engine_.now();
    const OpticalLink& link = observed_();
    char buf[64];
    std::snprintf(buf, sizeof buf, "link=%s;power_dbm=%.2f", link.id.c_str(), link.power_dbm(now));
    engine_.log("power-level", node_, buf);
    if (auto d = poll_monitor(monitor_, link, now)) on_detect_(*d);
    sample_at(now + monitor_.sample_interval);
  });
}

}  // namespace optisync
