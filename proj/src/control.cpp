#include "optisync/control.hpp"

#include <algorithm>

#include "optisync/error.hpp"

namespace optisync {

std::string_view to_string(ControlMessage m) {
  switch (m) {
    case ControlMessage::ptp_sync: return "ptp_sync";
    case ControlMessage::ptp_delay_req: return "ptp_delay_req";
    case ControlMessage::ptp_delay_resp: return "ptp_delay_resp";
    case ControlMessage::switch_command: return "switch_command";
    case ControlMessage::command_report: return "command_report";
    case ControlMessage::failure_notification: return "failure_notification";
  }
  return "unknown";
}

std::string_view to_string(RecoveryMode m) {
  return m == RecoveryMode::instant ? "instant" : "scheduled";
}

// --- RecoveryProbe ---------------------------------------------------------

RecoveryProbe::Episode* RecoveryProbe::find(const std::string& link) {
  for (auto& [l, e] : episodes_) {
    if (l == link) return &e;
  }
  episodes_.emplace_back(link, Episode{});
  return &episodes_.back().second;
}

void RecoveryProbe::failure(const std::string& link, SimTime t) {
  Episode* e = find(link);
  if (!e->record.failure_at) e->record.failure_at = t;
}

void RecoveryProbe::detected(const std::string& link, SimTime t) {
  Episode* e = find(link);
  if (!e->record.detected_at) e->record.detected_at = t;
}

void RecoveryProbe::notified(const std::string& link, SimTime t) {
  Episode* e = find(link);
  if (!e->record.notified_at) e->record.notified_at = t;
}

void RecoveryProbe::plan_issued(const std::string& link, SimTime t, std::vector<std::string> switches) {
  Episode* e = find(link);
  if (e->record.plan_issued_at) return;
  e->record.plan_issued_at = t;
  e->pending_switches = std::move(switches);
}

void RecoveryProbe::command_delivered(const std::string& link, SimTime t) {
  Episode* e = find(link);
  if (!e->record.commands_delivered_at || *e->record.commands_delivered_at < t) e->record.commands_delivered_at = t;
}

void RecoveryProbe::actuation(const std::string& link, const std::string& sw, SimTime start, Duration rise) {
  Episode* e = find(link);
  auto it = std::find(e->pending_switches.begin(), e->pending_switches.end(), sw);
  if (it == e->pending_switches.end()) return;
  e->pending_switches.erase(it);
  e->record.actuation_start.emplace_back(sw, start);
  e->latest_restore = std::max(e->latest_restore, start + rise);
  if (e->pending_switches.empty()) e->record.restored_at = e->latest_restore;
}

std::vector<RecoveryRecord> RecoveryProbe::records() const {
  std::vector<RecoveryRecord> out;
  for (const auto& [_, e] : episodes_) out.push_back(e.record);
  return out;
}

// --- Agent -----------------------------------------------------------------

Agent::Agent(Engine& engine, std::string id, LocalClock& clock, FpgaDriver& fpga, const ControlConfig& cfg)
    : engine_(engine), id_(std::move(id)), clock_(clock), fpga_(fpga), cfg_(cfg) {
  fpga_.on_actuated([this](CommandHandle h, int, SimTime start) {
    auto it = pending_.find(h.id);
    if (it == pending_.end()) return;
    const auto [dispatch, episode] = it->second;
    pending_.erase(it);
    if (probe_ && !episode.empty()) {
      probe_->actuation(episode, fpga_.optical_switch().id(), start, fpga_.optical_switch().state().rise_time);
    }
    send_to_controller(ControlMessage::command_report, "dispatch=" + std::to_string(dispatch) + ";outcome=actuated",
                       [this, dispatch = dispatch, start] {
                         ctrl_->receive_report(CommandReport{dispatch, id_, CommandOutcome::actuated, std::nullopt,
                                                             engine_.now()});
                         (void)start;
                       });
  });
  fpga_.on_rejected([this](CommandHandle h, Errc code) {
    auto it = pending_.find(h.id);
    if (it == pending_.end()) return;
    const std::uint64_t dispatch = it->second.first;
    pending_.erase(it);
    send_to_controller(ControlMessage::command_report,
                       "dispatch=" + std::to_string(dispatch) + ";outcome=rejected;error=" + to_string(code),
                       [this, dispatch, code] {
                         ctrl_->receive_report(CommandReport{dispatch, id_, CommandOutcome::rejected, code,
                                                             engine_.now()});
                       });
  });
}

void Agent::bind_port(int port, OpticalLink& link) {
  if (port < 1 || port > kSwitchPorts) throw Error(Errc::InvalidArgument, "port outside 1..4");
  ports_[port] = &link;
}

const OpticalLink& Agent::observed_link() const {
  const int port = fpga_.optical_switch().state().active_port;
  auto it = ports_.find(port);
  if (it == ports_.end()) {
    throw Error(Errc::InvalidArgument, "agent " + id_ + " has no link bound to port " + std::to_string(port));
  }
  return *it->second;
}

void Agent::attach_controller(Controller& ctrl, DelayLink& link, Direction ctrl_to_agent) {
  ctrl_ = &ctrl;
  link_ = &link;
  ctrl_to_agent_ = ctrl_to_agent;
}

void Agent::attach_monitor(const PhotodiodeMonitor& monitor, SimTime from, SimTime until) {
  auto sampler = std::make_unique<MonitorSampler>(
      engine_, id_, monitor, [this]() -> const OpticalLink& { return observed_link(); },
      [this](const Detection& d) {
        if (probe_) probe_->detected(d.link_id, d.at);
        FailureNotification n{d.link_id, d.at, clock_.now_local(d.at), id_};
        engine_.log("failure-detected", id_, "link=" + d.link_id);
        auto send = [this, n] {
          send_to_controller(ControlMessage::failure_notification, "link=" + n.link_id,
                             [this, n] { ctrl_->receive_notification(n); });
        };
        if (cfg_.detection_processing > Duration::zero()) {
          engine_.schedule(engine_.now() + cfg_.detection_processing, EventKind::ControllerTimer, id_, send,
                           "fpga-signal-processing;link=" + d.link_id);
        } else {
          send();
        }
      });
  sampler->start(from, until);
  monitors_.push_back(std::move(sampler));
}

void Agent::receive_command(std::uint64_t dispatch, const std::string& episode, SwitchCommand cmd) {
  if (probe_ && !episode.empty()) probe_->command_delivered(episode, engine_.now());
  auto submit = [this, dispatch, episode, cmd] {
    const CommandHandle h = fpga_.submit_command(cmd, engine_.now());
    pending_[h.id] = {dispatch, episode};
  };
  if (cfg_.agent_margin > Duration::zero()) {
    engine_.schedule(engine_.now() + cfg_.agent_margin, EventKind::ControllerTimer, id_, submit,
                     "agent-margin;dispatch=" + std::to_string(dispatch));
  } else {
    submit();
  }
}

void Agent::send_to_controller(ControlMessage kind, std::string detail, std::function<void()> on_arrival) {
  if (!ctrl_ || !link_) throw Error(Errc::InvalidArgument, "agent " + id_ + " has no controller attached");
  const Direction up = ctrl_to_agent_ == Direction::forward ? Direction::reverse : Direction::forward;
  const auto arrival = link_->transit(up, engine_.now());
  const std::string msg = "msg=" + std::string(to_string(kind)) + ";" + detail;
  if (!arrival) {
    engine_.log("control-link-down", id_, msg);
    return;
  }
  engine_.schedule(*arrival, EventKind::NotificationArrival, "controller", [this, on_arrival, msg] {
    if (!link_->is_up(engine_.now())) {
      engine_.log("control-link-down", id_, msg);
      return;
    }
    on_arrival();
  }, msg + ";from=" + id_);
}

// --- Controller ------------------------------------------------------------

SyncResult select_min_delay(const std::vector<SyncResult>& results) {
  if (results.empty()) throw Error(Errc::InvalidArgument, "no exchange results to filter");
  return *std::min_element(results.begin(), results.end(),
                           [](const SyncResult& a, const SyncResult& b) { return a.delay_ps < b.delay_ps; });
}

Controller::Controller(Engine& engine, LocalClock& clock, ControlConfig cfg)
    : engine_(engine), clock_(clock), cfg_(cfg) {
  if (cfg_.offset_exchanges < 1) throw Error(Errc::InvalidArgument, "offset_exchanges must be >= 1");
}

void Controller::register_agent(Agent& agent, DelayLink& link, Direction ctrl_to_agent) {
  AgentEntry& e = agents_[agent.id()];
  e.agent = &agent;
  e.link = &link;
  e.ctrl_to_agent = ctrl_to_agent;
  agent.attach_controller(*this, link, ctrl_to_agent);
}

void Controller::add_backup_path(BackupPath path) { backups_.push_back(std::move(path)); }

Controller::AgentEntry& Controller::entry(const std::string& agent) {
  auto it = agents_.find(agent);
  if (it == agents_.end()) throw Error(Errc::InvalidArgument, "agent " + agent + " is not registered");
  return it->second;
}

const Controller::AgentEntry& Controller::entry(const std::string& agent) const {
  auto it = agents_.find(agent);
  if (it == agents_.end()) throw Error(Errc::InvalidArgument, "agent " + agent + " is not registered");
  return it->second;
}

void Controller::measure_agent_offset(const std::string& agent, std::function<void(bool)> done) {
  AgentEntry& e = entry(agent);
  if (!e.link->is_up(engine_.now())) {
    throw Error(Errc::LinkDown, "control link " + e.link->id() + " to " + agent + " is down");
  }
  run_exchanges(agent, cfg_.offset_exchanges, {}, std::move(done));
}

void Controller::run_exchanges(const std::string& agent, int remaining, std::vector<SyncResult> results,
                               std::function<void(bool)> done) {
  AgentEntry& e = entry(agent);
  run_sync_exchange(engine_, clock_, e.agent->clock(), *e.link, e.ctrl_to_agent, engine_.now(), cfg_.turnaround,
    [this, agent, remaining, results = std::move(results), done](std::optional<ExchangeRecord> rec) mutable {
      if (!rec) {
        engine_.log("offset-measurement-failed", agent, "reason=LinkDown");
        if (done) done(false);
        return;
      }
      results.push_back(estimate_offset(rec->ts));
      if (remaining > 1) {
        run_exchanges(agent, remaining - 1, std::move(results), std::move(done));
        return;
      }
      const SyncResult best = select_min_delay(results);
      AgentEntry& e = entry(agent);
      e.estimate = best.offset_ps;
      e.last_sync = engine_.now();
      engine_.log("offset-estimate", agent,
                  "offset=" + std::to_string(best.offset_ps) + ";delay=" + std::to_string(best.delay_ps) +
                      ";exchanges=" + std::to_string(results.size()));
      if (done) done(true);
    });
}

void Controller::start_offset_refresh(SimTime from, SimTime until) {
  if (from > until) return;
  engine_.schedule(from, EventKind::ControllerTimer, "controller", [this, until] {
    for (auto& [id, e] : agents_) {
      if (e.link->is_up(engine_.now())) {
        measure_agent_offset(id);
      } else {
        engine_.log("offset-measurement-failed", id, "reason=LinkDown");
      }
    }
    start_offset_refresh(engine_.now() + cfg_.offset_refresh, until);
  }, "offset-refresh");
}

std::optional<std::int64_t> Controller::offset_estimate(const std::string& agent) const {
  return entry(agent).estimate;
}

void Controller::set_offset_estimate(const std::string& agent, std::int64_t offset_ps) {
  AgentEntry& e = entry(agent);
  e.estimate = offset_ps;
  e.last_sync = engine_.now();
}

LocalTime Controller::translate_timestamp(const std::string& agent, LocalTime controller_local) const {
  const AgentEntry& e = entry(agent);
  if (cfg_.perfect_time) {
    const SimTime now = engine_.now();
    const std::int64_t truth = offset_at(e.agent->clock().state(), now) - offset_at(clock_.state(), now);
    return controller_local + Duration{truth};
  }
  if (!e.estimate) throw Error(Errc::NoOffsetEstimate, "no offset estimate for agent " + agent);
  return controller_local + Duration{*e.estimate};
}

void Controller::send_command(AgentEntry& e, std::uint64_t dispatch, const std::string& episode,
                              SwitchCommand cmd) {
  Agent* agent = e.agent;
  const std::string msg = "msg=switch_command;dispatch=" + std::to_string(dispatch) + ";to=" + agent->id() +
                          ";port=" + std::to_string(cmd.target_port) + ";mode=" + std::string(to_string(cmd.mode)) +
                          (cmd.fire_at_local ? ";fire_local=" + std::to_string(cmd.fire_at_local->ps()) : "");
  const auto arrival = e.link->transit(e.ctrl_to_agent, engine_.now());
  if (!arrival) {
    engine_.log("control-link-down", "controller", msg);
    return;
  }
  DelayLink* link = e.link;
  engine_.schedule(*arrival, EventKind::NotificationArrival, agent->id(),
                   [this, agent, link, dispatch, episode, cmd, msg] {
                     if (!link->is_up(engine_.now())) {
                       engine_.log("control-link-down", "controller", msg);
                       return;
                     }
                     agent->receive_command(dispatch, episode, cmd);
                   }, msg);
}

ReconfigDispatch Controller::schedule_reconfig(const std::vector<std::pair<std::string, int>>& targets,
                                               LocalTime fire_at_controller_local, const std::string& episode) {
  ReconfigDispatch d;
  d.id = next_dispatch_++;
  std::vector<SwitchCommand> cmds;
  for (const auto& [agent, port] : targets) {
    const LocalTime fire = translate_timestamp(agent, fire_at_controller_local);
    SwitchCommand cmd = SwitchCommand::at_local(port, fire);
    cmd.validate();
    cmds.push_back(cmd);
    d.agent_fire_local.emplace_back(agent, fire);
  }
  for (std::size_t i = 0; i < targets.size(); ++i) send_command(entry(targets[i].first), d.id, episode, cmds[i]);
  return d;
}

Duration Controller::command_lead(const std::vector<std::pair<std::string, int>>& targets) const {
  Duration lead = Duration::zero();
  for (const auto& [agent, _] : targets) {
    const AgentEntry& e = entry(agent);
    const Duration l = e.link->base(e.ctrl_to_agent) + cfg_.agent_margin + e.agent->fpga().config().uart_latency;
    lead = std::max(lead, l);
  }
  return lead;
}

RecoveryPlan Controller::handle_failure(const FailureNotification& n, RecoveryMode mode) {
  auto it = std::find_if(backups_.begin(), backups_.end(), [&](const BackupPath& b) { return b.link == n.link_id; });
  if (it == backups_.end()) throw Error(Errc::NoBackupPath, "no backup path for link " + n.link_id);
  const BackupPath path = *it;
  for (const auto& [agent, _] : path.ports) entry(agent);

  const SimTime now = engine_.now();
  RecoveryPlan plan;
  plan.mode = mode;
  plan.failed_link = n.link_id;
  plan.issued_at = now + cfg_.processing_latency;
  if (mode == RecoveryMode::scheduled) {
    plan.fire_at_controller_local =
        clock_.now_local(plan.issued_at) + cfg_.scheduling_overhead + command_lead(path.ports);
  }
  for (const auto& [agent, port] : path.ports) {
    plan.commands.push_back(PlannedCommand{
        agent, mode == RecoveryMode::instant
                   ? SwitchCommand::immediate(port)
                   : SwitchCommand::at_local(port, translate_timestamp(agent, *plan.fire_at_controller_local))});
  }

  std::string fires;
  for (const auto& c : plan.commands) {
    if (!fires.empty()) fires += '|';
    fires += c.agent + ":" + (c.command.fire_at_local ? std::to_string(c.command.fire_at_local->ps()) : "now");
  }
  engine_.log("controller-decision", "controller",
              "event=failure;link=" + n.link_id + ";from=" + n.agent_id +
                  ";detected_at=" + std::to_string(n.detected_at.ps()) + ";notified_at=" + std::to_string(now.ps()) +
                  ";mode=" + std::string(to_string(mode)) + ";fire=" + fires +
                  ";processing=" + std::to_string(cfg_.processing_latency.ps()) +
                  ";overhead=" + std::to_string(mode == RecoveryMode::scheduled ? cfg_.scheduling_overhead.ps() : 0));

  plans_.push_back(plan);
  engine_.schedule(plan.issued_at, EventKind::ControllerTimer, "controller", [this, plan] {
    std::vector<std::string> switches;
    for (const auto& c : plan.commands) switches.push_back(entry(c.agent).agent->fpga().optical_switch().id());
    if (probe_) probe_->plan_issued(plan.failed_link, engine_.now(), switches);
    const std::uint64_t dispatch = next_dispatch_++;
    for (const auto& c : plan.commands) send_command(entry(c.agent), dispatch, plan.failed_link, c.command);
  }, "plan-issue;link=" + n.link_id);
  return plan;
}

void Controller::receive_notification(const FailureNotification& n) {
  if (probe_) probe_->notified(n.link_id, engine_.now());
  try {
    handle_failure(n, mode_);
  } catch (const Error& e) {
    engine_.log("controller-decision", "controller", "event=failure;link=" + n.link_id + ";error=" + to_string(e.code()));
  }
}

void Controller::receive_report(CommandReport r) { reports_.push_back(std::move(r)); }

}  // namespace optisync
