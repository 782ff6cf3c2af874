#include "optisync/runner.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <ostream>
#include <sstream>

#include "optisync/error.hpp"
#include "optisync/rng.hpp"

namespace optisync {

namespace {

template <class T>
T& lookup(std::map<std::string, std::unique_ptr<T>>& m, const std::string& id, const char* what) {
  auto it = m.find(id);
  if (it == m.end()) throw Error(Errc::InvalidArgument, std::string("no ") + what + " '" + id + "' in testbed");
  return *it->second;
}

Direction direction_from(const LinkSpec& link, const std::string& sender) {
  return link.end_a == sender ? Direction::forward : Direction::reverse;
}

std::ofstream open_csv(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw Error(Errc::InvalidArgument, "cannot write " + p.string());
  return os;
}

}  // namespace

SummaryRow SimulationResult::summary() const {
  SummaryRow row;
  row.scenario_id = scenario_id;
  row.seed = seed;
  row.experiment = std::string(to_string(kind));
  if (window_edges.size() > 0) row.window = jitter_stats(window_edges);
  if (pps_edges.size() > 0) row.pps = jitter_stats(pps_edges);
  for (const auto& r : recovery) {
    if (r.complete()) {
      row.total_recovery = r.total();
      break;
    }
  }
  return row;
}

Testbed::Testbed(const Scenario& scenario, std::uint64_t seed) : scenario_(scenario), seed_(seed) {
  const Scenario& s = scenario_;
  for (const auto& n : s.nodes) clocks_[n.id] = std::make_unique<LocalClock>(n.id, n.clock);

  for (const auto& l : s.links) {
    links_[l.id] = std::make_unique<DelayLink>(l.id, l.end_a, l.end_b, l.model, fork_rng(seed, "link." + l.id + ".fwd"),
                                               fork_rng(seed, "link." + l.id + ".rev"));
  }
  for (const auto& o : s.optical_links) optical_[o.id] = std::make_unique<OpticalLink>(o);

  std::map<std::string, const NodeSpec*> owner;
  for (const auto& n : s.nodes) {
    if (n.role == NodeRole::agent) owner[n.switch_id] = &n;
  }
  for (const auto& w : s.switches) {
    switch_order_.push_back(w.id);
    switches_[w.id] = std::make_unique<OpticalSwitch>(w.id, w.initial_port, w.rise);
    auto it = owner.find(w.id);
    if (it == owner.end()) continue;
    FpgaConfig cfg = w.fpga;
    cfg.pps = it->second->pps;
    fpgas_[w.id] = std::make_unique<FpgaDriver>(engine_, w.id, *switches_[w.id], *clocks_[it->second->id], cfg,
                                                fork_rng(seed, "fpga." + w.id + ".actuation"));
  }

  const NodeSpec& ctrl = s.controller();
  controller_ = std::make_unique<Controller>(engine_, *clocks_[ctrl.id], s.control);
  controller_->set_probe(&probe_);
  controller_->set_recovery_mode(s.kind == ExperimentKind::scheduled_recovery ? RecoveryMode::scheduled
                                                                              : RecoveryMode::instant);

  for (const auto& n : s.nodes) {
    if (n.role != NodeRole::agent) continue;
    auto agent = std::make_unique<Agent>(engine_, n.id, *clocks_[n.id], *fpgas_[n.switch_id], controller_->config());
    agent->set_probe(&probe_);
    for (const auto& [port, link] : s.switch_spec(n.switch_id)->ports) agent->bind_port(port, *optical_[link]);
    const LinkSpec& cl = *s.link(n.control_link);
    controller_->register_agent(*agent, *links_[cl.id], direction_from(cl, ctrl.id));
    agents_[n.id] = std::move(agent);

    if (n.pps.enabled) pps_[n.id] = std::make_unique<PpsGenerator>(engine_, *clocks_[n.id], n.pps);
    if (n.ptp) {
      const LinkSpec& pl = *s.link(n.ptp->link);
      ptp_[n.id] = std::make_unique<PtpSlavePort>(engine_, *clocks_[n.ptp->master], *clocks_[n.id], *links_[pl.id],
                                                  direction_from(pl, n.ptp->master), s.ptp);
    }
  }
  for (const auto& b : s.backup_paths) controller_->add_backup_path(b);
}

Testbed::~Testbed() = default;

LocalClock& Testbed::clock(const std::string& node) { return lookup(clocks_, node, "clock"); }
DelayLink& Testbed::link(const std::string& id) { return lookup(links_, id, "link"); }
OpticalLink& Testbed::optical_link(const std::string& id) { return lookup(optical_, id, "optical link"); }
OpticalSwitch& Testbed::optical_switch(const std::string& id) { return lookup(switches_, id, "switch"); }
FpgaDriver& Testbed::fpga(const std::string& switch_id) { return lookup(fpgas_, switch_id, "FPGA"); }
Agent& Testbed::agent(const std::string& id) { return lookup(agents_, id, "agent"); }

PpsGenerator* Testbed::pps(const std::string& node) {
  auto it = pps_.find(node);
  return it == pps_.end() ? nullptr : it->second.get();
}

PtpSlavePort* Testbed::ptp_port(const std::string& node) {
  auto it = ptp_.find(node);
  return it == ptp_.end() ? nullptr : it->second.get();
}

SimulationResult Testbed::run() {
  if (ran_) throw Error(Errc::InvalidArgument, "testbed already ran");
  ran_ = true;
  const SimTime end = sim_at(scenario_.duration);
  for (auto& [id, g] : pps_) g->start(SimTime{0});
  for (auto& [id, p] : ptp_) p->start(SimTime{0});
  if (scenario_.kind == ExperimentKind::jitter_validation) {
    start_jitter();
  } else {
    start_recovery();
  }
  engine_.run_until(end);

  SimulationResult out;
  out.scenario_id = scenario_.id;
  out.seed = seed_;
  out.kind = scenario_.kind;
  if (scenario_.kind == ExperimentKind::jitter_validation) {
    collect_jitter(out);
  } else {
    out.recovery = probe_.records();
  }
  return out;
}

void Testbed::start_jitter() {
  request_window(scenario_.jitter.master_agent, 0);
  request_window(scenario_.jitter.slave_agent, 0);
}

// Rep k is requested at local (W + k) * period + command_phase and fires on
// PPS edge W + k + 1, W being the warmup in whole periods.
void Testbed::request_window(const std::string& agent_id, std::int64_t rep) {
  const JitterExperiment& j = scenario_.jitter;
  if (rep >= j.repetitions) return;
  const NodeSpec& n = *scenario_.node(agent_id);
  const std::int64_t period = n.pps.period.ps();
  const std::int64_t warm = floor_div(j.warmup.ps(), period);
  LocalClock& clk = *clocks_[agent_id];
  const LocalTime local{(warm + rep) * period + j.command_phase.ps()};
  const SimTime at = std::max(clk.when(local), engine_.now());
  engine_.schedule(
      at, EventKind::ControllerTimer, agent_id,
      [this, agent_id, rep, sw = n.switch_id] {
        const JitterExperiment& jx = scenario_.jitter;
        fpgas_[sw]->generate_window(jx.on_port, jx.window_width, SwitchCommand::pps_aligned(jx.on_port),
                                    engine_.now());
        request_window(agent_id, rep + 1);
      },
      "window-request;rep=" + std::to_string(rep));
}

void Testbed::start_recovery() {
  const Scenario& s = scenario_;
  const SimTime end = sim_at(s.duration);
  for (const auto& m : s.monitors) agents_[m.agent]->attach_monitor(m.monitor, SimTime{0}, end);
  controller_->start_offset_refresh(SimTime{0}, end);
  const std::string link = s.recovery.failure_link;
  engine_.schedule(
      s.recovery.failure_at, EventKind::FailureInjection, link,
      [this, link] {
        inject_failure(*optical_[link], engine_.now());
        probe_.failure(link, engine_.now());
      },
      "link=" + link);
}

void Testbed::collect_jitter(SimulationResult& out) const {
  const JitterExperiment& j = scenario_.jitter;
  const NodeSpec& mn = *scenario_.node(j.master_agent);
  const NodeSpec& sn = *scenario_.node(j.slave_agent);
  const OpticalSwitch& msw = *switches_.at(mn.switch_id);
  const OpticalSwitch& ssw = *switches_.at(sn.switch_id);

  std::vector<SimTime> master_rise;
  for (const auto& c : msw.fifty_percent_crossings(j.on_port)) {
    if (c.rising) master_rise.push_back(c.at);
  }
  struct Window {
    SimTime rise;
    std::optional<SimTime> fall;
  };
  std::vector<Window> slave;
  for (const auto& c : ssw.fifty_percent_crossings(j.on_port)) {
    if (c.rising) {
      slave.push_back({c.at, std::nullopt});
    } else if (!slave.empty() && !slave.back().fall) {
      slave.back().fall = c.at;
    }
  }

  // Pairs each master window with the nearest slave window within half a period.
  const std::int64_t half_period = mn.pps.period.ps() / 2;
  const std::int64_t ramp_mid = div_round_half_away(msw.state().rise_time.ps(), 2);
  std::vector<std::int64_t> eye_positions;
  for (SimTime tm : master_rise) {
    auto it = std::lower_bound(slave.begin(), slave.end(), tm, [](const Window& w, SimTime t) { return w.rise < t; });
    const Window* best = nullptr;
    for (auto cand : {it, it == slave.begin() ? slave.end() : std::prev(it)}) {
      if (cand == slave.end()) continue;
      const std::int64_t d = std::abs((cand->rise - tm).ps());
      if (d < half_period && (!best || d < std::abs((best->rise - tm).ps()))) best = &*cand;
    }
    if (!best) continue;
    out.window_edges.append((best->rise - tm).ps());
    const SimTime origin = tm - picoseconds(ramp_mid);
    eye_positions.push_back((best->rise - origin).ps());
    if (best->fall) eye_positions.push_back((*best->fall - origin).ps());
  }
  out.eye = EyeHistogram(j.eye_bin);
  accumulate_eye(out.eye, eye_positions);

  const auto* mp = pps_.count(mn.id) ? pps_.at(mn.id).get() : nullptr;
  const auto* sp = pps_.count(sn.id) ? pps_.at(sn.id).get() : nullptr;
  if (mp && sp) {
    const std::int64_t first = floor_div(j.warmup.ps(), mn.pps.period.ps()) + 1;
    std::map<std::int64_t, SimTime> master_edges;
    for (const auto& [t, idx] : mp->edges()) {
      if (idx >= first && idx < first + j.repetitions) master_edges[idx] = t;
    }
    for (const auto& [t, idx] : sp->edges()) {
      auto it = master_edges.find(idx);
      if (it != master_edges.end()) out.pps_edges.append((t - it->second).ps());
    }
  }
}

SimulationResult simulate(const Scenario& scenario, std::optional<std::uint64_t> seed) {
  Testbed tb(scenario, seed.value_or(scenario.root_seed));
  tb.engine().set_tracing(false);
  return tb.run();
}

namespace {

std::vector<std::pair<std::string, std::string>> headline_of(const SimulationResult& r, const SummaryRow& row) {
  std::vector<std::pair<std::string, std::string>> h;
  auto stddev = [](double ps) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(3);
    os << ps / 1000.0 << "ns";
    return os.str();
  };
  if (row.window) {
    h.emplace_back("window_p2p", format_duration(picoseconds(row.window->p2p_ps)));
    h.emplace_back("window_stddev", stddev(row.window->stddev_ps));
    h.emplace_back("windows", std::to_string(row.window->count));
  }
  if (row.pps) {
    h.emplace_back("pps_p2p", format_duration(picoseconds(row.pps->p2p_ps)));
    h.emplace_back("pps_stddev", stddev(row.pps->stddev_ps));
  }
  if (r.kind != ExperimentKind::jitter_validation) {
    h.emplace_back("total_recovery", row.total_recovery ? format_duration(*row.total_recovery) : "incomplete");
    for (const auto& rec : r.recovery) {
      if (!rec.complete()) continue;
      const RecoveryBreakdown b = recovery_breakdown(rec);
      h.emplace_back("detection", format_duration(b.detection));
      h.emplace_back("notification", format_duration(b.notification));
      h.emplace_back("processing", format_duration(b.processing));
      h.emplace_back("command_transport", format_duration(b.command_transport));
      h.emplace_back("arming_actuation", format_duration(b.arming_actuation));
      break;
    }
  }
  return h;
}

}  // namespace

RunReport run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir,
                       std::optional<std::uint64_t> seed) {
  std::filesystem::create_directories(out_dir);
  const auto t0 = std::chrono::steady_clock::now();
  Testbed tb(scenario, seed.value_or(scenario.root_seed));
  const SimulationResult result = tb.run();
  const auto t1 = std::chrono::steady_clock::now();

  RunReport rep;
  rep.scenario_id = scenario.id;
  rep.seed = tb.seed();
  rep.scenario_hash = scenario.fingerprint();
  rep.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  rep.summary = result.summary();
  rep.headline = headline_of(result, rep.summary);

  auto emit = [&](const std::string& name, auto&& write) {
    const auto path = out_dir / name;
    auto os = open_csv(path);
    write(os);
    rep.csv_paths.push_back(path);
  };
  emit("trace.csv", [&](std::ostream& os) { tb.engine().write_trace_csv(os); });
  if (result.kind == ExperimentKind::jitter_validation) {
    emit("edges.csv", [&](std::ostream& os) { result.window_edges.write_csv(os); });
    emit("pps_edges.csv", [&](std::ostream& os) { result.pps_edges.write_csv(os); });
    emit("eye.csv", [&](std::ostream& os) { result.eye.write_csv(os); });
  } else {
    emit("recovery.csv", [&](std::ostream& os) { write_recovery_csv(os, result.recovery); });
  }
  for (const auto& id : tb.switch_ids()) {
    emit("transitions-" + id + ".csv", [&](std::ostream& os) { tb.optical_switch(id).write_transitions_csv(os); });
  }
  emit("summary.csv", [&](std::ostream& os) {
    write_summary_header(os, false);
    write_summary_row(os, rep.summary);
  });
  return rep;
}

void print_report(std::ostream& os, const RunReport& r) {
  os << "scenario  " << r.scenario_id << " (hash " << r.scenario_hash << ", seed " << r.seed << ")\n";
  char wall[32];
  std::snprintf(wall, sizeof wall, "%.3f", r.wall_seconds);
  os << "wall time " << wall << " s\n";
  for (const auto& [k, v] : r.headline) os << "  " << k << " = " << v << '\n';
  for (const auto& p : r.csv_paths) os << "  wrote " << p.string() << '\n';
}

std::vector<RunReport> sweep(const Scenario& scenario, const std::string& param, const std::vector<std::string>& values,
                             const std::filesystem::path& out_dir) {
  if (values.empty()) throw Error(Errc::UnknownParameter, "sweep of '" + param + "' has an empty value list");
  std::vector<Scenario> variants;
  variants.reserve(values.size());
  for (const auto& v : values) variants.push_back(parse_scenario(with_parameter(scenario.source, param, v)));

  const auto n = static_cast<std::int64_t>(values.size());
  std::vector<RunReport> reports(values.size());
  std::vector<std::exception_ptr> errors(values.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      reports[i] = run_scenario(variants[i], out_dir / ("run-" + std::to_string(i)),
                                scenario.root_seed + static_cast<std::uint64_t>(i));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  auto os = open_csv(out_dir / "summary.csv");
  write_summary_header(os, true);
  for (std::size_t i = 0; i < values.size(); ++i) write_summary_row(os, reports[i].summary, std::pair{param, values[i]});
  return reports;
}

}  // namespace optisync
