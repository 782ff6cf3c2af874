// One PASS/FAIL line per acceptance criterion; exit status is the failure count.
#include <chrono>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>

#include "optisync/control.hpp"
#include "optisync/error.hpp"
#include "optisync/runner.hpp"

using namespace optisync;
using namespace optisync::literals;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string ns(double ps) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ns", ps / 1e3);
  return buf;
}

std::int64_t iabs(std::int64_t v) { return v < 0 ? -v : v; }

bool within(double measured, double target, double rel) { return std::fabs(measured - target) <= rel * target; }

Scenario bundled(std::string_view name) { return load_scenario(bundled_scenario_path(name)); }

Verdict standard_ethernet() {
  const auto t0 = std::chrono::steady_clock::now();
  const SimulationResult r = simulate(bundled("fig2a-standard-ethernet"));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const JitterStats w = jitter_stats(r.window_edges);
  const bool ok = w.count == 1800 && within(static_cast<double>(w.p2p_ps), 105'000, 0.15) && wall < 5.0;
  return {ok, "window p2p " + ns(w.p2p_ps) + " over " + std::to_string(w.count) + " reps (target 105 ns +/-15%), " +
                  std::to_string(wall) + " s wall (limit 5 s)"};
}

Verdict ptp_enabled() {
  const SimulationResult r = simulate(bundled("fig2a-ptp-enabled"));
  const JitterStats w = jitter_stats(r.window_edges);
  const JitterStats p = jitter_stats(r.pps_edges);
  const bool ok = w.count == 1800 && p.count == 1800 && within(static_cast<double>(p.p2p_ps), 56'000, 0.15) &&
                  within(static_cast<double>(w.p2p_ps), 62'000, 0.15);
  return {ok, "PPS p2p " + ns(p.p2p_ps) + " (target 56 ns), window p2p " + ns(w.p2p_ps) + " (target 62 ns), +/-15%"};
}

Duration recovery_total(const Scenario& s, std::optional<std::uint64_t> seed = std::nullopt) {
  const SimulationResult r = simulate(s, seed);
  if (r.recovery.size() != 1) throw Error(Errc::IncompleteRecord, "expected one recovery episode");
  return recovery_breakdown(r.recovery[0]).total;
}

Verdict recovery_totals() {
  const Duration instant = recovery_total(bundled("fig3b-instant"));
  const Scenario sched = bundled("fig3b-scheduled");
  const Duration scheduled = recovery_total(sched);
  bool identity = true;
  for (const char* v : {"0ms", "1ms", "2.5ms", "5ms", "10ms", "20ms", "50us"}) {
    const Scenario s = parse_scenario(with_parameter(sched.source, "control.scheduling_overhead", v));
    identity &= recovery_total(s) == instant + parse_duration(v);
  }
  const bool ok = instant == 2'700_us && scheduled == 12'700_us && scheduled - instant == 10_ms && identity;
  return {ok, "instant " + format_duration(instant) + ", scheduled " + format_duration(scheduled) +
                  ", scheduled = instant + overhead over 7 swept overheads: " + (identity ? "yes" : "no")};
}

Verdict estimator() {
  RngStream rng(4, "acceptance.estimator");
  std::int64_t worst_sym = 0;
  std::int64_t worst_asym = 0;
  for (int i = 0; i < 10'000; ++i) {
    const std::int64_t offset = static_cast<std::int64_t>(rng.next_u64() % 2'000'000'001ULL) - 1'000'000'000;
    const Duration d = picoseconds(1'000 + static_cast<std::int64_t>(rng.next_u64() % 100'000'000));
    const Duration a = picoseconds(static_cast<std::int64_t>(rng.next_u64() % 2'000'001) - 1'000'000);
    const SimTime start{static_cast<std::int64_t>(rng.next_u64() % 1'000'000'000'000'000ULL)};
    const ClockState slave{offset, 0, SimTime{0}};
    const auto sym = estimate_offset(compute_exchange(ClockState{}, slave, start, d, d, 1_us));
    worst_sym = std::max(worst_sym, iabs(sym.offset_ps - offset));
    // fwd = d + a, rev = d - a: the estimate is biased by exactly a.
    const auto asym = estimate_offset(compute_exchange(ClockState{}, slave, start, d + a + 1_ms, d - a + 1_ms, 1_us));
    worst_asym = std::max(worst_asym, iabs(asym.offset_ps - (offset + a.ps())));
  }
  return {worst_sym <= 1 && worst_asym <= 1, "10000 exchanges, worst symmetric error " + std::to_string(worst_sym) +
                                                  " ps, worst asymmetric residual " + std::to_string(worst_asym) + " ps"};
}

struct FireRig {
  Engine engine;
  LocalClock ctrl_clock;
  Controller ctrl;
  struct Node {
    std::unique_ptr<LocalClock> clock;
    std::unique_ptr<OpticalSwitch> sw;
    std::unique_ptr<FpgaDriver> fpga;
    std::unique_ptr<DelayLink> link;
    std::unique_ptr<Agent> agent;
    std::optional<SimTime> start;
  };
  std::vector<std::unique_ptr<Node>> nodes;

  explicit FireRig(std::int64_t ctrl_offset)
      : ctrl_clock("controller", ClockState{ctrl_offset, 0, SimTime{0}}), ctrl(engine, ctrl_clock, ControlConfig{}) {
    engine.set_tracing(false);
  }

  void add(const std::string& id, std::int64_t offset, std::int64_t estimate_error) {
    auto n = std::make_unique<Node>();
    n->clock = std::make_unique<LocalClock>(id, ClockState{offset, 0, SimTime{0}});
    n->sw = std::make_unique<OpticalSwitch>("ocs-" + id, 1, kNominalRise);
    n->fpga = std::make_unique<FpgaDriver>(engine, "ocs-" + id, *n->sw, *n->clock, FpgaConfig{},
                                           fork_rng(1, "fpga.ocs-" + id + ".actuation"));
    LinkDelayModel m;
    m.fwd_base = m.rev_base = 500_us;
    n->link = std::make_unique<DelayLink>("ctl-" + id, "controller", id, m, fork_rng(1, "link.ctl-" + id + ".fwd"),
                                          fork_rng(1, "link.ctl-" + id + ".rev"));
    n->agent = std::make_unique<Agent>(engine, id, *n->clock, *n->fpga, ctrl.config());
    Node* raw = n.get();
    n->fpga->on_actuated([raw](CommandHandle, int, SimTime t) { raw->start = t; });
    ctrl.register_agent(*n->agent, *n->link, Direction::forward);
    ctrl.set_offset_estimate(id, offset - ctrl_clock.state().offset_ps + estimate_error);
    nodes.push_back(std::move(n));
  }
};

Verdict synchronized_fire() {
  RngStream rng(5, "acceptance.sync-fire");
  auto offset = [&] { return static_cast<std::int64_t>(rng.next_u64() % 1'000'000'000'001ULL) - 500'000'000'000; };
  std::int64_t worst_exact = 0;
  std::int64_t worst_law = 0;
  for (int i = 0; i < 1'000; ++i) {
    for (bool inject : {false, true}) {
      FireRig rig(offset());
      const int k = 2 + static_cast<int>(rng.next_u64() % 3);
      std::vector<std::int64_t> err;
      std::vector<std::pair<std::string, int>> targets;
      for (int j = 0; j < k; ++j) {
        err.push_back(inject ? static_cast<std::int64_t>(rng.next_u64() % 2'000'001) - 1'000'000 : 0);
        rig.add("a" + std::to_string(j), offset(), err.back());
        targets.emplace_back("a" + std::to_string(j), 2);
      }
      rig.ctrl.schedule_reconfig(targets, rig.ctrl_clock.now_local(SimTime{0}) + 10_ms);
      rig.engine.run_until(sim_at(1_s));
      for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
          if (!rig.nodes[a]->start || !rig.nodes[b]->start) return {false, "an agent did not actuate"};
          const std::int64_t skew = (*rig.nodes[a]->start - *rig.nodes[b]->start).ps();
          const std::int64_t dev = iabs(skew - (err[a] - err[b]));
          std::int64_t& worst = inject ? worst_law : worst_exact;
          worst = std::max(worst, dev);
        }
      }
    }
  }
  return {worst_exact <= 1 && worst_law <= 1, "1000 scenarios, worst skew with exact estimates " +
                                                   std::to_string(worst_exact) +
                                                   " ps, worst deviation from error difference " +
                                                   std::to_string(worst_law) + " ps"};
}

Verdict window_width() {
  RngStream rng(6, "acceptance.window");
  std::int64_t worst = 0;
  bool nominal_ok = true;
  int cases = 0;
  for (Duration width : {150_ns, 1_us, 1_ms}) {
    for (int i = 0; i < 200; ++i) {
      const std::int64_t offset = static_cast<std::int64_t>(rng.next_u64() % 1'000'000'000'001ULL) - 500'000'000'000;
      Engine e;
      e.set_tracing(false);
      OpticalSwitch sw("ocs", 1, kNominalRise);
      LocalClock clock("agent", ClockState{offset, 0, SimTime{0}});
      FpgaDriver fpga(e, "ocs", sw, clock, FpgaConfig{}, fork_rng(1, "fpga.ocs.actuation"));
      const LocalTime fire = clock.now_local(sim_at(1_s)) + 2_ms;
      fpga.generate_window(2, width, SwitchCommand::at_local(2, fire), sim_at(1_s));
      e.run_until(sim_at(2_s));
      const auto c = sw.fifty_percent_crossings(2);
      if (c.size() != 2) return {false, "window did not produce two crossings"};
      worst = std::max(worst, iabs((c[1].at - c[0].at).ps() - width.ps()));
      if (width == 150_ns) nominal_ok &= c[0].at == clock.when(fire) + 5_ns;
      ++cases;
    }
  }
  return {worst <= 1 && nominal_ok, std::to_string(cases) + " windows over {150 ns, 1 us, 1 ms}, worst width error " +
                                        std::to_string(worst) + " ps; 150 ns rising 50% at fire + 5 ns: " +
                                        (nominal_ok ? "yes" : "no")};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "optisync-acceptance";
  fs::remove_all(root);
  int files = 0;
  std::string problems;
  for (auto name : kBundledScenarios) {
    const Scenario s = bundled(name);
    const fs::path a = root / std::string(name) / "a";
    const fs::path b = root / std::string(name) / "b";
    const fs::path c = root / std::string(name) / "reseeded";
    const RunReport ra = run_scenario(s, a);
    run_scenario(s, b);
    const RunReport rc = run_scenario(s, c, s.root_seed + 1);
    for (const auto& e : fs::directory_iterator(a)) {
      ++files;
      if (slurp(e.path()) != slurp(b / e.path().filename())) problems += " " + std::string(name) + "/" + e.path().filename().string();
    }
    if (s.kind == ExperimentKind::jitter_validation) {
      if (slurp(a / "edges.csv") == slurp(c / "edges.csv")) problems += " " + std::string(name) + ":seed-insensitive";
    } else if (ra.summary.total_recovery != rc.summary.total_recovery ||
               *rc.summary.total_recovery != (s.kind == ExperimentKind::instant_recovery ? 2'700_us : 12'700_us)) {
      problems += " " + std::string(name) + ":total-moved";
    }
  }
  fs::remove_all(root);
  return {problems.empty(), std::to_string(files) + " CSVs compared across " +
                                std::to_string(std::size(kBundledScenarios)) + " scenarios" +
                                (problems.empty() ? ", all identical; reseeding moves jitter, not totals"
                                                  : "; mismatches:" + problems)};
}

Verdict servo_convergence() {
  Engine e;
  e.set_tracing(false);
  LocalClock gm("gm", ClockState{});
  LocalClock slave("agent", ClockState{1'000'000'000, 0, SimTime{0}});
  LinkDelayModel m;
  m.fwd_base = m.rev_base = 5_us;
  DelayLink link("gm-agent", "gm", "agent", m, fork_rng(1, "link.gm-agent.fwd"), fork_rng(1, "link.gm-agent.rev"));
  PtpSlavePort port(e, gm, slave, link, Direction::forward, PtpPortConfig{});
  port.start(SimTime{0});
  e.run_until(sim_at(20_s));
  int first = -1;
  for (std::size_t i = 0; i < port.history().size(); ++i) {
    if (iabs(port.history()[i].true_offset_after_ps) < 1'000) {
      first = static_cast<int>(i) + 1;
      break;
    }
  }
  const bool ok = first > 0 && first <= 20 && iabs(port.history().back().true_offset_after_ps) < 1'000;
  return {ok, "from +1 ms, |offset| < 1 ns after exchange " + std::to_string(first) + " (limit 20)"};
}

}  // namespace

int main() {
  const std::pair<const char*, std::function<Verdict()>> criteria[] = {
      {"standard-ethernet window jitter", standard_ethernet},
      {"ptp-enabled PPS and window jitter", ptp_enabled},
      {"recovery totals and decomposition", recovery_totals},
      {"estimator exactness", estimator},
      {"synchronized fire", synchronized_fire},
      {"window-width law", window_width},
      {"determinism", determinism},
      {"servo convergence", servo_convergence},
  };
  int failures = 0;
  int n = 0;
  for (const auto& [name, check] : criteria) {
    ++n;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("[%s] criterion %d %s: %s\n", v.pass ? "PASS" : "FAIL", n, name, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
