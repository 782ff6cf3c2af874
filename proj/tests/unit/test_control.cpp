#include <doctest.h>

#include <memory>

#include "optisync/control.hpp"
#include "optisync/error.hpp"

using namespace optisync;
using namespace optisync::literals;

namespace {

struct Node {
  std::unique_ptr<LocalClock> clock;
  std::unique_ptr<OpticalSwitch> sw;
  std::unique_ptr<FpgaDriver> fpga;
  std::unique_ptr<DelayLink> link;
  std::unique_ptr<Agent> agent;
  std::vector<SimTime> starts;
};

// Controller plus agents on noiseless symmetric control links.
struct Harness {
  Engine engine;
  LocalClock ctrl_clock;
  Controller ctrl;
  std::vector<std::unique_ptr<Node>> nodes;

  explicit Harness(ClockState ctrl_state = {}, ControlConfig cfg = {})
      : ctrl_clock("controller", ctrl_state), ctrl(engine, ctrl_clock, cfg) {
    engine.set_tracing(true);
  }

  Node& add(const std::string& id, ClockState c, Duration link_delay = 500_us) {
    auto n = std::make_unique<Node>();
    n->clock = std::make_unique<LocalClock>(id, c);
    n->sw = std::make_unique<OpticalSwitch>("ocs-" + id, 1, kNominalRise);
    n->fpga = std::make_unique<FpgaDriver>(engine, "ocs-" + id, *n->sw, *n->clock, FpgaConfig{},
                                           fork_rng(1, "fpga.ocs-" + id + ".actuation"));
    LinkDelayModel m;
    m.fwd_base = m.rev_base = link_delay;
    n->link = std::make_unique<DelayLink>("ctl-" + id, "controller", id, m, fork_rng(1, "link.ctl-" + id + ".fwd"),
                                          fork_rng(1, "link.ctl-" + id + ".rev"));
    n->agent = std::make_unique<Agent>(engine, id, *n->clock, *n->fpga, ctrl.config());
    Node* raw = n.get();
    n->fpga->on_actuated([raw](CommandHandle, int, SimTime t) { raw->starts.push_back(t); });
    ctrl.register_agent(*n->agent, *n->link, Direction::forward);
    nodes.push_back(std::move(n));
    return *nodes.back();
  }

  std::int64_t truth(const Node& n, SimTime t) const {
    return offset_at(n.clock->state(), t) - offset_at(ctrl_clock.state(), t);
  }
};

}  // namespace

TEST_SUITE("offset measurement") {
  TEST_CASE("noiseless symmetric link recovers the true offset") {
    for (std::int64_t truth : {50'000LL, 0LL, -30'000LL, 499'999'999'999LL}) {
      Harness h;
      h.add("a", ClockState{truth, 0, SimTime{0}});
      bool ok = false;
      h.ctrl.measure_agent_offset("a", [&](bool r) { ok = r; });
      h.engine.run_until(sim_at(1_s));
      CHECK(ok);
      REQUIRE(h.ctrl.offset_estimate("a"));
      CHECK(*h.ctrl.offset_estimate("a") == truth);
    }
  }

  TEST_CASE("controller clock offset is taken relative") {
    Harness h(ClockState{10'000, 0, SimTime{0}});
    h.add("a", ClockState{50'000, 0, SimTime{0}});
    h.ctrl.measure_agent_offset("a");
    h.engine.run_until(sim_at(1_s));
    CHECK(*h.ctrl.offset_estimate("a") == 40'000);
  }

  TEST_CASE("link already down: LinkDown, previous estimate kept") {
    Harness h;
    Node& a = h.add("a", ClockState{50'000, 0, SimTime{0}});
    h.ctrl.set_offset_estimate("a", 7);
    a.link->fail(SimTime{0});
    CHECK_THROWS_AS(h.ctrl.measure_agent_offset("a"), Error);
    CHECK(*h.ctrl.offset_estimate("a") == 7);
  }

  TEST_CASE("link lost mid-measurement reports failure and keeps the estimate") {
    Harness h;
    Node& a = h.add("a", ClockState{50'000, 0, SimTime{0}});
    h.ctrl.set_offset_estimate("a", 7);
    std::optional<bool> ok;
    h.ctrl.measure_agent_offset("a", [&](bool r) { ok = r; });
    a.link->fail(sim_at(3_ms));
    h.engine.run_until(sim_at(1_s));
    REQUIRE(ok);
    CHECK_FALSE(*ok);
    CHECK(*h.ctrl.offset_estimate("a") == 7);
  }

  TEST_CASE("minimum-delay filter") {
    CHECK(select_min_delay({{10, 500}, {20, 300}, {30, 400}}) == SyncResult{20, 300});
    CHECK(select_min_delay({{10, 300}, {20, 300}}) == SyncResult{10, 300});
  }
}

TEST_SUITE("translation") {
  TEST_CASE("identity, definition and missing estimate") {
    Harness h;
    h.add("a", ClockState{});
    CHECK_THROWS_AS(h.ctrl.translate_timestamp("a", local_at(1_s)), Error);
    h.ctrl.set_offset_estimate("a", 0);
    CHECK(h.ctrl.translate_timestamp("a", local_at(1_s)) == local_at(1_s));
    h.ctrl.set_offset_estimate("a", 50'000);
    CHECK(h.ctrl.translate_timestamp("a", local_at(1_s)) == local_at(1_s + 50_ns));
    CHECK_THROWS_AS(h.ctrl.translate_timestamp("ghost", local_at(1_s)), Error);
  }

  TEST_CASE("perfect-time toggle uses true offsets") {
    ControlConfig cfg;
    cfg.perfect_time = true;
    Harness h({}, cfg);
    h.add("a", ClockState{123'456, 0, SimTime{0}});
    CHECK(h.ctrl.translate_timestamp("a", local_at(1_s)) == local_at(1_s) + picoseconds(123'456));
  }
}

TEST_SUITE("scheduled reconfiguration") {
  TEST_CASE("two agents at +50 / -30 ns fire together") {
    Harness h;
    Node& a = h.add("a", ClockState{50'000, 0, SimTime{0}});
    Node& b = h.add("b", ClockState{-30'000, 0, SimTime{0}});
    h.ctrl.measure_agent_offset("a");
    h.ctrl.measure_agent_offset("b");
    h.engine.run_until(sim_at(100_ms));
    h.ctrl.schedule_reconfig({{"a", 2}, {"b", 2}}, local_at(500_ms));
    h.engine.run_until(sim_at(1_s));
    REQUIRE(a.starts.size() == 1);
    REQUIRE(b.starts.size() == 1);
    CHECK(a.starts[0] == sim_at(500_ms));
    CHECK(b.starts[0] == sim_at(500_ms));
    REQUIRE(h.ctrl.reports().size() == 2);
    for (const auto& r : h.ctrl.reports()) CHECK(r.outcome == CommandOutcome::actuated);
  }

  TEST_CASE("a fire time already past at one agent is rejected there only") {
    Harness h;
    Node& a = h.add("a", ClockState{}, 1_ms);
    Node& b = h.add("b", ClockState{}, 100_ms);
    h.ctrl.set_offset_estimate("a", 0);
    h.ctrl.set_offset_estimate("b", 0);
    h.ctrl.schedule_reconfig({{"a", 3}, {"b", 3}}, local_at(50_ms));
    h.engine.run_until(sim_at(1_s));
    CHECK(a.starts.size() == 1);
    CHECK(b.starts.empty());
    REQUIRE(h.ctrl.reports().size() == 2);
    int rejected = 0;
    for (const auto& r : h.ctrl.reports()) {
      if (r.outcome == CommandOutcome::rejected) {
        ++rejected;
        CHECK(r.agent == "b");
        CHECK(r.error == Errc::TimestampInLocalPast);
      }
    }
    CHECK(rejected == 1);
  }

  TEST_CASE("unknown agent or missing estimate throws before anything is sent") {
    Harness h;
    h.add("a", ClockState{});
    h.add("b", ClockState{});
    h.ctrl.set_offset_estimate("a", 0);
    const auto before = h.engine.pending_count();
    CHECK_THROWS_AS(h.ctrl.schedule_reconfig({{"a", 2}, {"b", 2}}, local_at(1_s)), Error);
    CHECK_THROWS_AS(h.ctrl.schedule_reconfig({{"a", 2}, {"nobody", 2}}, local_at(1_s)), Error);
    CHECK(h.engine.pending_count() == before);
  }

  TEST_CASE("property: synchronized fire and skew-error law") {
    RngStream rng(41, "control.sync-fire");
    for (int i = 0; i < 300; ++i) {
      Harness h(ClockState{static_cast<std::int64_t>(rng.next_u64() % 1'000'000'000) - 500'000'000, 0, SimTime{0}});
      const int k = 2 + static_cast<int>(rng.next_u64() % 3);
      std::vector<std::pair<std::string, int>> targets;
      std::vector<std::int64_t> err;
      const bool inject = i % 2 == 1;
      for (int j = 0; j < k; ++j) {
        const std::string id = "a" + std::to_string(j);
        const std::int64_t off = static_cast<std::int64_t>(rng.next_u64() % 1'000'000'000'001ULL) - 500'000'000'000;
        h.add(id, ClockState{off, 0, SimTime{0}});
        targets.emplace_back(id, 2);
        err.push_back(inject ? static_cast<std::int64_t>(rng.next_u64() % 2'000'001) - 1'000'000 : 0);
        h.ctrl.set_offset_estimate(id, h.truth(*h.nodes.back(), SimTime{0}) + err.back());
      }
      const LocalTime fire = h.ctrl_clock.now_local(SimTime{0}) + 10_ms;
      h.ctrl.schedule_reconfig(targets, fire);
      h.engine.run_until(sim_at(1_s));
      for (int a = 0; a < k; ++a) {
        REQUIRE(h.nodes[a]->starts.size() == 1);
        for (int b = a + 1; b < k; ++b) {
          const std::int64_t skew = (h.nodes[a]->starts[0] - h.nodes[b]->starts[0]).ps();
          REQUIRE(std::llabs(skew - (err[a] - err[b])) <= 1);
        }
      }
    }
  }

  TEST_CASE("windows at a translated instant overlap with skew equal to the estimate error") {
    Harness h;
    Node& a = h.add("a", ClockState{50'000, 0, SimTime{0}});
    Node& b = h.add("b", ClockState{-30'000, 0, SimTime{0}});
    h.ctrl.set_offset_estimate("a", 50'000);
    h.ctrl.set_offset_estimate("b", -30'000 + 4'000);
    const LocalTime t = local_at(2_ms);
    a.fpga->generate_window(2, 150_ns, SwitchCommand::at_local(2, h.ctrl.translate_timestamp("a", t)), SimTime{0});
    b.fpga->generate_window(2, 150_ns, SwitchCommand::at_local(2, h.ctrl.translate_timestamp("b", t)), SimTime{0});
    h.engine.run_until(sim_at(1_s));
    const auto ca = a.sw->fifty_percent_crossings(2);
    const auto cb = b.sw->fifty_percent_crossings(2);
    REQUIRE(ca.size() == 2);
    REQUIRE(cb.size() == 2);
    CHECK((cb[0].at - ca[0].at) == 4_ns);
    CHECK((cb[1].at - ca[1].at) == 4_ns);
    CHECK(cb[0].at < ca[1].at);
  }
}

TEST_SUITE("failure handling") {
  TEST_CASE("no backup path: NoBackupPath and nothing sent") {
    Harness h;
    h.add("a", ClockState{});
    const auto before = h.engine.pending_count();
    CHECK_THROWS_AS(h.ctrl.handle_failure(FailureNotification{"primary", SimTime{0}, LocalTime{0}, "a"},
                                          RecoveryMode::instant),
                    Error);
    CHECK(h.engine.pending_count() == before);
    CHECK(h.ctrl.plans().empty());
  }

  TEST_CASE("instant plan uses immediate commands, scheduled plan adds overhead plus lead") {
    Harness h;
    h.add("a", ClockState{5'000, 0, SimTime{0}});
    h.add("b", ClockState{-5'000, 0, SimTime{0}});
    h.ctrl.set_offset_estimate("a", 5'000);
    h.ctrl.set_offset_estimate("b", -5'000);
    h.ctrl.add_backup_path(BackupPath{"primary", "backup", {{"a", 2}, {"b", 2}}});
    const FailureNotification n{"primary", SimTime{0}, LocalTime{0}, "b"};
    const RecoveryPlan instant = h.ctrl.handle_failure(n, RecoveryMode::instant);
    CHECK(instant.issued_at == SimTime{0} + 300_us);
    for (const auto& c : instant.commands) CHECK(c.command.mode == ActuationMode::immediate);
    const RecoveryPlan sched = h.ctrl.handle_failure(n, RecoveryMode::scheduled);
    REQUIRE(sched.fire_at_controller_local);
    // issue 300 us + overhead 10 ms + link 500 us + margin 0 + UART 100 us
    CHECK(*sched.fire_at_controller_local == local_at(10'900_us));
    CHECK(sched.commands[0].command.fire_at_local == local_at(10'900_us) + 5_ns);
    CHECK(sched.commands[1].command.fire_at_local == local_at(10'900_us) - 5_ns);
    bool logged = false;
    for (const auto& row : h.engine.trace()) logged |= row.kind == "controller-decision";
    CHECK(logged);
  }

  TEST_CASE("probe restores only after every switch actuates") {
    RecoveryProbe p;
    p.failure("l", SimTime{0});
    p.detected("l", SimTime{10});
    p.notified("l", SimTime{20});
    p.plan_issued("l", SimTime{30}, {"s1", "s2"});
    p.command_delivered("l", SimTime{40});
    p.command_delivered("l", SimTime{45});
    p.actuation("l", "s1", SimTime{50}, Duration{10});
    CHECK_FALSE(p.records()[0].restored_at);
    p.actuation("l", "s2", SimTime{52}, Duration{10});
    const auto r = p.records()[0];
    CHECK(r.restored_at == SimTime{62});
    CHECK(r.commands_delivered_at == SimTime{45});
    CHECK(r.complete());
  }
}

TEST_CASE("structural: every control message has exactly one controller end") {
  for (ControlMessage m : kControlMessages) {
    const Route r = route_of(m);
    CAPTURE(to_string(m));
    CHECK(r.from != r.to);
    CHECK((r.from == Endpoint::controller || r.to == Endpoint::controller));
  }
  static_assert(route_of(ControlMessage::failure_notification).to == Endpoint::controller);
  static_assert(route_of(ControlMessage::switch_command).from == Endpoint::controller);
}
