#include <doctest.h>

#include <cmath>
#include <numeric>

#include "optisync/error.hpp"
#include "optisync/ptp.hpp"

using namespace optisync;
using namespace optisync::literals;

namespace {

PtpTimestamps ts_ns(std::int64_t t1, std::int64_t t2, std::int64_t t3, std::int64_t t4) {
  return {local_at(nanoseconds(t1)), local_at(nanoseconds(t2)), local_at(nanoseconds(t3)), local_at(nanoseconds(t4))};
}

LinkDelayModel fixed_link(Duration fwd, Duration rev) {
  LinkDelayModel m;
  m.fwd_base = fwd;
  m.rev_base = rev;
  return m;
}

DelayLink make_link(const std::string& id, LinkDelayModel m, std::uint64_t seed = 1) {
  return DelayLink(id, "gm", "slave", m, fork_rng(seed, "link." + id + ".fwd"), fork_rng(seed, "link." + id + ".rev"));
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("estimator") {
  TEST_CASE("symmetric zero offset") {
    CHECK(estimate_offset(ts_ns(0, 100, 200, 300)) == SyncResult{0, 100'000});
  }
  TEST_CASE("offset +50 ns over a symmetric 100 ns path") {
    CHECK(estimate_offset(ts_ns(0, 150, 200, 250)) == SyncResult{50'000, 100'000});
  }
  TEST_CASE("asymmetric 120/80 ns path reads half the asymmetry") {
    CHECK(estimate_offset(ts_ns(0, 120, 200, 280)) == SyncResult{20'000, 100'000});
  }
  TEST_CASE("odd differences round half away from zero") {
    const PtpTimestamps ts{LocalTime{0}, LocalTime{101}, LocalTime{200}, LocalTime{300}};
    CHECK(estimate_offset(ts) == SyncResult{1, 101});
  }

  TEST_CASE("property: exact under symmetry, half the asymmetry otherwise") {
    RngStream rng(4, "ptp.estimator");
    for (int i = 0; i < 10'000; ++i) {
      const std::int64_t offset = static_cast<std::int64_t>(rng.next_u64() % 2'000'000'000ULL) - 1'000'000'000;
      const std::int64_t drift = static_cast<std::int64_t>(rng.next_u64() % 201) - 100;
      const Duration d = picoseconds(1'000 + static_cast<std::int64_t>(rng.next_u64() % 100'000'000));
      const SimTime start{static_cast<std::int64_t>(rng.next_u64() % 1'000'000'000'000'000ULL)};
      const ClockState master{};
      const ClockState slave{offset, 0, SimTime{0}};
      const auto est = estimate_offset(compute_exchange(master, slave, start, d, d, 1_us));
      REQUIRE(std::llabs(est.offset_ps - offset) <= 1);
      REQUIRE(std::llabs(est.delay_ps - d.ps()) <= 1);

      const Duration a = picoseconds(static_cast<std::int64_t>(rng.next_u64() % 1'000'000) - 500'000);
      const auto asym = estimate_offset(compute_exchange(ClockState{}, ClockState{}, start, d + a, d - a + 2_us, 1_us));
      REQUIRE(std::llabs(asym.offset_ps - (a.ps() - 1'000'000)) <= 1);

      // Drifting slave: exactness holds to within the drift accrued over the exchange.
      const ClockState drifting{offset, drift, SimTime{0}};
      const auto ed = estimate_offset(compute_exchange(master, drifting, start, d, d, 1_us));
      const std::int64_t truth = offset_at(drifting, start + d);
      REQUIRE(std::llabs(ed.offset_ps - truth) <= 2);
    }
  }

  TEST_CASE("property: outputs reconstruct the timestamp differences") {
    RngStream rng(5, "ptp.identity");
    for (int i = 0; i < 5'000; ++i) {
      const auto r = [&] { return static_cast<std::int64_t>(rng.next_u64() % 2'000'000'000ULL); };
      const PtpTimestamps ts{LocalTime{r()}, LocalTime{r()}, LocalTime{r()}, LocalTime{r()}};
      const SyncResult s = estimate_offset(ts);
      const std::int64_t ms = (ts.t2 - ts.t1).ps();
      const std::int64_t sm = (ts.t4 - ts.t3).ps();
      REQUIRE(std::llabs(s.offset_ps + s.delay_ps - ms) <= 1);
      REQUIRE(std::llabs(s.delay_ps - s.offset_ps - sm) <= 1);
    }
  }

  TEST_CASE("batch estimator equals the serial reference") {
    RngStream rng(6, "ptp.batch");
    std::vector<PtpTimestamps> batch(20'000);
    for (auto& ts : batch) {
      const auto r = [&] { return static_cast<std::int64_t>(rng.next_u64() % 4'000'000'000ULL) - 2'000'000'000; };
      ts = {LocalTime{r()}, LocalTime{r()}, LocalTime{r()}, LocalTime{r()}};
    }
    CHECK(estimate_offsets(batch) == reference::estimate_offsets(batch));
    CHECK(estimate_offsets(std::span<const PtpTimestamps>{}).empty());
  }
}

TEST_SUITE("exchange") {
  TEST_CASE("compute_exchange: symmetric zero offset") {
    const auto ts = compute_exchange(ClockState{}, ClockState{}, SimTime{0}, 100_ns, 100_ns, 1_us);
    CHECK(ts.t1 == LocalTime{0});
    CHECK(ts.t2 == local_at(100_ns));
    CHECK(ts.t3 == ts.t2 + 1_us);
    CHECK(ts.t4 == ts.t3 + 100_ns);
  }

  TEST_CASE("compute_exchange: slave +50 ns reads t2 = 150 ns") {
    const auto ts = compute_exchange(ClockState{}, ClockState{50'000, 0, SimTime{0}}, SimTime{0}, 100_ns, 100_ns, 1_us);
    CHECK(ts.t2 == local_at(150_ns));
  }

  TEST_CASE("engine exchange matches the pure computation") {
    Engine e;
    LocalClock gm("gm", ClockState{});
    LocalClock slave("slave", ClockState{-3'000'000, 40, SimTime{0}});
    DelayLink link = make_link("l", fixed_link(5_us, 7_us));
    std::optional<ExchangeRecord> got;
    run_sync_exchange(e, gm, slave, link, Direction::forward, sim_at(250_ms), 1_us,
                      [&](std::optional<ExchangeRecord> r) { got = r; });
    e.run_until(sim_at(1_s));
    REQUIRE(got);
    CHECK(got->ts == compute_exchange(gm.state(), slave.state(), sim_at(250_ms), 5_us, 7_us, 1_us));
  }

  TEST_CASE("reverse direction uses the link's reverse base for sync") {
    Engine e;
    LocalClock gm("gm", ClockState{});
    LocalClock slave("slave", ClockState{});
    DelayLink link = make_link("l", fixed_link(5_us, 7_us));
    std::optional<ExchangeRecord> got;
    run_sync_exchange(e, gm, slave, link, Direction::reverse, SimTime{0}, 1_us,
                      [&](std::optional<ExchangeRecord> r) { got = r; });
    e.run_until(sim_at(1_s));
    REQUIRE(got);
    CHECK(got->ts.t2 == local_at(7_us));
  }

  TEST_CASE("link failure loses the exchange") {
    for (SimTime fail_at : {SimTime{0}, sim_at(3_us), sim_at(9_us), sim_at(15_us)}) {
      CAPTURE(fail_at.ps());
      Engine e;
      LocalClock gm("gm", ClockState{});
      LocalClock slave("slave", ClockState{});
      DelayLink link = make_link("l", fixed_link(5_us, 5_us));
      link.fail(fail_at);
      bool called = false;
      std::optional<ExchangeRecord> got;
      run_sync_exchange(e, gm, slave, link, Direction::forward, SimTime{0}, 1_us, [&](std::optional<ExchangeRecord> r) {
        called = true;
        got = r;
      });
      e.run_until(sim_at(1_s));
      CHECK(called);
      CHECK_FALSE(got);
      bool logged = false;
      for (const auto& row : e.trace()) logged |= row.kind == "ptp-link-down";
      CHECK(logged);
    }
  }

  TEST_CASE("links keep FIFO order per direction and refuse a second failure") {
    LinkDelayModel m = fixed_link(10_us, 10_us);
    m.fwd_pdv = *named_link_profile("standard-ethernet");
    DelayLink link = make_link("fifo", m);
    SimTime last{0};
    for (int i = 0; i < 10'000; ++i) {
      const auto a = link.transit(Direction::forward, SimTime{i * 1'000});
      REQUIRE(a);
      REQUIRE(*a >= last);
      REQUIRE(*a >= SimTime{i * 1'000} + 10_us);
      last = *a;
    }
    link.fail(sim_at(1_s));
    CHECK_FALSE(link.transit(Direction::forward, sim_at(1_s)));
    CHECK_THROWS_AS(link.fail(sim_at(2_s)), Error);
  }
}

TEST_SUITE("pdv") {
  TEST_CASE("named profiles exist and stay within truncation") {
    for (const char* name : {"noiseless", "standard-ethernet", "ptp-enabled"}) {
      CAPTURE(name);
      const auto p = named_link_profile(name);
      REQUIRE(p);
      RngStream rng(3, std::string("pdv.") + name);
      for (int i = 0; i < 20'000; ++i) {
        const auto d = p->sample(rng);
        if (p->kind == PdvKind::none) {
          REQUIRE(d == Duration::zero());
        } else {
          REQUIRE(d.ps() >= p->lo_ps);
          REQUIRE(d.ps() <= p->hi_ps);
        }
      }
    }
    CHECK_FALSE(named_link_profile("carrier-pigeon"));
    CHECK(named_actuation_profile("fpga-pps-capture"));
    CHECK(named_actuation_profile("fpga-pps-capture")->lo_ps >= 0);
  }

  TEST_CASE("pdv_scale multiplies samples") {
    const auto p = *named_link_profile("ptp-enabled");
    RngStream a(8, "scale");
    RngStream b(8, "scale");
    for (int i = 0; i < 1'000; ++i) {
      const auto one = p.sample(a, 1.0).ps();
      const auto two = p.sample(b, 2.0).ps();
      REQUIRE(std::llabs(two - 2 * one) <= 1);
    }
  }

  TEST_CASE("model validation") {
    LinkDelayModel m = fixed_link(5_us, 5_us);
    CHECK_NOTHROW(m.validate());
    m.fwd_base = Duration::zero();
    CHECK_THROWS_AS(m.validate(), Error);
    m = fixed_link(5_us, 5_us);
    m.pdv_scale = -1.0;
    CHECK_THROWS_AS(m.validate(), Error);
    m = fixed_link(10_ns, 10_ns);
    m.fwd_pdv = JitterProfile::gaussian(1'000.0, -20'000, 20'000);
    CHECK_THROWS_AS(m.validate(), Error);
  }
}

TEST_SUITE("servo") {
  TEST_CASE("PI step") {
    const auto [step, next] = servo_step(ServoState{}, 100'000);
    CHECK(step == 100'000);  // 0.7*100 + 0.3*100
    CHECK(next.integral_ps == 100'000);
  }
  TEST_CASE("zero in, zero out") {
    const auto [step, next] = servo_step(ServoState{}, 0);
    CHECK(step == 0);
    CHECK(next.integral_ps == 0);
  }
  TEST_CASE("clamped to max_step") {
    ServoState s;
    s.max_step_ps = 50'000;
    CHECK(servo_step(s, 100'000).first == 50'000);
    CHECK(servo_step(s, -100'000).first == -50'000);
  }
  TEST_CASE("integral carries across steps") {
    auto [s1, st1] = servo_step(ServoState{}, 10'000);
    auto [s2, st2] = servo_step(st1, 10'000);
    CHECK(s1 == 10'000);
    CHECK(s2 == 13'000);  // 7000 + 0.3 * 20000
    CHECK(st2.integral_ps == 20'000);
  }

  TEST_CASE("property: noiseless disciplining converges within 20 exchanges from up to 1 ms") {
    RngStream rng(21, "servo.convergence");
    std::vector<std::int64_t> starts = {1'000'000'000, -1'000'000'000, 1'000'001, 999'999, 500'001, 1, -7};
    for (int i = 0; i < 200; ++i) starts.push_back(static_cast<std::int64_t>(rng.next_u64() % 2'000'000'001ULL) - 1'000'000'000);
    for (std::int64_t initial : starts) {
      CAPTURE(initial);
      Engine e;
      e.set_tracing(false);
      LocalClock gm("gm", ClockState{});
      LocalClock slave("slave", ClockState{initial, 0, SimTime{0}});
      DelayLink link = make_link("gm-slave", fixed_link(5_us, 5_us));
      PtpSlavePort port(e, gm, slave, link, Direction::forward, PtpPortConfig{});
      port.start(SimTime{0});
      e.run_until(sim_at(20_s));
      REQUIRE(port.history().size() == 20);
      CHECK(std::llabs(port.history().back().true_offset_after_ps) < 1'000);
    }
  }

  TEST_CASE("exchanges start at the configured phase of each master second") {
    Engine e;
    LocalClock gm("gm", ClockState{});
    LocalClock slave("slave", ClockState{});
    DelayLink link = make_link("l", fixed_link(5_us, 5_us));
    PtpSlavePort port(e, gm, slave, link, Direction::forward, PtpPortConfig{});
    port.start(SimTime{0});
    e.run_until(sim_at(3_s));
    std::vector<SimTime> starts;
    for (const auto& row : e.trace()) {
      if (row.detail.rfind("ptp-sync-start", 0) == 0) starts.push_back(row.fire_at);
    }
    CHECK(starts == std::vector<SimTime>{sim_at(250_ms), sim_at(1'250_ms), sim_at(2'250_ms)});
    bool logged = false;
    for (const auto& row : e.trace()) logged |= row.kind == "ptp-exchange" && row.detail.find("offset_est=0") != std::string::npos;
    CHECK(logged);
  }

  TEST_CASE("property: independently labelled PDV streams give uncorrelated residuals") {
    Engine e;
    e.set_tracing(false);
    LocalClock gm("gm", ClockState{});
    LocalClock s1("s1", ClockState{20'000, 30, SimTime{0}});
    LocalClock s2("s2", ClockState{-20'000, -30, SimTime{0}});
    LinkDelayModel m = fixed_link(5_us, 5_us);
    m.fwd_pdv = m.rev_pdv = *named_link_profile("ptp-enabled");
    DelayLink l1 = make_link("gm-s1", m, 99);
    DelayLink l2 = make_link("gm-s2", m, 99);
    PtpSlavePort p1(e, gm, s1, l1, Direction::forward, PtpPortConfig{});
    PtpSlavePort p2(e, gm, s2, l2, Direction::forward, PtpPortConfig{});
    p1.start(SimTime{0});
    p2.start(SimTime{0});
    e.run_until(sim_at(1'800_s));
    REQUIRE(p1.history().size() == 1'800);
    REQUIRE(p2.history().size() == 1'800);
    std::vector<double> r1, r2;
    for (std::size_t i = 0; i < 1'800; ++i) {
      r1.push_back(static_cast<double>(p1.history()[i].true_offset_after_ps));
      r2.push_back(static_cast<double>(p2.history()[i].true_offset_after_ps));
    }
    CHECK(std::fabs(correlation(r1, r2)) < 0.1);
  }
}
