#include "optisync/ptp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>

#include "optisync/error.hpp"

namespace optisync {

JitterProfile JitterProfile::gaussian(double sigma_ps, std::int64_t lo_ps, std::int64_t hi_ps) {
  JitterProfile p;
  p.kind = PdvKind::gaussian;
  p.sigma_ps = sigma_ps;
  p.lo_ps = lo_ps;
  p.hi_ps = hi_ps;
  return p;
}

JitterProfile JitterProfile::gamma(double shape, double scale_ps, std::int64_t lo_ps, std::int64_t hi_ps) {
  JitterProfile p;
  p.kind = PdvKind::gamma;
  p.shape = shape;
  p.scale_ps = scale_ps;
  p.lo_ps = lo_ps;
  p.hi_ps = hi_ps;
  return p;
}

Duration JitterProfile::sample(RngStream& rng, double scale) const {
  if (kind == PdvKind::none) return Duration::zero();
  const auto lo = static_cast<double>(lo_ps);
  const auto hi = static_cast<double>(hi_ps);
  double v = 0.0;
  for (int attempt = 0; attempt < 64; ++attempt) {
    v = kind == PdvKind::gaussian ? sigma_ps * rng.next_gaussian() : scale_ps * rng.next_gamma(shape);
    if (v >= lo && v <= hi) break;
  }
  v = std::clamp(v, lo, hi);
  return Duration{round_half_away(v * scale)};
}

std::string_view to_string(PdvKind kind) {
  switch (kind) {
    case PdvKind::none: return "none";
    case PdvKind::gaussian: return "gaussian";
    case PdvKind::gamma: return "gamma";
  }
  return "none";
}

// Calibrated once against 1800 one-per-second windows (see README,
// "Calibrated profiles") and frozen.
std::optional<JitterProfile> named_link_profile(std::string_view name) {
  if (name == "noiseless") return JitterProfile::none();
  // Frozen after calibration against the window/PPS jitter targets.
  if (name == "standard-ethernet") return JitterProfile::gamma(2.0, 11'900.0, 0, 127'500);
  if (name == "ptp-enabled") return JitterProfile::gaussian(11'340.0, -34'020, 34'020);
  return std::nullopt;
}

std::optional<JitterProfile> named_actuation_profile(std::string_view name) {
  if (name == "none") return JitterProfile::none();
  // FPGA capture of the PPS input plus driver latency spread; frozen.
  if (name == "fpga-pps-capture") return JitterProfile::gaussian(6'000.0, 0, 12'000);
  return std::nullopt;
}

namespace {

void validate_profile(const JitterProfile& p, Duration base, const char* which) {
  const std::string w = which;
  if (p.kind == PdvKind::none) return;
  if (p.lo_ps > p.hi_ps) throw Error(Errc::InvalidArgument, w + " pdv truncation lo > hi");
  if (p.lo_ps < -base.ps()) throw Error(Errc::InvalidArgument, w + " pdv truncation lo below -base");
  if (p.kind == PdvKind::gaussian && !(p.sigma_ps >= 0.0))
    throw Error(Errc::InvalidArgument, w + " gaussian sigma must be >= 0");
  if (p.kind == PdvKind::gamma && !(p.shape > 0.0 && p.scale_ps > 0.0))
    throw Error(Errc::InvalidArgument, w + " gamma shape and scale must be > 0");
}

}  // namespace

void LinkDelayModel::validate() const {
  if (fwd_base <= Duration::zero() || rev_base <= Duration::zero())
    throw Error(Errc::InvalidArgument, "link base delays must be positive");
  if (!(pdv_scale >= 0.0)) throw Error(Errc::InvalidArgument, "pdv_scale must be >= 0");
  validate_profile(fwd_pdv, fwd_base, "forward");
  validate_profile(rev_pdv, rev_base, "reverse");
  // Scaling can push a negative lower bound past -base.
  if (pdv_scale > 1.0) {
    if (fwd_pdv.kind != PdvKind::none && static_cast<double>(fwd_pdv.lo_ps) * pdv_scale < -static_cast<double>(fwd_base.ps()))
      throw Error(Errc::InvalidArgument, "scaled forward pdv can exceed the base delay");
    if (rev_pdv.kind != PdvKind::none && static_cast<double>(rev_pdv.lo_ps) * pdv_scale < -static_cast<double>(rev_base.ps()))
      throw Error(Errc::InvalidArgument, "scaled reverse pdv can exceed the base delay");
  }
}

DelayLink::DelayLink(std::string id, std::string end_a, std::string end_b, LinkDelayModel model,
                     RngStream fwd_rng, RngStream rev_rng)
    : id_(std::move(id)),
      end_a_(std::move(end_a)),
      end_b_(std::move(end_b)),
      model_(std::move(model)),
      fwd_rng_(std::move(fwd_rng)),
      rev_rng_(std::move(rev_rng)) {
  model_.validate();
}

std::optional<SimTime> DelayLink::transit(Direction dir, SimTime sent) {
  const bool fwd = dir == Direction::forward;
  const Duration base = fwd ? model_.fwd_base : model_.rev_base;
  const JitterProfile& pdv = fwd ? model_.fwd_pdv : model_.rev_pdv;
  RngStream& rng = fwd ? fwd_rng_ : rev_rng_;
  SimTime& last = fwd ? last_fwd_ : last_rev_;

  if (!is_up(sent)) return std::nullopt;
  SimTime arrival = sent + base + pdv.sample(rng, model_.pdv_scale);
  arrival = std::max(arrival, last);
  last = arrival;
  return arrival;
}

void DelayLink::fail(SimTime at) {
  if (failed_since_) throw Error(Errc::AlreadyFailed, "link " + id_ + " already failed");
  failed_since_ = at;
}

SyncResult estimate_offset(const PtpTimestamps& ts) {
  const __int128 ms = static_cast<__int128>((ts.t2 - ts.t1).ps());
  const __int128 sm = static_cast<__int128>((ts.t4 - ts.t3).ps());
  return SyncResult{div_round_half_away(ms - sm, 2), div_round_half_away(ms + sm, 2)};
}

std::vector<SyncResult> estimate_offsets(std::span<const PtpTimestamps> batch) {
  std::vector<SyncResult> out(batch.size());
  const auto n = static_cast<std::int64_t>(batch.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = estimate_offset(batch[static_cast<std::size_t>(i)]);
  }
  return out;
}

namespace reference {
std::vector<SyncResult> estimate_offsets(std::span<const PtpTimestamps> batch) {
  std::vector<SyncResult> out;
  out.reserve(batch.size());
  for (const auto& ts : batch) out.push_back(estimate_offset(ts));
  return out;
}
}  // namespace reference

PtpTimestamps compute_exchange(const ClockState& master, const ClockState& slave, SimTime sync_sent,
                               Duration fwd_delay, Duration rev_delay, Duration turnaround) {
  PtpTimestamps ts;
  ts.t1 = local_time(master, sync_sent);
  const SimTime sync_arrival = sync_sent + fwd_delay;
  ts.t2 = local_time(slave, sync_arrival);
  ts.t3 = ts.t2 + turnaround;
  const SimTime req_sent = sim_time_of_local(slave, ts.t3);
  ts.t4 = local_time(master, req_sent + rev_delay);
  return ts;
}

std::pair<std::int64_t, ServoState> servo_step(const ServoState& servo, std::int64_t measured_offset_ps) {
  ServoState next = servo;
  next.integral_ps = servo.integral_ps + measured_offset_ps;
  const double raw = servo.kp * static_cast<double>(measured_offset_ps) +
                     servo.ki * static_cast<double>(next.integral_ps);
  const auto limit = static_cast<double>(servo.max_step_ps);
  const std::int64_t step = round_half_away(std::clamp(raw, -limit, limit));
  return {step, next};
}

namespace {

std::string exchange_detail(const PtpTimestamps& ts) {
  return "t1=" + std::to_string(ts.t1.ps()) + ";t2=" + std::to_string(ts.t2.ps()) +
         ";t3=" + std::to_string(ts.t3.ps()) + ";t4=" + std::to_string(ts.t4.ps());
}

Direction reverse_of(Direction d) {
  return d == Direction::forward ? Direction::reverse : Direction::forward;
}

}  // namespace

void run_sync_exchange(Engine& engine, LocalClock& master, LocalClock& slave, DelayLink& link,
                       Direction master_to_slave, SimTime start, Duration turnaround,
                       std::function<void(std::optional<ExchangeRecord>)> done) {
  auto ts = std::make_shared<PtpTimestamps>();
  auto finish = std::make_shared<std::function<void(std::optional<ExchangeRecord>)>>(std::move(done));
  const Direction to_master = reverse_of(master_to_slave);

  auto abort = [&engine, &link, finish, id = slave.id()](const char* stage) {
    engine.log("ptp-link-down", id, std::string("link=") + link.id() + ";stage=" + stage);
    (*finish)(std::nullopt);
  };

  ts->t1 = master.now_local(start);
  const auto sync_arrival = link.transit(master_to_slave, start);
  if (!sync_arrival) {
    engine.schedule(start, EventKind::PtpMessageArrival, slave.id(), [abort] { abort("sync"); },
                    "msg=sync;lost");
    return;
  }
  engine.schedule(*sync_arrival, EventKind::PtpMessageArrival, slave.id(),
    [&engine, &master, &slave, &link, master_to_slave, to_master, turnaround, ts, finish, abort] {
      if (!link.is_up(engine.now())) {
        abort("sync");
        return;
      }
      ts->t2 = slave.now_local(engine.now());
      ts->t3 = ts->t2 + turnaround;
      const SimTime req_sent = slave.when(ts->t3);
      const auto req_arrival = link.transit(to_master, req_sent);
      if (!req_arrival) {
        engine.schedule(req_sent, EventKind::PtpMessageArrival, master.id(),
                        [abort] { abort("delay_req"); }, "msg=delay_req;lost");
        return;
      }
      engine.schedule(*req_arrival, EventKind::PtpMessageArrival, master.id(),
        [&engine, &master, &slave, &link, master_to_slave, ts, finish, abort] {
          if (!link.is_up(engine.now())) {
            abort("delay_req");
            return;
          }
          ts->t4 = master.now_local(engine.now());
          const auto resp_arrival = link.transit(master_to_slave, engine.now());
          if (!resp_arrival) {
            abort("delay_resp");
            return;
          }
          engine.schedule(*resp_arrival, EventKind::PtpMessageArrival, slave.id(),
            [&engine, &link, ts, finish, abort] {
              if (!link.is_up(engine.now())) {
                abort("delay_resp");
                return;
              }
              (*finish)(ExchangeRecord{*ts, engine.now()});
            },
            "msg=delay_resp");
        }, "msg=delay_req");
    }, "msg=sync");
}

PtpSlavePort::PtpSlavePort(Engine& engine, LocalClock& master, LocalClock& slave, DelayLink& link,
                           Direction master_to_slave, PtpPortConfig cfg)
    : engine_(engine), master_(master), slave_(slave), link_(link), dir_(master_to_slave),
      cfg_(cfg), servo_(cfg.servo) {
  if (cfg_.interval <= Duration::zero()) throw Error(Errc::InvalidArgument, "sync interval must be positive");
}

void PtpSlavePort::start(SimTime from) { schedule_next(from); }

void PtpSlavePort::schedule_next(SimTime after) {
  const std::int64_t interval = cfg_.interval.ps();
  const LocalTime now = master_.now_local(after);
  const std::int64_t k = floor_div(now.ps() - cfg_.phase.ps(), interval) + 1;
  const SimTime start = master_.when(LocalTime{k * interval + cfg_.phase.ps()});
  engine_.schedule(start, EventKind::ControllerTimer, master_.id(), [this] {
    const SimTime t = engine_.now();
    run_sync_exchange(engine_, master_, slave_, link_, dir_, t, cfg_.turnaround,
                      [this](std::optional<ExchangeRecord> rec) {
                        if (rec) on_exchange(*rec);
                      });
    schedule_next(t);
  }, "ptp-sync-start;slave=" + slave_.id());
}

void PtpSlavePort::on_exchange(const ExchangeRecord& rec) {
  const SyncResult est = estimate_offset(rec.ts);
  std::int64_t step = 0;
  if (std::llabs(est.offset_ps) > cfg_.step_threshold_ps) {
    step = est.offset_ps;
    servo_.integral_ps = 0;
  } else {
    auto [s, next] = servo_step(servo_, est.offset_ps);
    step = s;
    servo_ = next;
  }
  const SimTime t = engine_.now();
  slave_.correct(step, t);
  const std::int64_t true_after = offset_at(slave_.state(), t) - offset_at(master_.state(), t);
  history_.push_back(Step{t, est, step, true_after});
  engine_.log("ptp-exchange", slave_.id(),
              exchange_detail(rec.ts) + ";offset_est=" + std::to_string(est.offset_ps) +
                  ";delay_est=" + std::to_string(est.delay_ps) + ";step=" + std::to_string(step));
}

}  // namespace optisync
