#include "optisync/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "optisync/error.hpp"

namespace optisync {

void EdgeTrace::write_csv(std::ostream& os) const {
  os << "rep,delta_ps\n";
  for (std::size_t i = 0; i < samples_.size(); ++i) os << i << ',' << samples_[i] << '\n';
}

namespace {

struct Moments {
  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = std::numeric_limits<std::int64_t>::min();
  __int128 sum = 0;
  __int128 sum_sq = 0;
};

JitterStats finish(const Moments& m, std::size_t n) {
  JitterStats s;
  s.count = n;
  s.p2p_ps = m.hi - m.lo;
  const auto nn = static_cast<__int128>(n);
  s.mean_ps = static_cast<double>(m.sum) / static_cast<double>(n);
  // n^2 var = n * sum_sq - sum^2, exact in 128 bits for |x| < 2^40 and n < 2^24.
  const __int128 scaled_var = nn * m.sum_sq - m.sum * m.sum;
  s.stddev_ps = std::sqrt(static_cast<double>(scaled_var)) / static_cast<double>(n);
  return s;
}

void require_nonempty(std::size_t n) {
  if (n == 0) throw Error(Errc::EmptyTrace, "jitter statistics need at least one sample");
}

}  // namespace

JitterStats jitter_stats(std::span<const std::int64_t> samples) {
  require_nonempty(samples.size());
  const auto n = static_cast<std::int64_t>(samples.size());
  // OpenMP has no __int128 reduction; each thread keeps its own partials.
  Moments total;
#pragma omp parallel
  {
    Moments local;
#pragma omp for schedule(static) nowait
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t x = samples[static_cast<std::size_t>(i)];
      local.lo = std::min(local.lo, x);
      local.hi = std::max(local.hi, x);
      local.sum += x;
      local.sum_sq += static_cast<__int128>(x) * x;
    }
#pragma omp critical(optisync_jitter_merge)
    {
      total.lo = std::min(total.lo, local.lo);
      total.hi = std::max(total.hi, local.hi);
      total.sum += local.sum;
      total.sum_sq += local.sum_sq;
    }
  }
  return finish(total, samples.size());
}

EyeHistogram::EyeHistogram(Duration bin_width) : bin_width_(bin_width) {
  if (bin_width_ <= Duration::zero()) throw Error(Errc::InvalidArgument, "eye bin width must be positive");
}

std::uint64_t EyeHistogram::total() const {
  std::uint64_t t = 0;
  for (const auto& [_, c] : bins_) t += c;
  return t;
}

std::int64_t EyeHistogram::bin_of(std::int64_t position_ps) const {
  return floor_div(position_ps, bin_width_.ps());
}

std::int64_t EyeHistogram::center_ps(std::int64_t bin_index) const {
  return bin_index * bin_width_.ps() + bin_width_.ps() / 2;
}

void EyeHistogram::write_csv(std::ostream& os) const {
  os << "bin_center_ps,count\n";
  for (const auto& [idx, c] : bins_) os << center_ps(idx) << ',' << c << '\n';
}

void accumulate_eye(EyeHistogram& hist, std::span<const std::int64_t> edge_positions) {
  if (edge_positions.empty()) return;
  const auto n = static_cast<std::int64_t>(edge_positions.size());
  const auto [mn, mx] = std::minmax_element(edge_positions.begin(), edge_positions.end());
  const std::int64_t first = hist.bin_of(*mn);
  const std::int64_t span_bins = hist.bin_of(*mx) - first + 1;
  // Dense counts over the occupied range; sparse outliers would make this
  // large, so fall back to the serial kernel past a million bins.
  if (span_bins > (1 << 20)) {
    reference::accumulate_eye(hist, edge_positions);
    return;
  }
  std::vector<std::uint64_t> dense(static_cast<std::size_t>(span_bins), 0);
#pragma omp parallel
  {
    std::vector<std::uint64_t> local(dense.size(), 0);
#pragma omp for schedule(static) nowait
    for (std::int64_t i = 0; i < n; ++i) {
      ++local[static_cast<std::size_t>(hist.bin_of(edge_positions[static_cast<std::size_t>(i)]) - first)];
    }
#pragma omp critical(optisync_eye_merge)
    for (std::size_t b = 0; b < dense.size(); ++b) dense[b] += local[b];
  }
  for (std::size_t b = 0; b < dense.size(); ++b) {
    if (dense[b] != 0) hist.add(first + static_cast<std::int64_t>(b), dense[b]);
  }
}

namespace reference {

JitterStats jitter_stats(std::span<const std::int64_t> samples) {
  require_nonempty(samples.size());
  Moments m;
  for (std::int64_t x : samples) {
    m.lo = std::min(m.lo, x);
    m.hi = std::max(m.hi, x);
    m.sum += x;
    m.sum_sq += static_cast<__int128>(x) * x;
  }
  return finish(m, samples.size());
}

void accumulate_eye(EyeHistogram& hist, std::span<const std::int64_t> edge_positions) {
  for (std::int64_t p : edge_positions) hist.add(hist.bin_of(p), 1);
}

}  // namespace reference

bool RecoveryRecord::complete() const {
  return failure_at && detected_at && notified_at && plan_issued_at && commands_delivered_at &&
         !actuation_start.empty() && restored_at;
}

void RecoveryRecord::check_order() const {
  std::vector<std::pair<const char*, SimTime>> seq;
  auto push = [&](const char* name, const std::optional<SimTime>& v) {
    if (v) seq.emplace_back(name, *v);
  };
  push("failure_at", failure_at);
  push("detected_at", detected_at);
  push("notified_at", notified_at);
  push("plan_issued_at", plan_issued_at);
  push("commands_delivered_at", commands_delivered_at);
  if (!actuation_start.empty()) {
    SimTime first = actuation_start.front().second;
    for (const auto& [_, t] : actuation_start) first = std::min(first, t);
    seq.emplace_back("actuation_start", first);
  }
  push("restored_at", restored_at);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    if (seq[i].second < seq[i - 1].second) {
      throw Error(Errc::InvalidRecord, std::string(seq[i].first) + " precedes " + seq[i - 1].first);
    }
  }
  if (restored_at) {
    for (const auto& [sw, t] : actuation_start) {
      if (*restored_at < t) throw Error(Errc::InvalidRecord, "restored_at precedes actuation of " + sw);
    }
  }
}

Duration RecoveryRecord::total() const {
  if (!failure_at || !restored_at) throw Error(Errc::IncompleteRecord, "record has no failure or restore time");
  return *restored_at - *failure_at;
}

RecoveryRecord make_recovery_record(SimTime failure_at, SimTime detected_at, SimTime notified_at,
                                    SimTime plan_issued_at, SimTime commands_delivered_at,
                                    std::vector<std::pair<std::string, SimTime>> actuation_start,
                                    SimTime restored_at) {
  RecoveryRecord r;
  r.failure_at = failure_at;
  r.detected_at = detected_at;
  r.notified_at = notified_at;
  r.plan_issued_at = plan_issued_at;
  r.commands_delivered_at = commands_delivered_at;
  r.actuation_start = std::move(actuation_start);
  r.restored_at = restored_at;
  r.check_order();
  return r;
}

RecoveryBreakdown recovery_breakdown(const RecoveryRecord& r) {
  if (!r.complete()) throw Error(Errc::IncompleteRecord, "recovery record is missing stages");
  r.check_order();
  RecoveryBreakdown b;
  b.detection = *r.detected_at - *r.failure_at;
  b.notification = *r.notified_at - *r.detected_at;
  b.processing = *r.plan_issued_at - *r.notified_at;
  b.command_transport = *r.commands_delivered_at - *r.plan_issued_at;
  b.arming_actuation = *r.restored_at - *r.commands_delivered_at;
  b.total = r.total();
  return b;
}

namespace {
std::string opt_ps(const std::optional<SimTime>& t) { return t ? std::to_string(t->ps()) : std::string(); }
}  // namespace

void write_recovery_csv(std::ostream& os, const std::vector<RecoveryRecord>& records) {
  os << "failure_at_ps,detected_at_ps,notified_at_ps,plan_issued_at_ps,commands_delivered_at_ps,"
        "first_actuation_ps,last_actuation_ps,restored_at_ps,detection_ps,notification_ps,processing_ps,"
        "command_transport_ps,arming_actuation_ps,total_ps\n";
  for (const auto& r : records) {
    std::string first;
    std::string last;
    if (!r.actuation_start.empty()) {
      SimTime lo = r.actuation_start.front().second;
      SimTime hi = lo;
      for (const auto& [_, t] : r.actuation_start) {
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
      first = std::to_string(lo.ps());
      last = std::to_string(hi.ps());
    }
    os << opt_ps(r.failure_at) << ',' << opt_ps(r.detected_at) << ',' << opt_ps(r.notified_at) << ','
       << opt_ps(r.plan_issued_at) << ',' << opt_ps(r.commands_delivered_at) << ',' << first << ',' << last
       << ',' << opt_ps(r.restored_at);
    if (r.complete()) {
      const RecoveryBreakdown b = recovery_breakdown(r);
      os << ',' << b.detection.ps() << ',' << b.notification.ps() << ',' << b.processing.ps() << ','
         << b.command_transport.ps() << ',' << b.arming_actuation.ps() << ',' << b.total.ps();
    } else {
      os << ",,,,,,";
    }
    os << '\n';
  }
}

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

void write_summary_header(std::ostream& os, bool with_sweep_columns) {
  if (with_sweep_columns) os << "param,value,";
  os << "scenario_id,seed,experiment,window_p2p_ps,window_stddev_ps,window_count,pps_p2p_ps,pps_stddev_ps,"
        "total_recovery_ps\n";
}

void write_summary_row(std::ostream& os, const SummaryRow& row,
                       const std::optional<std::pair<std::string, std::string>>& sweep) {
  if (sweep) os << sweep->first << ',' << sweep->second << ',';
  os << row.scenario_id << ',' << row.seed << ',' << row.experiment << ',';
  if (row.window) {
    os << row.window->p2p_ps << ',' << fixed3(row.window->stddev_ps) << ',' << row.window->count << ',';
  } else {
    os << ",,,";
  }
  if (row.pps) {
    os << row.pps->p2p_ps << ',' << fixed3(row.pps->stddev_ps) << ',';
  } else {
    os << ",,";
  }
  if (row.total_recovery) os << row.total_recovery->ps();
  os << '\n';
}

}  // namespace optisync
