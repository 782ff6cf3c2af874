#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "optisync/time.hpp"

namespace optisync {

/// Slave edge time minus master trigger time, one sample per repetition.
class EdgeTrace {
 public:
  void append(std::int64_t delta_ps) { samples_.push_back(delta_ps); }
  std::span<const std::int64_t> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }

  /// Rows (rep, delta_ps), rep counting from 0.
  void write_csv(std::ostream& os) const;

 private:
  std::vector<std::int64_t> samples_;
};

struct JitterStats {
  std::int64_t p2p_ps = 0;
  double mean_ps = 0.0;
  double stddev_ps = 0.0;  ///< population; 0 for a single sample
  std::size_t count = 0;
};

/// Reductions are exact integer sums, so the parallel and serial kernels
/// agree bit for bit regardless of thread count. Throws Error(EmptyTrace).
JitterStats jitter_stats(std::span<const std::int64_t> samples);
inline JitterStats jitter_stats(const EdgeTrace& trace) { return jitter_stats(trace.samples()); }

class EyeHistogram {
 public:
  explicit EyeHistogram(Duration bin_width = nanoseconds(5));

  Duration bin_width() const { return bin_width_; }
  const std::map<std::int64_t, std::uint64_t>& bins() const { return bins_; }
  std::uint64_t total() const;

  void add(std::int64_t bin_index, std::uint64_t count) { bins_[bin_index] += count; }
  std::int64_t bin_of(std::int64_t position_ps) const;
  std::int64_t center_ps(std::int64_t bin_index) const;

  /// Rows (bin_center_ps, count) in ascending bin order.
  void write_csv(std::ostream& os) const;

 private:
  Duration bin_width_;
  std::map<std::int64_t, std::uint64_t> bins_;
};

/// Bins every edge position (ps relative to the trigger) of one or more
/// repetitions into the histogram.
void accumulate_eye(EyeHistogram& hist, std::span<const std::int64_t> edge_positions);

namespace reference {
JitterStats jitter_stats(std::span<const std::int64_t> samples);
void accumulate_eye(EyeHistogram& hist, std::span<const std::int64_t> edge_positions);
}  // namespace reference

/// Failure-to-restore timeline. All instants are sim time.
struct RecoveryRecord {
  std::optional<SimTime> failure_at;
  std::optional<SimTime> detected_at;
  std::optional<SimTime> notified_at;
  std::optional<SimTime> plan_issued_at;
  std::optional<SimTime> commands_delivered_at;  ///< last command reaching an agent
  std::vector<std::pair<std::string, SimTime>> actuation_start;  ///< per switch
  std::optional<SimTime> restored_at;

  bool complete() const;
  /// Throws Error(InvalidRecord) if any present fields are out of order.
  void check_order() const;
  Duration total() const;
};

/// Builds a complete record; throws Error(InvalidRecord) on order violations.
RecoveryRecord make_recovery_record(SimTime failure_at, SimTime detected_at, SimTime notified_at,
                                    SimTime plan_issued_at, SimTime commands_delivered_at,
                                    std::vector<std::pair<std::string, SimTime>> actuation_start,
                                    SimTime restored_at);

struct RecoveryBreakdown {
  Duration detection;          ///< failure -> detection at the monitor
  Duration notification;       ///< detection -> notification at the controller
  Duration processing;         ///< notification -> plan issued
  Duration command_transport;  ///< plan issued -> last command delivered
  Duration arming_actuation;   ///< last command delivered -> restored
  Duration total;
};

/// Throws Error(IncompleteRecord) if any instant is missing.
RecoveryBreakdown recovery_breakdown(const RecoveryRecord& r);

void write_recovery_csv(std::ostream& os, const std::vector<RecoveryRecord>& records);

struct SummaryRow {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::string experiment;
  std::optional<JitterStats> window;
  std::optional<JitterStats> pps;
  std::optional<Duration> total_recovery;
};

void write_summary_header(std::ostream& os, bool with_sweep_columns);
void write_summary_row(std::ostream& os, const SummaryRow& row,
                       const std::optional<std::pair<std::string, std::string>>& sweep = std::nullopt);

}  // namespace optisync
