#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "optisync/time.hpp"

namespace optisync {

enum class EventKind : std::uint8_t {
  PtpMessageArrival,
  PpsEdge,
  UartDelivery,
  Actuation,
  PowerSample,
  FailureInjection,
  ControllerTimer,
  NotificationArrival,
};

std::string_view to_string(EventKind kind);

struct EventId {
  std::uint64_t seq = 0;
};

/// One row of the execution trace. Dispatched events and handler log lines
/// share this shape; a log line carries the seq of the event that emitted it.
struct TraceRow {
  SimTime fire_at;
  std::uint64_t seq = 0;
  std::string kind;
  std::string node;
  std::string detail;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

/// Single-threaded discrete-event engine. Events are dispatched in
/// lexicographic (fire_at, seq) order, seq being assigned at schedule time.
class Engine {
 public:
  using Action = std::function<void()>;

  /// Throws Error(SchedulingInPast) when fire_at < now().
  EventId schedule(SimTime fire_at, EventKind kind, std::string node, Action action,
                   std::string detail = {});

  /// Dispatches every event with fire_at <= t_end. The clock is left at the
  /// last dispatched event time.
  const std::vector<TraceRow>& run_until(SimTime t_end);

  /// Appends a trace row at now() attributed to the event being dispatched.
  void log(std::string_view kind, std::string_view node, std::string detail);

  SimTime now() const { return now_; }
  const std::vector<TraceRow>& trace() const { return trace_; }

  std::uint64_t scheduled_count() const { return next_seq_; }
  std::uint64_t dispatched_count() const { return dispatched_; }
  std::uint64_t pending_count() const { return queue_.size(); }

  void set_tracing(bool on) { tracing_ = on; }

  /// CSV with header fire_at_ps,seq,kind,node,detail.
  void write_trace_csv(std::ostream& os) const;

 private:
  struct Pending {
    SimTime fire_at;
    std::uint64_t seq;
    EventKind kind;
    std::string node;
    std::string detail;
    Action action;
  };
  struct Later {
    bool operator()(const Pending& a, const Pending& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      return a.seq > b.seq;
    }
  };

  std::priority_queue<Pending, std::vector<Pending>, Later> queue_;
  std::vector<TraceRow> trace_;
  SimTime now_{0};
  std::uint64_t next_seq_ = 0;
  std::uint64_t current_seq_ = 0;
  std::uint64_t dispatched_ = 0;
  bool tracing_ = true;
};

}  // namespace optisync
