#include "optisync/engine.hpp"

#include <ostream>

#include "optisync/error.hpp"

namespace optisync {

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::PtpMessageArrival: return "ptp-message-arrival";
    case EventKind::PpsEdge: return "pps-edge";
    case EventKind::UartDelivery: return "uart-delivery";
    case EventKind::Actuation: return "actuation";
    case EventKind::PowerSample: return "power-sample";
    case EventKind::FailureInjection: return "failure-injection";
    case EventKind::ControllerTimer: return "controller-timer";
    case EventKind::NotificationArrival: return "notification-arrival";
  }
  return "unknown";
}

EventId Engine::schedule(SimTime fire_at, EventKind kind, std::string node, Action action,
                         std::string detail) {
  if (fire_at < now_) {
    throw Error(Errc::SchedulingInPast, "event at " + std::to_string(fire_at.ps()) +
                                            " ps is before now (" + std::to_string(now_.ps()) +
                                            " ps)");
  }
  const std::uint64_t seq = next_seq_++;
  queue_.push(Pending{fire_at, seq, kind, std::move(node), std::move(detail), std::move(action)});
  return EventId{seq};
}

const std::vector<TraceRow>& Engine::run_until(SimTime t_end) {
  while (!queue_.empty() && queue_.top().fire_at <= t_end) {
    // priority_queue::top is const; the element is popped right after.
    Pending ev = std::move(const_cast<Pending&>(queue_.top()));
    queue_.pop();
    now_ = ev.fire_at;
    current_seq_ = ev.seq;
    ++dispatched_;
    if (tracing_) {
      trace_.push_back(TraceRow{ev.fire_at, ev.seq, std::string(to_string(ev.kind)),
                                std::move(ev.node), std::move(ev.detail)});
    }
    if (ev.action) ev.action();
  }
  return trace_;
}

void Engine::log(std::string_view kind, std::string_view node, std::string detail) {
  if (!tracing_) return;
  trace_.push_back(TraceRow{now_, current_seq_, std::string(kind), std::string(node), std::move(detail)});
}

void Engine::write_trace_csv(std::ostream& os) const {
  os << "fire_at_ps,seq,kind,node,detail\n";
  for (const auto& r : trace_) {
    os << r.fire_at.ps() << ',' << r.seq << ',' << r.kind << ',' << r.node << ',' << r.detail << '\n';
  }
}

}  // namespace optisync
