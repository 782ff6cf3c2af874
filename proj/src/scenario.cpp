#include "optisync/scenario.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "optisync/error.hpp"
#include "optisync/rng.hpp"

namespace optisync {

using nlohmann::json;

std::string_view to_string(NodeRole r) {
  switch (r) {
    case NodeRole::grandmaster: return "grandmaster";
    case NodeRole::agent: return "agent";
    case NodeRole::controller: return "controller";
  }
  return "agent";
}

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::jitter_validation: return "jitter_validation";
    case ExperimentKind::instant_recovery: return "instant_recovery";
    case ExperimentKind::scheduled_recovery: return "scheduled_recovery";
  }
  return "jitter_validation";
}

const NodeSpec* Scenario::node(std::string_view id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const LinkSpec* Scenario::link(std::string_view id) const {
  for (const auto& l : links) {
    if (l.id == id) return &l;
  }
  return nullptr;
}

const SwitchSpec* Scenario::switch_spec(std::string_view id) const {
  for (const auto& s : switches) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const NodeSpec& Scenario::controller() const {
  for (const auto& n : nodes) {
    if (n.role == NodeRole::controller) return n;
  }
  throw Error(Errc::ValidationError, "scenario has no controller");
}

std::string Scenario::fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(source.dump())));
  return buf;
}

std::optional<ControlConfig> named_control_preset(std::string_view name) {
  if (name == "paper-budget") {
    ControlConfig c;
    c.processing_latency = microseconds(300);
    c.scheduling_overhead = milliseconds(10);
    c.detection_processing = microseconds(10);
    // Pads detection (20 us) + processing (10 us) + 2 x 1 ms transport +
    // 300 us + 100 us UART + 10 ns rise to 2.7 ms.
    c.agent_margin = picoseconds(269'990'000);
    return c;
  }
  if (name == "default") return ControlConfig{};
  return std::nullopt;
}

namespace {

class Reader {
 public:
  std::vector<std::string> issues;

  void fail(const std::string& path, const std::string& msg) { issues.push_back(path + ": " + msg); }

  const json* field(const json& obj, const std::string& path, const char* key, bool required) {
    if (!obj.is_object()) {
      fail(path, "expected an object");
      return nullptr;
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) fail(path + "." + key, "missing");
      return nullptr;
    }
    return &*it;
  }

  std::string str(const json& obj, const std::string& path, const char* key, std::string def = {},
                  bool required = false) {
    const json* v = field(obj, path, key, required);
    if (!v) return def;
    if (!v->is_string()) {
      fail(path + "." + key, "expected a string");
      return def;
    }
    return v->get<std::string>();
  }

  Duration dur(const json& obj, const std::string& path, const char* key, Duration def, bool required = false) {
    const json* v = field(obj, path, key, required);
    if (!v) return def;
    return as_duration(*v, path + "." + key, def);
  }

  Duration as_duration(const json& v, const std::string& path, Duration def) {
    if (v.is_number_integer() && v.get<std::int64_t>() == 0) return Duration::zero();
    if (!v.is_string()) {
      fail(path, "expected a duration string with units, e.g. \"150ns\"");
      return def;
    }
    try {
      return parse_duration(v.get<std::string>());
    } catch (const Error& e) {
      fail(path, e.what());
      return def;
    }
  }

  double real(const json& obj, const std::string& path, const char* key, double def, bool required = false) {
    const json* v = field(obj, path, key, required);
    if (!v) return def;
    if (!v->is_number()) {
      fail(path + "." + key, "expected a number");
      return def;
    }
    return v->get<double>();
  }

  std::int64_t integer(const json& obj, const std::string& path, const char* key, std::int64_t def,
                       bool required = false) {
    const json* v = field(obj, path, key, required);
    if (!v) return def;
    if (!v->is_number_integer()) {
      fail(path + "." + key, "expected an integer");
      return def;
    }
    return v->get<std::int64_t>();
  }

  bool boolean(const json& obj, const std::string& path, const char* key, bool def) {
    const json* v = field(obj, path, key, false);
    if (!v) return def;
    if (!v->is_boolean()) {
      fail(path + "." + key, "expected true or false");
      return def;
    }
    return v->get<bool>();
  }

  const json& array(const json& obj, const std::string& path, const char* key, bool required) {
    static const json empty = json::array();
    const json* v = field(obj, path, key, required);
    if (!v) return empty;
    if (!v->is_array()) {
      fail(path + "." + key, "expected an array");
      return empty;
    }
    return *v;
  }

  JitterProfile profile(const json& v, const std::string& path, bool actuation) {
    if (v.is_string()) {
      const auto name = v.get<std::string>();
      auto p = actuation ? named_actuation_profile(name) : named_link_profile(name);
      if (!p) fail(path, "unknown profile '" + name + "'");
      return p.value_or(JitterProfile::none());
    }
    if (!v.is_object()) {
      fail(path, "expected a profile name or object");
      return JitterProfile::none();
    }
    const std::string kind = str(v, path, "kind", "none", true);
    const Duration lo = dur(v, path, "lo", Duration::zero());
    const Duration hi = dur(v, path, "hi", Duration::zero());
    if (kind == "none") return JitterProfile::none();
    if (kind == "gaussian") {
      const Duration sigma = dur(v, path, "sigma", Duration::zero(), true);
      return JitterProfile::gaussian(static_cast<double>(sigma.ps()), lo.ps(), hi.ps());
    }
    if (kind == "gamma") {
      const double shape = real(v, path, "shape", 1.0, true);
      const Duration scale = dur(v, path, "scale", Duration::zero(), true);
      return JitterProfile::gamma(shape, static_cast<double>(scale.ps()), lo.ps(), hi.ps());
    }
    fail(path + ".kind", "expected none, gaussian or gamma");
    return JitterProfile::none();
  }
};

std::string element_path(const char* section, const json& elem, std::size_t index) {
  if (elem.is_object() && elem.contains("id") && elem["id"].is_string()) {
    return std::string(section) + "[" + elem["id"].get<std::string>() + "]";
  }
  return std::string(section) + "[" + std::to_string(index) + "]";
}

template <class T>
void check_unique(Reader& r, const std::vector<T>& items, const char* section) {
  std::set<std::string> seen;
  for (const auto& it : items) {
    if (it.id.empty()) {
      r.fail(section, "element without an id");
    } else if (!seen.insert(it.id).second) {
      r.fail(std::string(section) + "[" + it.id + "]", "duplicate id '" + it.id + "'");
    }
  }
}

std::optional<NodeRole> parse_role(const std::string& s) {
  if (s == "grandmaster") return NodeRole::grandmaster;
  if (s == "agent") return NodeRole::agent;
  if (s == "controller") return NodeRole::controller;
  return std::nullopt;
}

std::optional<ExperimentKind> parse_kind(const std::string& s) {
  if (s == "jitter_validation") return ExperimentKind::jitter_validation;
  if (s == "instant_recovery") return ExperimentKind::instant_recovery;
  if (s == "scheduled_recovery") return ExperimentKind::scheduled_recovery;
  return std::nullopt;
}

void parse_nodes(Reader& r, const json& doc, Scenario& s) {
  const json& arr = r.array(doc, "", "nodes", true);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& n = arr[i];
    const std::string path = element_path("nodes", n, i);
    NodeSpec spec;
    spec.id = r.str(n, path, "id", {}, true);
    const std::string role = r.str(n, path, "role", {}, true);
    if (auto parsed = parse_role(role)) {
      spec.role = *parsed;
    } else if (!role.empty()) {
      r.fail(path + ".role", "expected grandmaster, agent or controller");
    }
    if (const json* c = r.field(n, path, "clock", false)) {
      spec.clock.offset_ps = r.dur(*c, path + ".clock", "offset", Duration::zero()).ps();
      spec.clock.drift_ppb = r.integer(*c, path + ".clock", "drift_ppb", 0);
    }
    if (const json* p = r.field(n, path, "ptp", false)) {
      spec.ptp = PtpAttachment{r.str(*p, path + ".ptp", "master", {}, true), r.str(*p, path + ".ptp", "link", {}, true)};
    }
    if (const json* p = r.field(n, path, "pps", false)) {
      spec.pps.enabled = r.boolean(*p, path + ".pps", "enabled", true);
      spec.pps.period = r.dur(*p, path + ".pps", "period", seconds(1));
    }
    spec.switch_id = r.str(n, path, "switch");
    spec.control_link = r.str(n, path, "control_link");
    s.nodes.push_back(std::move(spec));
  }
}

void parse_links(Reader& r, const json& doc, Scenario& s) {
  const json& arr = r.array(doc, "", "links", false);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& l = arr[i];
    const std::string path = element_path("links", l, i);
    LinkSpec spec;
    spec.id = r.str(l, path, "id", {}, true);
    if (const json* ends = r.field(l, path, "endpoints", true)) {
      if (ends->is_array() && ends->size() == 2 && (*ends)[0].is_string() && (*ends)[1].is_string()) {
        spec.end_a = (*ends)[0].get<std::string>();
        spec.end_b = (*ends)[1].get<std::string>();
      } else {
        r.fail(path + ".endpoints", "expected two node ids");
      }
    }
    spec.model.fwd_base = r.dur(l, path, "fwd_base", Duration::zero(), true);
    spec.model.rev_base = r.dur(l, path, "rev_base", spec.model.fwd_base);
    if (const json* p = r.field(l, path, "profile", false)) {
      spec.model.fwd_pdv = r.profile(*p, path + ".profile", false);
      spec.model.rev_pdv = spec.model.fwd_pdv;
    }
    if (const json* p = r.field(l, path, "fwd_pdv", false)) spec.model.fwd_pdv = r.profile(*p, path + ".fwd_pdv", false);
    if (const json* p = r.field(l, path, "rev_pdv", false)) spec.model.rev_pdv = r.profile(*p, path + ".rev_pdv", false);
    spec.model.pdv_scale = r.real(l, path, "pdv_scale", 1.0);
    try {
      spec.model.validate();
    } catch (const Error& e) {
      r.fail(path, e.what());
    }
    s.links.push_back(std::move(spec));
  }
}

void parse_optical(Reader& r, const json& doc, Scenario& s) {
  const json& arr = r.array(doc, "", "optical_links", false);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& l = arr[i];
    const std::string path = element_path("optical_links", l, i);
    OpticalLink link;
    link.id = r.str(l, path, "id", {}, true);
    link.nominal_power_dbm = r.real(l, path, "nominal_power_dbm", 0.0);
    if (link.nominal_power_dbm <= kFailedFloorDbm) r.fail(path + ".nominal_power_dbm", "must be above -60 dBm");
    s.optical_links.push_back(std::move(link));
  }
}

void parse_switches(Reader& r, const json& doc, Scenario& s) {
  const json& arr = r.array(doc, "", "switches", false);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& w = arr[i];
    const std::string path = element_path("switches", w, i);
    SwitchSpec spec;
    spec.id = r.str(w, path, "id", {}, true);
    if (const json* rise = r.field(w, path, "rise", false)) {
      if (rise->is_string()) {
        if (auto preset = rise_preset(rise->get<std::string>())) {
          spec.rise = *preset;
        } else {
          spec.rise = r.as_duration(*rise, path + ".rise", kNominalRise);
        }
      } else {
        r.fail(path + ".rise", "expected a preset name or duration");
      }
    }
    if (spec.rise <= Duration::zero()) r.fail(path + ".rise", "must be positive");
    spec.initial_port = static_cast<int>(r.integer(w, path, "initial_port", 1));
    if (spec.initial_port < 1 || spec.initial_port > kSwitchPorts) r.fail(path + ".initial_port", "outside 1..4");
    if (const json* ports = r.field(w, path, "ports", false)) {
      if (!ports->is_object()) {
        r.fail(path + ".ports", "expected an object mapping port number to optical link id");
      } else {
        for (const auto& [k, v] : ports->items()) {
          int port = 0;
          try {
            port = std::stoi(k);
          } catch (...) {
            port = 0;
          }
          if (port < 1 || port > kSwitchPorts || !v.is_string()) {
            r.fail(path + ".ports." + k, "expected port 1..4 mapped to a link id");
            continue;
          }
          spec.ports[port] = v.get<std::string>();
        }
      }
    }
    spec.fpga.uart_latency = r.dur(w, path, "uart_latency", microseconds(100));
    if (spec.fpga.uart_latency < Duration::zero()) r.fail(path + ".uart_latency", "must be >= 0");
    if (const json* j = r.field(w, path, "actuation_jitter", false)) {
      spec.fpga.actuation_jitter = r.profile(*j, path + ".actuation_jitter", true);
      if (spec.fpga.actuation_jitter.kind != PdvKind::none &&
          (spec.fpga.actuation_jitter.lo_ps < 0 || spec.fpga.actuation_jitter.hi_ps < spec.fpga.actuation_jitter.lo_ps)) {
        r.fail(path + ".actuation_jitter", "truncation must satisfy 0 <= lo <= hi");
      }
    }
    s.switches.push_back(std::move(spec));
  }
}

void parse_monitors(Reader& r, const json& doc, Scenario& s) {
  const json& arr = r.array(doc, "", "monitors", false);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& m = arr[i];
    const std::string path = "monitors[" + std::to_string(i) + "]";
    MonitorSpec spec;
    spec.agent = r.str(m, path, "agent", {}, true);
    spec.monitor.threshold_db_below_nominal = r.real(m, path, "threshold_db", 3.0);
    spec.monitor.sample_interval = r.dur(m, path, "sample_interval", microseconds(10));
    spec.monitor.debounce_samples = static_cast<int>(r.integer(m, path, "debounce", 3));
    try {
      spec.monitor.validate();
    } catch (const Error& e) {
      r.fail(path, e.what());
    }
    s.monitors.push_back(std::move(spec));
  }
}

void parse_backups(Reader& r, const json& doc, Scenario& s) {
  const json& arr = r.array(doc, "", "backup_paths", false);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& b = arr[i];
    const std::string path = "backup_paths[" + std::to_string(i) + "]";
    BackupPath bp;
    bp.link = r.str(b, path, "link", {}, true);
    bp.backup_link = r.str(b, path, "backup", {}, true);
    if (const json* ports = r.field(b, path, "ports", true)) {
      if (!ports->is_object() || ports->empty()) {
        r.fail(path + ".ports", "expected a nonempty object mapping agent id to port");
      } else {
        for (const auto& [agent, port] : ports->items()) {
          if (!port.is_number_integer()) {
            r.fail(path + ".ports." + agent, "expected a port number");
            continue;
          }
          bp.ports.emplace_back(agent, port.get<int>());
        }
      }
    }
    s.backup_paths.push_back(std::move(bp));
  }
}

void parse_control(Reader& r, const json& doc, Scenario& s) {
  const json* c = r.field(doc, "", "control", false);
  if (!c) return;
  const std::string path = "control";
  const std::string preset = r.str(*c, path, "preset");
  if (!preset.empty()) {
    if (auto p = named_control_preset(preset)) {
      s.control = *p;
    } else {
      r.fail(path + ".preset", "unknown latency preset '" + preset + "'");
    }
  }
  ControlConfig& cc = s.control;
  cc.processing_latency = r.dur(*c, path, "processing_latency", cc.processing_latency);
  cc.scheduling_overhead = r.dur(*c, path, "scheduling_overhead", cc.scheduling_overhead);
  cc.agent_margin = r.dur(*c, path, "agent_margin", cc.agent_margin);
  cc.detection_processing = r.dur(*c, path, "detection_processing", cc.detection_processing);
  cc.offset_exchanges = static_cast<int>(r.integer(*c, path, "offset_exchanges", cc.offset_exchanges));
  cc.offset_refresh = r.dur(*c, path, "offset_refresh", cc.offset_refresh);
  cc.turnaround = r.dur(*c, path, "turnaround", cc.turnaround);
  cc.perfect_time = r.boolean(*c, path, "perfect_time", cc.perfect_time);
  for (const auto& [name, d] : {std::pair{"processing_latency", cc.processing_latency},
                                {"scheduling_overhead", cc.scheduling_overhead},
                                {"agent_margin", cc.agent_margin},
                                {"detection_processing", cc.detection_processing}}) {
    if (d < Duration::zero()) r.fail(path + "." + name, "must be >= 0");
  }
  if (cc.offset_exchanges < 1) r.fail(path + ".offset_exchanges", "must be >= 1");
  if (cc.offset_refresh <= Duration::zero()) r.fail(path + ".offset_refresh", "must be positive");
  if (cc.turnaround <= Duration::zero()) r.fail(path + ".turnaround", "must be positive");
}

void parse_ptp(Reader& r, const json& doc, Scenario& s) {
  const json* p = r.field(doc, "", "ptp", false);
  if (!p) return;
  const std::string path = "ptp";
  PtpPortConfig& pc = s.ptp;
  pc.interval = r.dur(*p, path, "interval", pc.interval);
  pc.phase = r.dur(*p, path, "phase", pc.phase);
  pc.turnaround = r.dur(*p, path, "turnaround", pc.turnaround);
  pc.servo.kp = r.real(*p, path, "kp", pc.servo.kp);
  pc.servo.ki = r.real(*p, path, "ki", pc.servo.ki);
  pc.servo.max_step_ps = r.dur(*p, path, "max_step", Duration{pc.servo.max_step_ps}).ps();
  pc.step_threshold_ps = r.dur(*p, path, "step_threshold", Duration{pc.step_threshold_ps}).ps();
  if (pc.interval <= Duration::zero()) r.fail(path + ".interval", "must be positive");
  if (pc.phase < Duration::zero() || pc.phase >= pc.interval) r.fail(path + ".phase", "must lie in [0, interval)");
  if (pc.turnaround <= Duration::zero()) r.fail(path + ".turnaround", "must be positive");
  if (pc.servo.kp < 0.0 || pc.servo.ki < 0.0) r.fail(path, "kp and ki must be >= 0");
  if (pc.servo.max_step_ps <= 0) r.fail(path + ".max_step", "must be positive");
  if (pc.step_threshold_ps <= 0) r.fail(path + ".step_threshold", "must be positive");
}

void parse_experiment(Reader& r, const json& doc, Scenario& s) {
  const json* e = r.field(doc, "", "experiment", true);
  if (!e) return;
  const std::string path = "experiment";
  const std::string kind = r.str(*e, path, "kind", {}, true);
  if (auto k = parse_kind(kind)) {
    s.kind = *k;
  } else if (!kind.empty()) {
    r.fail(path + ".kind", "expected jitter_validation, instant_recovery or scheduled_recovery");
    return;
  }
  if (s.kind == ExperimentKind::jitter_validation) {
    JitterExperiment& j = s.jitter;
    j.master_agent = r.str(*e, path, "master_agent", {}, true);
    j.slave_agent = r.str(*e, path, "slave_agent", {}, true);
    j.window_width = r.dur(*e, path, "window_width", j.window_width);
    j.on_port = static_cast<int>(r.integer(*e, path, "on_port", j.on_port));
    j.repetitions = static_cast<int>(r.integer(*e, path, "repetitions", j.repetitions));
    j.warmup = r.dur(*e, path, "warmup", j.warmup);
    j.eye_bin = r.dur(*e, path, "eye_bin", j.eye_bin);
    j.command_phase = r.dur(*e, path, "command_phase", j.command_phase);
    if (j.window_width <= Duration::zero()) r.fail(path + ".window_width", "must be positive");
    if (j.on_port < 1 || j.on_port > kSwitchPorts) r.fail(path + ".on_port", "outside 1..4");
    if (j.repetitions < 1) r.fail(path + ".repetitions", "must be >= 1");
    if (j.warmup < Duration::zero()) r.fail(path + ".warmup", "must be >= 0");
    if (j.eye_bin <= Duration::zero()) r.fail(path + ".eye_bin", "must be positive");
  } else {
    s.recovery.failure_link = r.str(*e, path, "failure_link", {}, true);
    s.recovery.failure_at = sim_at(r.dur(*e, path, "failure_at", Duration::zero(), true));
    if (s.recovery.failure_at < SimTime{0}) r.fail(path + ".failure_at", "must be >= 0");
  }
}

bool has_optical(const Scenario& s, const std::string& id) {
  for (const auto& l : s.optical_links) {
    if (l.id == id) return true;
  }
  return false;
}

bool connects(const LinkSpec& l, const std::string& a, const std::string& b) {
  return (l.end_a == a && l.end_b == b) || (l.end_a == b && l.end_b == a);
}

void cross_check(Reader& r, Scenario& s) {
  check_unique(r, s.nodes, "nodes");
  check_unique(r, s.links, "links");
  check_unique(r, s.optical_links, "optical_links");
  check_unique(r, s.switches, "switches");

  int controllers = 0;
  int agents = 0;
  for (const auto& n : s.nodes) {
    controllers += n.role == NodeRole::controller;
    agents += n.role == NodeRole::agent;
  }
  if (controllers == 0) r.fail("nodes", "controller section missing: exactly one node with role 'controller' is required");
  if (controllers > 1) r.fail("nodes", "exactly one controller allowed, found " + std::to_string(controllers));
  if (agents == 0) r.fail("nodes", "at least one node with role 'agent' is required");

  std::map<std::string, std::string> switch_owner;
  for (const auto& n : s.nodes) {
    const std::string path = "nodes[" + n.id + "]";
    if (n.clock.drift_ppb > s.max_drift_ppb || n.clock.drift_ppb < -s.max_drift_ppb) {
      r.fail(path + ".clock.drift_ppb", "|drift| exceeds max_drift_ppb " + std::to_string(s.max_drift_ppb));
    }
    if (n.pps.period <= Duration::zero()) r.fail(path + ".pps.period", "must be positive");
    if (n.role == NodeRole::grandmaster && (n.clock.offset_ps != 0 || n.clock.drift_ppb != 0)) {
      r.fail(path + ".clock", "grandmaster is the reference clock: offset and drift must be 0");
    }
    if (n.role != NodeRole::agent) {
      if (n.ptp) r.fail(path + ".ptp", "only agents are disciplined over PTP");
      continue;
    }
    if (n.switch_id.empty()) {
      r.fail(path + ".switch", "agent needs a switch");
    } else if (!s.switch_spec(n.switch_id)) {
      r.fail(path + ".switch", "agent '" + n.id + "' references unknown switch '" + n.switch_id + "'");
    } else if (auto [it, fresh] = switch_owner.emplace(n.switch_id, n.id); !fresh) {
      r.fail(path + ".switch", "switch '" + n.switch_id + "' already driven by agent '" + it->second + "'");
    }
    if (n.control_link.empty()) {
      r.fail(path + ".control_link", "agent needs a control link to the controller");
    } else if (const LinkSpec* l = s.link(n.control_link); !l) {
      r.fail(path + ".control_link", "agent '" + n.id + "' references unknown link '" + n.control_link + "'");
    } else if (controllers == 1 && !connects(*l, n.id, s.controller().id)) {
      r.fail(path + ".control_link", "link '" + l->id + "' does not connect agent '" + n.id + "' and the controller");
    }
    if (n.ptp) {
      const NodeSpec* m = s.node(n.ptp->master);
      if (!m) {
        r.fail(path + ".ptp.master", "agent '" + n.id + "' references unknown node '" + n.ptp->master + "'");
      } else if (m->role != NodeRole::grandmaster) {
        r.fail(path + ".ptp.master", "'" + m->id + "' is not a grandmaster");
      }
      if (const LinkSpec* l = s.link(n.ptp->link); !l) {
        r.fail(path + ".ptp.link", "agent '" + n.id + "' references unknown link '" + n.ptp->link + "'");
      } else if (!connects(*l, n.id, n.ptp->master)) {
        r.fail(path + ".ptp.link", "link '" + l->id + "' does not connect '" + n.id + "' and '" + n.ptp->master + "'");
      }
    }
  }

  for (const auto& l : s.links) {
    for (const auto& end : {l.end_a, l.end_b}) {
      if (!end.empty() && !s.node(end)) {
        r.fail("links[" + l.id + "].endpoints", "link '" + l.id + "' references unknown node '" + end + "'");
      }
    }
  }

  for (const auto& w : s.switches) {
    for (const auto& [port, link] : w.ports) {
      if (!has_optical(s, link)) {
        r.fail("switches[" + w.id + "].ports." + std::to_string(port),
               "switch '" + w.id + "' references unknown optical link '" + link + "'");
      }
    }
  }

  for (std::size_t i = 0; i < s.monitors.size(); ++i) {
    const NodeSpec* n = s.node(s.monitors[i].agent);
    if (!n || n->role != NodeRole::agent) {
      r.fail("monitors[" + std::to_string(i) + "].agent", "unknown agent '" + s.monitors[i].agent + "'");
    }
  }

  for (std::size_t i = 0; i < s.backup_paths.size(); ++i) {
    const BackupPath& b = s.backup_paths[i];
    const std::string path = "backup_paths[" + std::to_string(i) + "]";
    if (!has_optical(s, b.link)) r.fail(path + ".link", "unknown optical link '" + b.link + "'");
    if (!has_optical(s, b.backup_link)) r.fail(path + ".backup", "unknown optical link '" + b.backup_link + "'");
    for (const auto& [agent, port] : b.ports) {
      const NodeSpec* n = s.node(agent);
      if (!n || n->role != NodeRole::agent) {
        r.fail(path + ".ports." + agent, "backup path for '" + b.link + "' references unknown agent '" + agent + "'");
        continue;
      }
      if (port < 1 || port > kSwitchPorts) {
        r.fail(path + ".ports." + agent, "port outside 1..4");
        continue;
      }
      if (const SwitchSpec* w = s.switch_spec(n->switch_id)) {
        auto it = w->ports.find(port);
        if (it == w->ports.end() || it->second != b.backup_link) {
          r.fail(path + ".ports." + agent,
                 "port " + std::to_string(port) + " of switch '" + w->id + "' is not wired to '" + b.backup_link + "'");
        }
      }
    }
  }

  if (s.duration <= Duration::zero()) r.fail("duration", "must be positive");

  if (s.kind == ExperimentKind::jitter_validation) {
    const JitterExperiment& j = s.jitter;
    for (const auto& [key, id] : {std::pair{"master_agent", j.master_agent}, {"slave_agent", j.slave_agent}}) {
      const NodeSpec* n = s.node(id);
      if (!id.empty() && (!n || n->role != NodeRole::agent)) {
        r.fail(std::string("experiment.") + key, "unknown agent '" + id + "'");
      } else if (n && !n->pps.enabled) {
        r.fail(std::string("experiment.") + key, "agent '" + id + "' has 1PPS disabled");
      }
    }
    if (!j.master_agent.empty() && j.master_agent == j.slave_agent) {
      r.fail("experiment.slave_agent", "master and slave must be different agents");
    }
    if (const NodeSpec* m = s.node(j.master_agent); m && j.repetitions > 0) {
      const Duration needed = j.warmup + m->pps.period * (j.repetitions + 1);
      if (s.duration < needed) {
        r.fail("duration", "jitter run needs at least " + format_duration(needed) + " (warmup + repetitions + 1 period)");
      }
      if (j.command_phase < Duration::zero() || j.command_phase >= m->pps.period) {
        r.fail("experiment.command_phase", "must lie in [0, PPS period)");
      }
    }
  } else {
    const RecoveryExperiment& e = s.recovery;
    if (!e.failure_link.empty() && !has_optical(s, e.failure_link)) {
      r.fail("experiment.failure_link", "unknown optical link '" + e.failure_link + "'");
    }
    bool has_backup = false;
    for (const auto& b : s.backup_paths) has_backup |= b.link == e.failure_link;
    if (!e.failure_link.empty() && !has_backup) {
      r.fail("experiment.failure_link", "no backup path declared for '" + e.failure_link + "'");
    }
    if (s.monitors.empty()) r.fail("monitors", "recovery experiments need at least one monitor");
    if (sim_at(s.duration) <= e.failure_at) r.fail("experiment.failure_at", "must be before the end of the run");
  }
}

}  // namespace

Scenario parse_scenario(const json& doc) {
  Reader r;
  Scenario s;
  if (!doc.is_object()) throw ValidationFailed({"<root>: expected a JSON object"});
  s.source = doc;
  s.id = r.str(doc, "", "id", {}, true);
  if (const json* seed = r.field(doc, "", "root_seed", true)) {
    if (seed->is_number_unsigned() || (seed->is_number_integer() && seed->get<std::int64_t>() >= 0)) {
      s.root_seed = seed->get<std::uint64_t>();
    } else {
      r.fail("root_seed", "expected a nonnegative integer");
    }
  }
  s.duration = r.dur(doc, "", "duration", Duration::zero(), true);
  s.max_drift_ppb = r.integer(doc, "", "max_drift_ppb", kDefaultMaxDriftPpb);
  if (s.max_drift_ppb < 0 || s.max_drift_ppb >= 1'000'000'000) r.fail("max_drift_ppb", "must lie in [0, 1e9)");

  parse_experiment(r, doc, s);
  parse_nodes(r, doc, s);
  parse_links(r, doc, s);
  parse_optical(r, doc, s);
  parse_switches(r, doc, s);
  parse_monitors(r, doc, s);
  parse_backups(r, doc, s);
  parse_control(r, doc, s);
  parse_ptp(r, doc, s);
  cross_check(r, s);

  // Paths were built with a leading "." for top-level fields.
  for (auto& issue : r.issues) {
    if (!issue.empty() && issue.front() == '.') issue.erase(0, 1);
  }
  if (!r.issues.empty()) throw ValidationFailed(std::move(r.issues));
  return s;
}

Scenario parse_scenario_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, e.what());
  }
  return parse_scenario(doc);
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot open scenario file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scenario_text(buf.str());
  } catch (const ValidationFailed&) {
    throw;
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::filesystem::path bundled_scenario_path(std::string_view name) {
  return std::filesystem::path(OPTISYNC_SCENARIO_DIR) / (std::string(name) + ".json");
}

json& resolve_parameter(json& doc, std::string_view path) {
  if (path.empty()) throw Error(Errc::UnknownParameter, "empty parameter path");
  json* cur = &doc;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    const std::size_t dot = path.find('.', pos);
    const std::string token(path.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos));
    json* next = nullptr;
    if (cur->is_object()) {
      auto it = cur->find(token);
      if (it != cur->end()) next = &*it;
    } else if (cur->is_array()) {
      for (auto& elem : *cur) {
        if (elem.is_object() && elem.contains("id") && elem["id"] == token) next = &elem;
      }
    }
    if (!next) throw Error(Errc::UnknownParameter, "parameter path '" + std::string(path) + "' does not resolve at '" + token + "'");
    cur = next;
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  if (cur->is_number()) return *cur;
  if (cur->is_string()) {
    try {
      parse_duration(cur->get<std::string>());
      return *cur;
    } catch (const Error&) {
    }
  }
  throw Error(Errc::UnknownParameter, "parameter '" + std::string(path) + "' is not a numeric or duration field");
}

json with_parameter(const json& doc, std::string_view path, std::string_view value) {
  json copy = doc;
  json& target = resolve_parameter(copy, path);
  const std::string v(value);
  if (target.is_string()) {
    try {
      parse_duration(v);
    } catch (const Error& e) {
      throw Error(Errc::UnknownParameter, "value '" + v + "' for duration parameter '" + std::string(path) + "': " + e.what());
    }
    target = v;
    return copy;
  }
  try {
    std::size_t used = 0;
    if (target.is_number_integer() && v.find_first_of(".eE") == std::string::npos) {
      const long long n = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      target = n;
    } else {
      const double d = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      target = d;
    }
  } catch (const std::exception&) {
    throw Error(Errc::UnknownParameter, "value '" + v + "' is not a number for parameter '" + std::string(path) + "'");
  }
  return copy;
}

}  // namespace optisync
